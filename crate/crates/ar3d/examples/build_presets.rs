//! Walks the four model presets at the standard 35x20x20 input, printing the
//! layer stack, the shape after every layer, and parameter counts.
//!
//! Run with: cargo run --example build_presets

use ar3d::nn::{build_preset, expected_param_shapes, LayerShape, LayerSpec};

fn main() -> ar3d::Result<()> {
    let input_shape = [1, 35, 20, 20];
    let num_classes = 6;

    for model_id in 1u8..=4 {
        let spec = build_preset(model_id, input_shape, num_classes)?;
        println!("model {} on input {:?}:", model_id, input_shape);

        let shapes = spec.layer_shapes()?;
        for (layer, shape) in spec.layers.iter().zip(&shapes) {
            let name = match layer {
                LayerSpec::Conv3d {
                    out_channels, geom, ..
                } => format!("conv3d {} filters {:?}", out_channels, geom.kernel),
                LayerSpec::MaxPool3d => "maxpool3d 2x2x2".to_string(),
                LayerSpec::Flatten => "flatten".to_string(),
                LayerSpec::Dense { units, .. } => format!("dense {}", units),
                LayerSpec::Dropout { p } => format!("dropout p={}", p),
            };
            let shape = match shape {
                LayerShape::Volume(dims) => format!("{:?}", dims),
                LayerShape::Flat(n) => format!("[{}]", n),
            };
            println!("  {:<28} -> {}", name, shape);
        }

        let total: usize = expected_param_shapes(&spec)?
            .iter()
            .map(|(_, shape)| shape.iter().product::<usize>())
            .sum();
        println!("  parameters: {}", total);
        println!("  digest: {:016x}", spec.digest());
        println!();
    }
    Ok(())
}
