//! Assembles a model that is not one of the four presets: a slim two-stage
//! network with asymmetric kernels and a narrow hidden layer, chain-checked
//! before any parameter exists.
//!
//! Run with: cargo run --release --example custom_model

use ar3d::nn::{
    build_preset, init_params, model_forward, stack_samples, Activation, LayerShape, LayerSpec,
    Mode, ModelSpec,
};
use ar3d::tensor::{softmax, ConvGeom, Tensor};

fn describe(spec: &ModelSpec) -> ar3d::Result<()> {
    println!("input {:?}", spec.input_shape);
    for (layer, shape) in spec.layers.iter().zip(spec.layer_shapes()?) {
        let shape = match shape {
            LayerShape::Volume(v) => format!("{:?}", v),
            LayerShape::Flat(n) => format!("[{}]", n),
        };
        println!("  {:<34} -> {}", format!("{:?}", layer), shape);
    }
    Ok(())
}

fn main() -> ar3d::Result<()> {
    let spec = ModelSpec {
        input_shape: [1, 12, 24, 24],
        num_classes: 5,
        layers: vec![
            LayerSpec::Conv3d {
                out_channels: 8,
                geom: ConvGeom::new((3, 3, 3))?,
                activation: Activation::Relu,
            },
            LayerSpec::MaxPool3d,
            LayerSpec::Conv3d {
                out_channels: 12,
                // spatial-only kernel: no temporal mixing in this stage
                geom: ConvGeom::new((1, 5, 5))?,
                activation: Activation::Relu,
            },
            LayerSpec::MaxPool3d,
            LayerSpec::Flatten,
            LayerSpec::Dense {
                units: 32,
                activation: Activation::Relu,
            },
            LayerSpec::Dropout { p: 0.25 },
            LayerSpec::Dense {
                units: 5,
                activation: Activation::None,
            },
        ],
    };
    println!("custom model (digest {:016x})", spec.digest());
    describe(&spec)?;

    let params = init_params(&spec, 404)?;
    let total: usize = params.tensors().map(|t| t.len()).sum();
    println!("parameters: {}", total);

    // One eval-mode forward pass over a two-sample batch.
    let sample = |offset: f32| {
        let data: Vec<f32> = (0..12 * 24 * 24)
            .map(|i| (i as f32 * 0.37 + offset).sin() * 0.5 + 0.5)
            .collect();
        Tensor::new(vec![1, 12, 24, 24], data)
    };
    let batch = stack_samples(&[sample(0.0)?, sample(1.3)?])?;
    let (logits, _) = model_forward(&spec, &params, &batch, Mode::Eval, 0)?;
    for row in 0..2 {
        let row_logits = Tensor::new(vec![5], logits.data()[row * 5..(row + 1) * 5].to_vec())?;
        let probs = softmax(&row_logits)?;
        let line: Vec<String> = probs.iter().map(|p| format!("{:.4}", p)).collect();
        println!("sample {} probabilities: [{}]", row, line.join(", "));
    }

    // The same shape rules protect presets and custom stacks alike: preset 3
    // pools three times, so a 4-frame clip cannot feed it.
    let too_shallow = build_preset(3, [1, 4, 8, 8], 5);
    println!(
        "preset 3 on a 4-frame input: {:?}",
        too_shallow.err().map(|e| e.to_string())
    );
    Ok(())
}
