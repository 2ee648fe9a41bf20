//! Runs each preprocessing stage on one synthetic clip and prints what it
//! does to the data: frame sampling, background subtraction, and resizing.
//!
//! Run with: cargo run --example preprocess_pipeline

use ar3d::data::{load_clip, synth_generate, SynthConfig};
use ar3d::vision::{background_subtract, preprocess, resize_bilinear, sample_frames, PreprocessConfig};

fn main() -> ar3d::Result<()> {
    let dir = tempfile::TempDir::new()?;
    let synth = SynthConfig {
        classes: 1,
        clips_per_class: 3,
        frames: 40,
        height: 48,
        width: 64,
        ..SynthConfig::default()
    };
    let manifest = synth_generate(&synth, dir.path())?;
    let clip = load_clip(&manifest.entries[0].path, None)?;
    let (t, h, w) = clip.dims();
    println!("source clip: {} frames of {}x{} at {} fps", t, h, w, clip.fps());

    // pick 16 frames at equal strides from the first 2 seconds
    let sampled = sample_frames(&clip, 2.0, 16)?;
    println!("sampled:     {} frames (stride {})", sampled.dims().0, t / 16);

    // difference against the per-pixel temporal median
    let subtracted = background_subtract(&sampled, None)?;
    let energy: f64 = subtracted.frames().iter().map(|&v| v as f64).sum();
    println!(
        "subtracted:  mean residual {:.4} (static background cancels)",
        energy / subtracted.frames().len() as f64
    );

    // downscale one frame bilinearly
    let frame0 = ar3d::Tensor::new(vec![h, w], subtracted.frame(0).to_vec())?;
    let small = resize_bilinear(&frame0, (20, 20))?;
    println!("resized:     frame 0 {}x{} -> {:?}", h, w, small.shape());

    // the one-call pipeline produces the model input layout
    let cfg = PreprocessConfig {
        seconds: 2.0,
        num_frames: 16,
        target_h: 20,
        target_w: 20,
        bg_sub: true,
        bg_threshold: None,
    };
    let tensor = preprocess(&clip, &cfg)?;
    println!("pipeline:    model input {:?} (channels, frames, h, w)", tensor.shape());
    Ok(())
}
