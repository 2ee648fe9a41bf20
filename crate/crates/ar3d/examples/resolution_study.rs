//! Re-trains the same model at several input resolutions and reports how
//! accuracy and per-epoch wall time move with frame size.
//!
//! Run with: cargo run --release --example resolution_study
//!
//! The sweep re-trains from scratch at each size with the same seed, so the
//! rows differ only in resolution. Expect a few minutes of CPU time.

use ar3d::data::{synth_generate, SynthConfig};
use ar3d::train::{resolution_study, study_csv, TrainConfig};
use ar3d::vision::PreprocessConfig;

fn main() -> ar3d::Result<()> {
    let dir = tempfile::TempDir::new()?;
    let synth = SynthConfig {
        classes: 4,
        clips_per_class: 10,
        frames: 12,
        height: 40,
        width: 40,
        seed: 2,
        ..SynthConfig::default()
    };
    let manifest = synth_generate(&synth, dir.path())?;

    let mut cfg = TrainConfig::for_model(3)?;
    cfg.epochs = 3;
    cfg.batch_size = 8;
    cfg.preprocess = PreprocessConfig {
        seconds: 1.2,
        num_frames: 12,
        target_h: 12,
        target_w: 12,
        bg_sub: true,
        bg_threshold: None,
    };

    let rows = resolution_study(&manifest, &cfg, &[12, 20, 28])?;
    print!("{}", study_csv(&rows));
    for row in &rows {
        println!(
            "{0}x{0}: accuracy {1:.3}, {2:.2}s per epoch",
            row.size, row.accuracy, row.epoch_seconds
        );
    }
    Ok(())
}
