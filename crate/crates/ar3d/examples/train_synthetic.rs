//! Trains a small preset on synthetic data end to end: per-epoch history,
//! best-checkpoint selection, test accuracy, and a saved weight archive.
//!
//! Run with: cargo run --release --example train_synthetic

use ar3d::archive::WeightArchive;
use ar3d::data::synth_generate;
use ar3d::data::SynthConfig;
use ar3d::train::{evaluate, train, TrainConfig};
use ar3d::vision::PreprocessConfig;

fn main() -> ar3d::Result<()> {
    let dir = tempfile::TempDir::new()?;
    let synth = SynthConfig {
        classes: 4,
        clips_per_class: 12,
        frames: 12,
        height: 20,
        width: 20,
        seed: 7,
        ..SynthConfig::default()
    };
    let manifest = synth_generate(&synth, dir.path())?;
    println!("dataset: {} clips, {} classes", manifest.entries.len(), manifest.classes.len());

    let mut cfg = TrainConfig::for_model(2)?;
    cfg.epochs = 4;
    cfg.batch_size = 8;
    cfg.preprocess = PreprocessConfig {
        seconds: 1.2,
        num_frames: 12,
        target_h: 16,
        target_w: 16,
        bg_sub: true,
        bg_threshold: None,
    };

    let result = train(&manifest, &cfg)?;
    println!("epoch,train_loss,val_loss,val_acc,lr");
    for row in result.history.rows() {
        println!(
            "{},{:.4},{:.4},{:.4},{:.6}",
            row.epoch, row.train_loss, row.val_loss, row.val_acc, row.lr
        );
    }
    println!("best checkpoint: epoch {}", result.best_epoch);

    let (accuracy, matrix) = evaluate(&result.spec, &result.best_params, &manifest, &cfg.preprocess)?;
    println!("test accuracy {:.4} over {} clips", accuracy, matrix.total());
    print!("{}", matrix.to_csv());

    let archive = WeightArchive::new(
        result.spec,
        result.best_params,
        cfg.preprocess,
        manifest.classes,
    )?;
    let path = dir.path().join("model.ar3d");
    archive.save(&path)?;
    println!("archived to {} ({})", path.display(), archive.fingerprint());
    Ok(())
}
