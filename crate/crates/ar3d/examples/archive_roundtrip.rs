//! Saves a weight archive, reloads it, and shows that the round trip is
//! exact: byte-identical files, equal fingerprints, bit-identical
//! predictions.
//!
//! Run with: cargo run --release --example archive_roundtrip

use ar3d::archive::WeightArchive;
use ar3d::data::{load_clip, synth_generate, SynthConfig};
use ar3d::nn::{build_preset, init_params};
use ar3d::train::predict;
use ar3d::vision::PreprocessConfig;

fn main() -> ar3d::Result<()> {
    let dir = tempfile::TempDir::new()?;
    let synth = SynthConfig {
        classes: 3,
        clips_per_class: 3,
        frames: 10,
        height: 16,
        width: 16,
        seed: 12,
        ..SynthConfig::default()
    };
    let manifest = synth_generate(&synth, dir.path())?;

    let preprocess = PreprocessConfig {
        seconds: 0.8,
        num_frames: 8,
        target_h: 12,
        target_w: 12,
        bg_sub: false,
        bg_threshold: None,
    };
    let spec = build_preset(1, [1, 8, 12, 12], manifest.classes.len())?;
    let params = init_params(&spec, 99)?;
    let archive = WeightArchive::new(spec, params, preprocess, manifest.classes.clone())?;

    let first = dir.path().join("first.ar3d");
    archive.save(&first)?;
    let reloaded = WeightArchive::load(&first)?;
    let second = dir.path().join("second.ar3d");
    reloaded.save(&second)?;

    let bytes_a = std::fs::read(&first)?;
    let bytes_b = std::fs::read(&second)?;
    println!("archive size: {} bytes", bytes_a.len());
    println!("save -> load -> save byte-identical: {}", bytes_a == bytes_b);
    println!("fingerprint before: {}", archive.fingerprint());
    println!("fingerprint after:  {}", reloaded.fingerprint());

    let mut matched = 0usize;
    let mut total = 0usize;
    for entry in &manifest.entries {
        let clip = load_clip(&entry.path, None)?;
        let a = predict(
            &archive.spec,
            &archive.params,
            &archive.classes,
            &clip,
            &archive.preprocess,
        )?;
        let b = predict(
            &reloaded.spec,
            &reloaded.params,
            &reloaded.classes,
            &clip,
            &reloaded.preprocess,
        )?;
        let bits_equal = a
            .probs
            .iter()
            .zip(&b.probs)
            .all(|(x, y)| x.to_bits() == y.to_bits());
        matched += usize::from(bits_equal && a.class_index == b.class_index);
        total += 1;
    }
    println!("bit-identical predictions: {matched}/{total}");
    Ok(())
}
