//! Starts the directory-watching inference runner against an in-memory
//! sink, drops clips into the watched directory, and prints the events.
//!
//! Run with: cargo run --release --example edge_watch
//!
//! The same runner drives the `ar3d watch` subcommand; there the sink is
//! stdout or a webhook and the loop runs until the process is killed.

use std::sync::{Arc, Mutex};

use ar3d::archive::WeightArchive;
use ar3d::data::{synth_generate, write_rvid, SynthConfig};
use ar3d::edge::{EdgeConfig, EdgeRunner, Sink};
use ar3d::nn::{build_preset, init_params};
use ar3d::tensor::Tensor;
use ar3d::vision::{Clip, PreprocessConfig};

fn main() -> ar3d::Result<()> {
    let dataset_dir = tempfile::TempDir::new()?;
    let synth = SynthConfig {
        classes: 2,
        clips_per_class: 3,
        frames: 10,
        height: 16,
        width: 16,
        seed: 5,
        ..SynthConfig::default()
    };
    let manifest = synth_generate(&synth, dataset_dir.path())?;

    let preprocess = PreprocessConfig {
        seconds: 0.8,
        num_frames: 8,
        target_h: 12,
        target_w: 12,
        bg_sub: false,
        bg_threshold: None,
    };
    let spec = build_preset(1, [1, 8, 12, 12], manifest.classes.len())?;
    let params = init_params(&spec, 31)?;
    let archive = WeightArchive::new(spec, params, preprocess, manifest.classes.clone())?;

    let watch_dir = tempfile::TempDir::new()?;
    let store = Arc::new(Mutex::new(Vec::new()));
    let mut runner = EdgeRunner::new(
        archive,
        EdgeConfig::new(watch_dir.path()),
        Sink::Memory(store.clone()),
    )?;

    // Drop two dataset clips, one clip built on the fly, and one truncated
    // file; the runner reports the bad one as an error event and keeps
    // going.
    for (i, entry) in manifest.entries.iter().take(2).enumerate() {
        std::fs::copy(&entry.path, watch_dir.path().join(format!("clip-{i}.rvid")))?;
    }
    let frames: Vec<f32> = (0..10 * 16 * 16).map(|i| (i % 256) as f32 / 255.0).collect();
    let gradient = Clip::new(Tensor::new(vec![10, 16, 16], frames)?, 10.0)?;
    write_rvid(&watch_dir.path().join("gradient.rvid"), &gradient)?;
    std::fs::write(watch_dir.path().join("truncated.rvid"), b"RVID")?;

    // First poll records sizes, second poll sees them unchanged and runs
    // inference. A long-lived deployment calls run() with a stop flag
    // instead.
    runner.poll_once()?;
    let events = runner.poll_once()?;
    println!("poll produced {} events:", events.len());
    for event in &events {
        println!("  {}", event.to_json());
    }
    runner.shutdown()?;

    let delivered = store.lock().expect("sink store");
    println!("sink received {} events", delivered.len());
    let done = watch_dir.path().join("done");
    let mut moved: Vec<String> = std::fs::read_dir(&done)?
        .map(|e| e.map(|e| e.file_name().to_string_lossy().into_owned()))
        .collect::<std::io::Result<_>>()?;
    moved.sort();
    println!("moved to done/: {}", moved.join(", "));
    Ok(())
}
