//! Edge runner behavior through its public API: directory watching, event
//! ordering, webhook delivery with transient failures, and the undelivered
//! fallback log.

mod common;

use common::MockWebhook;

use std::fs;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use tempfile::TempDir;

use ar3d::archive::WeightArchive;
use ar3d::data::{synth_generate, SynthConfig};
use ar3d::edge::{EdgeConfig, EdgeEvent, EdgeRunner, Sink, WebhookConfig};
use ar3d::nn::{build_preset, init_params};
use ar3d::vision::PreprocessConfig;

fn small_preprocess() -> PreprocessConfig {
    PreprocessConfig {
        seconds: 2.0,
        num_frames: 6,
        target_h: 12,
        target_w: 12,
        bg_sub: false,
        bg_threshold: None,
    }
}

/// Archive with initialized (untrained) weights plus a pool of clip files to
/// drop into watch directories.
fn fixture(dir: &Path, classes: usize, clips: usize) -> (WeightArchive, Vec<std::path::PathBuf>) {
    let cfg = SynthConfig {
        classes,
        clips_per_class: clips.div_ceil(classes).max(3),
        frames: 10,
        height: 16,
        width: 16,
        seed: 21,
        ..SynthConfig::default()
    };
    let manifest = synth_generate(&cfg, dir).unwrap();
    let preprocess = small_preprocess();
    let spec = build_preset(1, [1, 6, 12, 12], classes).unwrap();
    let params = init_params(&spec, 33).unwrap();
    let archive = WeightArchive::new(spec, params, preprocess, manifest.classes.clone()).unwrap();
    let paths = manifest.entries.iter().map(|e| e.path.clone()).take(clips).collect();
    (archive, paths)
}

fn fast_config(input: &Path) -> EdgeConfig {
    let mut cfg = EdgeConfig::new(input);
    cfg.poll_interval = Duration::from_millis(20);
    cfg
}

fn poll_until(runner: &mut EdgeRunner, want: usize, budget: Duration) -> Vec<EdgeEvent> {
    let started = Instant::now();
    let mut events = Vec::new();
    while events.len() < want {
        assert!(
            started.elapsed() < budget,
            "collected {} of {} events before the {:?} budget ran out",
            events.len(),
            want,
            budget
        );
        events.extend(runner.poll_once().unwrap());
        std::thread::sleep(Duration::from_millis(20));
    }
    events
}

#[test]
fn ten_dropped_clips_classify_in_name_order_and_move_to_done() {
    let fixtures = TempDir::new().unwrap();
    let (archive, clips) = fixture(fixtures.path(), 2, 10);
    let watch = TempDir::new().unwrap();
    for (i, clip) in clips.iter().enumerate() {
        fs::copy(clip, watch.path().join(format!("clip-{:02}.rvid", i))).unwrap();
    }

    let collected = Arc::new(Mutex::new(Vec::new()));
    let mut runner = EdgeRunner::new(
        archive,
        fast_config(watch.path()),
        Sink::Memory(collected.clone()),
    )
    .unwrap();
    let events = poll_until(&mut runner, 10, Duration::from_secs(30));
    runner.shutdown().unwrap();

    let ids: Vec<&str> = events.iter().map(|e| e.id()).collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted, "same-poll arrivals must classify in name order");
    for e in &events {
        assert!(matches!(e, EdgeEvent::Classification(_)));
    }

    // inputs moved aside so a restart never reclassifies them
    let done = watch.path().join("done");
    assert_eq!(fs::read_dir(&done).unwrap().count(), 10);
    let leftovers = fs::read_dir(watch.path())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().is_file())
        .count();
    assert_eq!(leftovers, 0);
    assert_eq!(collected.lock().unwrap().len(), 10);
}

#[test]
fn webhook_delivery_survives_transient_failures() {
    let fixtures = TempDir::new().unwrap();
    let (archive, clips) = fixture(fixtures.path(), 2, 1);
    let watch = TempDir::new().unwrap();
    fs::copy(&clips[0], watch.path().join("one.rvid")).unwrap();

    let server = MockWebhook::start(vec![500, 500, 200]);
    let mut webhook = WebhookConfig::new(server.url().to_string());
    webhook.base_delay_ms = 5;
    let mut runner =
        EdgeRunner::new(archive, fast_config(watch.path()), Sink::Webhook(webhook)).unwrap();
    let events = poll_until(&mut runner, 1, Duration::from_secs(20));
    runner.shutdown().unwrap();

    assert_eq!(events.len(), 1);
    assert_eq!(server.hits(), 3, "two failures then one success");
    let bodies = server.bodies();
    assert_eq!(bodies.len(), 1);
    let parsed: serde_json::Value = serde_json::from_str(&bodies[0]).unwrap();
    assert_eq!(parsed["id"], "one.rvid");
    assert!(parsed["probs"].as_array().unwrap().len() == 2);
}

#[test]
fn exhausted_retries_append_to_the_undelivered_log() {
    let fixtures = TempDir::new().unwrap();
    let (archive, clips) = fixture(fixtures.path(), 2, 1);
    let watch = TempDir::new().unwrap();
    fs::copy(&clips[0], watch.path().join("stuck.rvid")).unwrap();

    let server = MockWebhook::start(vec![503]);
    let mut webhook = WebhookConfig::new(server.url().to_string());
    webhook.max_retries = 1;
    webhook.base_delay_ms = 5;
    let mut runner =
        EdgeRunner::new(archive, fast_config(watch.path()), Sink::Webhook(webhook)).unwrap();
    poll_until(&mut runner, 1, Duration::from_secs(20));
    runner.shutdown().unwrap();

    let log = watch.path().join("undelivered.jsonl");
    let text = fs::read_to_string(&log).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1);
    let parsed: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
    assert_eq!(parsed["id"], "stuck.rvid");
    assert_eq!(server.bodies().len(), 0);
}

#[test]
fn malformed_clip_reports_an_error_event_and_the_runner_continues() {
    let fixtures = TempDir::new().unwrap();
    let (archive, clips) = fixture(fixtures.path(), 2, 1);
    let fingerprint = archive.fingerprint();
    let watch = TempDir::new().unwrap();
    fs::write(watch.path().join("bad.rvid"), b"not a clip at all").unwrap();
    fs::copy(&clips[0], watch.path().join("good.rvid")).unwrap();

    let mut runner =
        EdgeRunner::new(archive, fast_config(watch.path()), Sink::Stdout).unwrap();
    let events = poll_until(&mut runner, 2, Duration::from_secs(20));
    runner.shutdown().unwrap();

    match &events[0] {
        EdgeEvent::Error(e) => {
            assert_eq!(e.id, "bad.rvid");
            assert_eq!(e.model_fingerprint, fingerprint);
        }
        other => panic!("expected an error event first, got {:?}", other),
    }
    match &events[1] {
        EdgeEvent::Classification(c) => assert_eq!(c.id, "good.rvid"),
        other => panic!("expected a classification second, got {:?}", other),
    }
}
