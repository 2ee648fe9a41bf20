//! Polling edge runner: classify clips dropped into a directory and push
//! JSON events to a sink.
//!
//! The runner loads a weight archive once, then watches an input directory
//! for RVID files or PGM-frame directories. A candidate is processed only
//! after its size is unchanged between two polls (completed-write
//! detection), strictly in arrival order. Processed inputs move to a `done/`
//! subdirectory; malformed clips become error events instead of crashes.
//! Delivery runs on its own thread behind a bounded queue, so a slow sink
//! applies backpressure to ingestion rather than dropping events.

pub mod webhook;

pub use webhook::WebhookConfig;

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{sync_channel, SyncSender};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::archive::WeightArchive;
use crate::data::load_clip;
use crate::error::{Error, Result};
use crate::train::predict;

/// A successful classification, one JSON object per event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationEvent {
    /// Clip identifier: the dropped file or directory name.
    pub id: String,
    pub class: String,
    pub class_index: usize,
    pub probs: Vec<f64>,
    /// RFC 3339 UTC timestamp.
    pub ts: String,
    /// SHA-256 of the archive header.
    pub model_fingerprint: String,
}

impl ClassificationEvent {
    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "event probabilities sum to {}, not 1",
                sum
            )));
        }
        if self.class_index >= self.probs.len() {
            return Err(Error::Config(format!(
                "event class index {} out of range for {} probabilities",
                self.class_index,
                self.probs.len()
            )));
        }
        Ok(())
    }
}

/// A clip that could not be processed; the runner keeps going.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorEvent {
    pub id: String,
    pub error: String,
    pub ts: String,
    pub model_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EdgeEvent {
    Classification(ClassificationEvent),
    Error(ErrorEvent),
}

impl EdgeEvent {
    pub fn id(&self) -> &str {
        match self {
            EdgeEvent::Classification(e) => &e.id,
            EdgeEvent::Error(e) => &e.id,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("events serialize")
    }
}

/// Where events go.
#[derive(Debug, Clone)]
pub enum Sink {
    /// One JSON line per event on stdout.
    Stdout,
    /// POST each event; non-2xx responses retry with exponential backoff.
    Webhook(WebhookConfig),
    /// Collects events in memory (testing and embedding).
    Memory(Arc<Mutex<Vec<EdgeEvent>>>),
}

/// Sends one event to the sink, honoring the webhook retry policy.
pub fn dispatch_event(event: &EdgeEvent, sink: &Sink) -> Result<()> {
    match sink {
        Sink::Stdout => {
            let mut out = std::io::stdout().lock();
            writeln!(out, "{}", event.to_json())?;
            Ok(())
        }
        Sink::Webhook(cfg) => webhook::post_json_with_retry(cfg, &event.to_json()),
        Sink::Memory(store) => {
            store.lock().expect("sink store").push(event.clone());
            Ok(())
        }
    }
}

#[derive(Debug, Clone)]
pub struct EdgeConfig {
    pub input_dir: PathBuf,
    pub poll_interval: Duration,
    /// Events buffered between classification and delivery; a full queue
    /// blocks ingestion.
    pub queue_capacity: usize,
    /// Overrides the fps of PGM-directory clips (RVID carries its own).
    pub fps_override: Option<f64>,
}

impl EdgeConfig {
    pub fn new(input_dir: impl Into<PathBuf>) -> Self {
        EdgeConfig {
            input_dir: input_dir.into(),
            poll_interval: Duration::from_millis(500),
            queue_capacity: 64,
            fps_override: None,
        }
    }
}

struct Pending {
    size: u64,
    first_seen: u64,
}

pub struct EdgeRunner {
    archive: WeightArchive,
    fingerprint: String,
    cfg: EdgeConfig,
    pending: HashMap<PathBuf, Pending>,
    poll_counter: u64,
    tx: Option<SyncSender<EdgeEvent>>,
    dispatcher: Option<JoinHandle<()>>,
}

impl EdgeRunner {
    /// Loads nothing lazily: the archive is already parsed, the input
    /// directory must exist, and the dispatcher thread starts immediately.
    pub fn new(archive: WeightArchive, cfg: EdgeConfig, sink: Sink) -> Result<Self> {
        if !cfg.input_dir.is_dir() {
            return Err(Error::Config(format!(
                "input directory {} does not exist",
                cfg.input_dir.display()
            )));
        }
        let fingerprint = archive.fingerprint();
        let (tx, rx) = sync_channel::<EdgeEvent>(cfg.queue_capacity.max(1));
        let undelivered = cfg.input_dir.join("undelivered.jsonl");
        let dispatcher = std::thread::spawn(move || {
            for event in rx {
                if let Err(e) = dispatch_event(&event, &sink) {
                    eprintln!("undelivered event {}: {}", event.id(), e);
                    if let Ok(mut f) = fs::OpenOptions::new()
                        .create(true)
                        .append(true)
                        .open(&undelivered)
                    {
                        let _ = writeln!(f, "{}", event.to_json());
                    }
                }
            }
        });
        Ok(EdgeRunner {
            archive,
            fingerprint,
            cfg,
            pending: HashMap::new(),
            poll_counter: 0,
            tx: Some(tx),
            dispatcher: Some(dispatcher),
        })
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// One scan of the input directory. Newly appeared candidates are only
    /// recorded; candidates whose size held steady since the last poll are
    /// classified (in arrival order, name-ordered within a poll), enqueued
    /// for delivery, and moved to `done/`. Returns the events produced.
    pub fn poll_once(&mut self) -> Result<Vec<EdgeEvent>> {
        self.poll_counter += 1;
        let mut present: HashMap<PathBuf, u64> = HashMap::new();
        for entry in fs::read_dir(&self.cfg.input_dir)? {
            let path = entry?.path();
            if let Some(size) = candidate_size(&path) {
                present.insert(path, size);
            }
        }
        self.pending.retain(|path, _| present.contains_key(path));

        let mut ready: Vec<(u64, PathBuf)> = Vec::new();
        for (path, size) in present {
            match self.pending.get_mut(&path) {
                None => {
                    self.pending.insert(
                        path,
                        Pending {
                            size,
                            first_seen: self.poll_counter,
                        },
                    );
                }
                Some(p) if p.size == size => ready.push((p.first_seen, path)),
                Some(p) => p.size = size,
            }
        }
        ready.sort_by(|a, b| (a.0, a.1.file_name()).cmp(&(b.0, b.1.file_name())));

        let mut events = Vec::with_capacity(ready.len());
        for (_, path) in ready {
            let event = self.classify_path(&path);
            self.tx
                .as_ref()
                .expect("dispatcher alive while runner exists")
                .send(event.clone())
                .map_err(|_| Error::Delivery("event dispatcher stopped".into()))?;
            self.finish(&path)?;
            events.push(event);
        }
        Ok(events)
    }

    /// Polls at the configured interval until `stop` turns true.
    pub fn run(&mut self, stop: &AtomicBool) -> Result<()> {
        while !stop.load(Ordering::Relaxed) {
            self.poll_once()?;
            std::thread::sleep(self.cfg.poll_interval);
        }
        Ok(())
    }

    /// Drains the delivery queue and joins the dispatcher.
    pub fn shutdown(mut self) -> Result<()> {
        self.tx.take();
        if let Some(handle) = self.dispatcher.take() {
            handle
                .join()
                .map_err(|_| Error::Delivery("event dispatcher panicked".into()))?;
        }
        Ok(())
    }

    fn classify_path(&self, path: &Path) -> EdgeEvent {
        let id = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        let ts = Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true);
        let outcome = load_clip(path, self.cfg.fps_override).and_then(|clip| {
            predict(
                &self.archive.spec,
                &self.archive.params,
                &self.archive.classes,
                &clip,
                &self.archive.preprocess,
            )
        });
        match outcome {
            Ok(p) => EdgeEvent::Classification(ClassificationEvent {
                id,
                class: p.class_name,
                class_index: p.class_index,
                probs: p.probs,
                ts,
                model_fingerprint: self.fingerprint.clone(),
            }),
            Err(e) => EdgeEvent::Error(ErrorEvent {
                id,
                error: e.to_string(),
                ts,
                model_fingerprint: self.fingerprint.clone(),
            }),
        }
    }

    fn finish(&mut self, path: &Path) -> Result<()> {
        let done = self.cfg.input_dir.join("done");
        fs::create_dir_all(&done)?;
        let target = done.join(path.file_name().expect("candidates have names"));
        fs::rename(path, target)?;
        self.pending.remove(path);
        Ok(())
    }
}

impl Drop for EdgeRunner {
    fn drop(&mut self) {
        self.tx.take();
        if let Some(handle) = self.dispatcher.take() {
            let _ = handle.join();
        }
    }
}

/// Size signature of a candidate, or None if the entry is not a clip.
///
/// Candidates are `.rvid` files and directories (PGM folders); the `done/`
/// directory and hidden entries are skipped. Directory size is the frame
/// count plus total byte size, so both new frames and growing frames defeat
/// the stability check.
fn candidate_size(path: &Path) -> Option<u64> {
    let name = path.file_name()?.to_string_lossy();
    if name.starts_with('.') || name == "done" {
        return None;
    }
    if path.is_dir() {
        let mut total = 0u64;
        for entry in fs::read_dir(path).ok()? {
            let entry = entry.ok()?;
            total = total
                .wrapping_add(entry.metadata().ok()?.len())
                .wrapping_add(1);
        }
        Some(total)
    } else if path.extension().map(|e| e.eq_ignore_ascii_case("rvid"))? {
        fs::metadata(path).ok().map(|m| m.len())
    } else {
        None
    }
}
