//! Dataset plumbing: clip containers, manifests with train/val/test splits,
//! flip augmentation, and a synthetic motion dataset generator.
//!
//! A manifest is a UTF-8 text file: a header line `classes: a,b,c` followed
//! by one `path,class_name,split` line per clip. Paths may point at RVID
//! files or at directories of PGM frames.

pub mod pgm;
pub mod rvid;
pub mod synth;

pub use pgm::load_pgm_dir;
pub use rvid::{decode_rvid, encode_rvid, read_rvid, write_rvid};
pub use synth::{synth_generate, SynthConfig, MOTION_CLASSES};

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vision::{hflip, Clip};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Manifest(format!(
                "unknown split '{}' (want train, val, or test)",
                other
            ))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub class: usize,
    pub split: Split,
}

/// Ordered class names plus one (path, class, split) entry per clip.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub classes: Vec<String>,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// Rejects duplicate paths, out-of-range class indices, and unusable
    /// class names.
    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::Manifest("no classes declared".into()));
        }
        let mut seen_class = HashSet::new();
        for name in &self.classes {
            if name.is_empty() || name.contains(',') || name.contains('\n') {
                return Err(Error::Manifest(format!("unusable class name '{}'", name)));
            }
            if !seen_class.insert(name) {
                return Err(Error::Manifest(format!("duplicate class name '{}'", name)));
            }
        }
        let mut seen_path = HashSet::new();
        for (i, e) in self.entries.iter().enumerate() {
            if e.class >= self.classes.len() {
                return Err(Error::Manifest(format!(
                    "entry {}: class index {} out of range for {} classes",
                    i,
                    e.class,
                    self.classes.len()
                )));
            }
            if !seen_path.insert(&e.path) {
                return Err(Error::Manifest(format!(
                    "entry {}: duplicate path {}",
                    i,
                    e.path.display()
                )));
            }
        }
        Ok(())
    }

    pub fn split_entries(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn split_counts(&self) -> [usize; 3] {
        let mut counts = [0usize; 3];
        for e in &self.entries {
            counts[e.split as usize] += 1;
        }
        counts
    }

    /// Parses manifest text; line numbers in errors are 1-based.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::Manifest("empty manifest".into()))?;
        let classes_part = header.trim().strip_prefix("classes:").ok_or_else(|| {
            Error::Manifest("line 1: header must start with 'classes:'".into())
        })?;
        let classes: Vec<String> = classes_part
            .split(',')
            .map(|c| c.trim().to_string())
            .collect();

        let mut entries = Vec::new();
        for (idx, line) in lines {
            let line_no = idx + 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            // split from the right so paths may contain commas
            let mut parts = line.rsplitn(3, ',');
            let (split, class_name, path) = match (parts.next(), parts.next(), parts.next()) {
                (Some(s), Some(c), Some(p)) => (s.trim(), c.trim(), p.trim()),
                _ => {
                    return Err(Error::Manifest(format!(
                        "line {}: malformed entry '{}' (want path,class_name,split)",
                        line_no, line
                    )));
                }
            };
            let class = classes.iter().position(|c| c == class_name).ok_or_else(|| {
                Error::Manifest(format!(
                    "line {}: unknown class '{}' (declared: {})",
                    line_no,
                    class_name,
                    classes.join(", ")
                ))
            })?;
            let split = Split::parse(split)
                .map_err(|e| Error::Manifest(format!("line {}: {}", line_no, e)))?;
            entries.push(ManifestEntry {
                path: PathBuf::from(path),
                class,
                split,
            });
        }
        let manifest = DatasetManifest { classes, entries };
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn render(&self) -> String {
        let mut out = format!("classes: {}\n", self.classes.join(","));
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{}\n",
                e.path.display(),
                self.classes[e.class],
                e.split
            ));
        }
        out
    }
}

/// Reads, validates, and resolves a manifest file.
///
/// Relative entry paths are resolved against the manifest's directory, and
/// every referenced path must exist.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Manifest(format!("{}: {}", path.display(), e)))?;
    let mut manifest = DatasetManifest::parse(&text)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    for (i, entry) in manifest.entries.iter_mut().enumerate() {
        if entry.path.is_relative() {
            entry.path = base.join(&entry.path);
        }
        if !entry.path.exists() {
            return Err(Error::Manifest(format!(
                "entry {} ({}): file does not exist",
                i + 1,
                entry.path.display()
            )));
        }
    }
    Ok(manifest)
}

pub fn save_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    manifest.validate()?;
    fs::write(path, manifest.render())?;
    Ok(())
}

/// A decoded clip with its label and the path it came from.
#[derive(Debug, Clone)]
pub struct LabeledClip {
    /// Identity of the clip; augmented copies get a `#hflip` suffix so no
    /// augmented path ever collides with a real one.
    pub path: PathBuf,
    pub clip: Clip,
    pub class: usize,
}

/// Decodes one manifest path: an RVID file or a directory of PGM frames.
pub fn load_clip(path: &Path, fps: Option<f64>) -> Result<Clip> {
    if path.is_dir() {
        load_pgm_dir(path, fps)
    } else {
        read_rvid(path)
    }
}

/// Loads every clip of one split, in manifest order.
pub fn load_split(manifest: &DatasetManifest, split: Split) -> Result<Vec<LabeledClip>> {
    manifest
        .split_entries(split)
        .map(|e| {
            Ok(LabeledClip {
                path: e.path.clone(),
                clip: load_clip(&e.path, None)?,
                class: e.class,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AugmentMode {
    None,
    Model4,
}

/// Expands the training list according to the augmentation mode.
///
/// `Model4` appends a flipped copy of every training clip and a flipped copy
/// of every validation clip; the validation set itself stays untouched and
/// no unflipped validation clip enters training. Labels are preserved.
pub fn augment_training_set(
    train: Vec<LabeledClip>,
    val: &[LabeledClip],
    mode: AugmentMode,
) -> Vec<LabeledClip> {
    match mode {
        AugmentMode::None => train,
        AugmentMode::Model4 => {
            let flipped = |src: &LabeledClip| {
                let mut path = src.path.clone().into_os_string();
                path.push("#hflip");
                LabeledClip {
                    path: PathBuf::from(path),
                    clip: hflip(&src.clip),
                    class: src.class,
                }
            };
            let mut out = Vec::with_capacity(train.len() * 2 + val.len());
            let train_flips: Vec<_> = train.iter().map(flipped).collect();
            out.extend(train);
            out.extend(train_flips);
            out.extend(val.iter().map(flipped));
            out
        }
    }
}
