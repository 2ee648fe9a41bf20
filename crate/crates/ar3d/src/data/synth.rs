//! Synthetic motion dataset: a bright square moving over a textured static
//! background, one motion pattern per class.
//!
//! The generator writes RVID clips plus a manifest with balanced
//! (approximately 70/15/15) train/val/test splits, fully determined by the
//! seed. The textured background gives background subtraction real work to
//! do; the pixel noise keeps clips within a class from being identical.

use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{rvid, DatasetManifest, ManifestEntry, Split};
use crate::error::{Error, Result};
use crate::seeds;
use crate::tensor::Tensor;
use crate::vision::{resize_bilinear, Clip};

/// The available motion patterns, in the order classes are assigned.
pub const MOTION_CLASSES: [&str; 6] = [
    "translate-left",
    "translate-right",
    "translate-up",
    "translate-down",
    "grow-shrink",
    "in-place-oscillation",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Number of classes; the first `classes` entries of [`MOTION_CLASSES`].
    pub classes: usize,
    pub clips_per_class: usize,
    /// Frames per clip.
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub fps: f64,
    /// Peak deviation of the background texture from mid-gray, in [0, 0.3].
    pub bg_amplitude: f32,
    /// Per-pixel Gaussian noise sigma, in [0, 0.2).
    pub noise_sigma: f32,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            classes: 6,
            clips_per_class: 20,
            frames: 16,
            height: 24,
            width: 24,
            fps: 10.0,
            bg_amplitude: 0.15,
            noise_sigma: 0.02,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.classes > MOTION_CLASSES.len() {
            return Err(Error::Config(format!(
                "classes must be in 1..={}, got {}",
                MOTION_CLASSES.len(),
                self.classes
            )));
        }
        if self.clips_per_class < 3 {
            return Err(Error::Config(
                "clips_per_class must be >= 3 so every split is populated".into(),
            ));
        }
        if self.frames < 3 {
            return Err(Error::Config("frames must be >= 3".into()));
        }
        if self.height < 8 || self.width < 8 {
            return Err(Error::Config(format!(
                "frame size {}x{} too small for a visible shape (need >= 8x8)",
                self.height, self.width
            )));
        }
        if !self.fps.is_finite() || self.fps <= 0.0 {
            return Err(Error::Config(format!("fps must be > 0, got {}", self.fps)));
        }
        if !(0.0..=0.3).contains(&self.bg_amplitude) {
            return Err(Error::Config(format!(
                "bg_amplitude {} outside [0, 0.3]",
                self.bg_amplitude
            )));
        }
        if !(0.0..0.2).contains(&self.noise_sigma) {
            return Err(Error::Config(format!(
                "noise_sigma {} outside [0, 0.2)",
                self.noise_sigma
            )));
        }
        Ok(())
    }

    pub fn class_names(&self) -> Vec<String> {
        MOTION_CLASSES[..self.classes]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }
}

/// Generates the dataset under `out_dir`: `clips/*.rvid` plus `manifest.txt`.
///
/// Byte-identical output for identical configs. Returns the manifest with
/// paths resolved to the written files.
pub fn synth_generate(cfg: &SynthConfig, out_dir: &Path) -> Result<DatasetManifest> {
    cfg.validate()?;
    let clips_dir = out_dir.join("clips");
    fs::create_dir_all(&clips_dir)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {}", clips_dir.display(), e))))?;

    let n = cfg.clips_per_class;
    let val = (n * 15 / 100).max(1);
    let test = (n * 15 / 100).max(1);
    let train = n - val - test;

    let mut entries = Vec::with_capacity(cfg.classes * n);
    for class in 0..cfg.classes {
        for j in 0..n {
            let clip = generate_clip(cfg, class, j);
            let rel = format!("clips/{}_{:03}.rvid", MOTION_CLASSES[class], j);
            rvid::write_rvid(&out_dir.join(&rel), &clip)?;
            let split = if j < train {
                Split::Train
            } else if j < train + val {
                Split::Val
            } else {
                Split::Test
            };
            entries.push(ManifestEntry {
                path: rel.into(),
                class,
                split,
            });
        }
    }

    let manifest = DatasetManifest {
        classes: cfg.class_names(),
        entries,
    };
    crate::data::save_manifest(&manifest, &out_dir.join("manifest.txt"))?;
    crate::data::load_manifest(&out_dir.join("manifest.txt"))
}

/// Renders a single clip of the given class, determined by (seed, class, j).
pub fn generate_clip(cfg: &SynthConfig, class: usize, j: usize) -> Clip {
    let (t, h, w) = (cfg.frames, cfg.height, cfg.width);
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::mix3(cfg.seed, class as u64, j as u64));

    let background = textured_background(cfg, &mut rng);
    let noise = Normal::new(0.0f64, cfg.noise_sigma as f64).expect("sigma validated");

    // per-clip variation so clips within a class differ even at sigma = 0
    let jitter = |rng: &mut ChaCha8Rng, span: f64| rng.gen_range(-span..=span);
    let base_half = (h.min(w) as f64 / 6.0).max(1.5) * (1.0 + jitter(&mut rng, 0.15));
    let cx0 = w as f64 / 2.0 + jitter(&mut rng, w as f64 * 0.05);
    let cy0 = h as f64 / 2.0 + jitter(&mut rng, h as f64 * 0.05);
    let phase0 = rng.gen_range(0.0..TAU);

    let mut data = vec![0.0f32; t * h * w];
    for ti in 0..t {
        let frame = &mut data[ti * h * w..(ti + 1) * h * w];
        frame.copy_from_slice(background.data());

        let p = if t > 1 { ti as f64 / (t - 1) as f64 } else { 0.0 };
        // drift across the central half of an axis, high to low
        let travel = |axis: f64| axis * (0.75 - 0.5 * p);
        let (cx, cy, half) = match MOTION_CLASSES[class] {
            "translate-left" => (travel(w as f64), cy0, base_half),
            "translate-right" => (w as f64 - travel(w as f64), cy0, base_half),
            "translate-up" => (cx0, travel(h as f64), base_half),
            "translate-down" => (cx0, h as f64 - travel(h as f64), base_half),
            "grow-shrink" => {
                let tri = 1.0 - (2.0 * p - 1.0).abs();
                (cx0, cy0, base_half * (0.5 + 1.2 * tri))
            }
            "in-place-oscillation" => {
                let r = h.min(w) as f64 / 8.0;
                let a = phase0 + 2.0 * TAU * p;
                (cx0 + r * a.cos(), cy0 + r * a.sin(), base_half)
            }
            _ => unreachable!("class index validated"),
        };

        fill_square(frame, h, w, cx, cy, half);

        if cfg.noise_sigma > 0.0 {
            for v in frame.iter_mut() {
                *v = (*v + noise.sample(&mut rng) as f32).clamp(0.0, 1.0);
            }
        }
    }

    let frames = Tensor::new(vec![t, h, w], data).expect("generated volume is consistent");
    Clip::new(frames, cfg.fps).expect("generated pixels are clamped to [0, 1]")
}

/// Smooth per-clip texture: a random 4x4 grid around mid-gray, upsampled.
fn textured_background(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Tensor {
    let a = cfg.bg_amplitude;
    let coarse: Vec<f32> = (0..16)
        .map(|_| 0.5 + a * rng.gen_range(-1.0f32..=1.0))
        .collect();
    let grid = Tensor::new(vec![4, 4], coarse).expect("4x4 grid");
    resize_bilinear(&grid, (cfg.height, cfg.width)).expect("target dims validated")
}

fn fill_square(frame: &mut [f32], h: usize, w: usize, cx: f64, cy: f64, half: f64) {
    let lo = |c: f64| (c - half).round().max(0.0) as usize;
    let hi = |c: f64, n: usize| ((c + half).round() as usize).min(n);
    for y in lo(cy)..hi(cy, h) {
        for x in lo(cx)..hi(cx, w) {
            frame[y * w + x] = 1.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vision::background_subtract;

    fn clean_cfg() -> SynthConfig {
        SynthConfig {
            classes: 6,
            clips_per_class: 3,
            frames: 16,
            height: 20,
            width: 40,
            fps: 10.0,
            bg_amplitude: 0.0,
            noise_sigma: 0.0,
            seed: 7,
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let cfg = SynthConfig {
            clips_per_class: 4,
            ..SynthConfig::default()
        };
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        synth_generate(&cfg, a.path()).unwrap();
        synth_generate(&cfg, b.path()).unwrap();
        for name in ["manifest.txt", "clips/grow-shrink_001.rvid"] {
            let x = fs::read(a.path().join(name)).unwrap();
            let y = fs::read(b.path().join(name)).unwrap();
            assert_eq!(x, y, "{} differs between runs", name);
        }
    }

    #[test]
    fn splits_are_balanced_and_disjoint() {
        let cfg = SynthConfig {
            classes: 2,
            clips_per_class: 20,
            ..SynthConfig::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let m = synth_generate(&cfg, dir.path()).unwrap();
        assert_eq!(m.split_counts(), [28, 6, 6]);
        m.validate().unwrap();
    }

    #[test]
    fn translate_left_centroid_column_strictly_decreases() {
        let cfg = clean_cfg();
        let clip = generate_clip(&cfg, 0, 0);
        let (t, h, w) = clip.dims();
        let mut cols = Vec::new();
        for ti in 0..t {
            let frame = clip.frame(ti);
            let (mut sum, mut count) = (0.0f64, 0.0f64);
            for y in 0..h {
                for x in 0..w {
                    if frame[y * w + x] > 0.9 {
                        sum += x as f64;
                        count += 1.0;
                    }
                }
            }
            assert!(count > 0.0, "frame {} has no shape", ti);
            cols.push(sum / count);
        }
        for pair in cols.windows(2) {
            assert!(pair[1] < pair[0], "columns {:?} not strictly decreasing", cols);
        }
    }

    #[test]
    fn flat_background_subtraction_isolates_the_shape() {
        let cfg = clean_cfg();
        let clip = generate_clip(&cfg, 0, 1);
        let sub = background_subtract(&clip, None).unwrap();
        let (t, h, w) = sub.dims();
        for ti in 0..t {
            let orig = clip.frame(ti);
            let diff = sub.frame(ti);
            let mut moving = 0;
            for p in 0..h * w {
                if diff[p] > 1e-6 {
                    moving += 1;
                    assert!(
                        orig[p] > 0.9 || diff[p] > 0.4,
                        "residual at a non-shape pixel"
                    );
                }
            }
            assert!(moving > 0, "frame {} lost its shape", ti);
        }
    }

    #[test]
    fn class_count_limits_enforced() {
        let mut cfg = SynthConfig::default();
        cfg.classes = 7;
        assert!(cfg.validate().is_err());
        cfg.classes = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = SynthConfig::default();
        cfg.noise_sigma = 0.25;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn manifest_uses_requested_class_names() {
        let cfg = SynthConfig {
            classes: 3,
            clips_per_class: 3,
            ..SynthConfig::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let m = synth_generate(&cfg, dir.path()).unwrap();
        assert_eq!(
            m.classes,
            vec!["translate-left", "translate-right", "translate-up"]
        );
        assert_eq!(m.entries.len(), 9);
    }

    #[test]
    fn clips_within_a_class_differ() {
        let cfg = clean_cfg();
        let a = generate_clip(&cfg, 4, 0);
        let b = generate_clip(&cfg, 4, 1);
        assert_ne!(a.frames().data(), b.frames().data());
    }
}
