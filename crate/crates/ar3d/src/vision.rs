//! Clip preprocessing: equal-interleave frame sampling, median-reference
//! background subtraction, bilinear resizing, and horizontal flipping.
//!
//! All stages are pure functions over grayscale clips with pixels in [0, 1],
//! and every stage preserves that range. The full [`preprocess`] pipeline
//! turns a raw clip into the [1, N, H, W] tensor the models consume.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A grayscale video clip: frames as a [T, H, W] tensor plus a frame rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    frames: Tensor,
    fps: f64,
}

impl Clip {
    /// Validates the frame tensor (rank 3, finite pixels in [0, 1]) and the
    /// frame rate (finite, positive).
    pub fn new(frames: Tensor, fps: f64) -> Result<Self> {
        if frames.rank() != 3 {
            return Err(Error::Shape(format!(
                "clip frames must be [T, H, W]; got shape {:?}",
                frames.shape()
            )));
        }
        if !fps.is_finite() || fps <= 0.0 {
            return Err(Error::Clip(format!("fps must be finite and > 0, got {}", fps)));
        }
        if let Some((i, &v)) = frames
            .data()
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0 || **v > 1.0)
        {
            let (h, w) = (frames.shape()[1], frames.shape()[2]);
            return Err(Error::Clip(format!(
                "pixel at [t={}, h={}, w={}] is {} (must be in [0, 1])",
                i / (h * w),
                (i / w) % h,
                i % w,
                v
            )));
        }
        Ok(Clip { frames, fps })
    }

    pub fn frames(&self) -> &Tensor {
        &self.frames
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    /// (T, H, W)
    pub fn dims(&self) -> (usize, usize, usize) {
        let s = self.frames.shape();
        (s[0], s[1], s[2])
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        let (_, h, w) = self.dims();
        &self.frames.data()[t * h * w..(t + 1) * h * w]
    }

    pub fn into_frames(self) -> Tensor {
        self.frames
    }
}

/// Settings for the clip-to-tensor pipeline.
///
/// `seconds` and `num_frames` control temporal sampling; `target_h`/`target_w`
/// the spatial resize; `bg_sub` toggles background subtraction with an
/// optional binarization threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    /// Seconds of video considered from the start of the clip.
    pub seconds: f64,
    /// Frames sampled from that window.
    pub num_frames: usize,
    pub target_h: usize,
    pub target_w: usize,
    pub bg_sub: bool,
    /// When set, absolute differences above the threshold become 1.0 and the
    /// rest 0.0; when unset, raw absolute differences are kept.
    pub bg_threshold: Option<f32>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self::kth()
    }
}

impl PreprocessConfig {
    /// 35 frames from the first 7 seconds at 20x20, with subtraction.
    pub fn kth() -> Self {
        PreprocessConfig {
            seconds: 7.0,
            num_frames: 35,
            target_h: 20,
            target_w: 20,
            bg_sub: true,
            bg_threshold: None,
        }
    }

    /// 20 frames from the first 2 seconds at 20x20, with subtraction.
    pub fn weizmann() -> Self {
        PreprocessConfig {
            seconds: 2.0,
            num_frames: 20,
            ..Self::kth()
        }
    }

    /// 35 frames from the first 7 seconds at 20x20, with subtraction.
    pub fn ut_interaction() -> Self {
        Self::kth()
    }

    pub fn validate(&self) -> Result<()> {
        if !self.seconds.is_finite() || self.seconds <= 0.0 {
            return Err(Error::Config(format!(
                "seconds must be finite and > 0, got {}",
                self.seconds
            )));
        }
        if self.num_frames == 0 {
            return Err(Error::Config("num_frames must be >= 1".into()));
        }
        if self.target_h == 0 || self.target_w == 0 {
            return Err(Error::Config(format!(
                "target size {}x{} has a zero dimension",
                self.target_h, self.target_w
            )));
        }
        if let Some(t) = self.bg_threshold {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::Config(format!(
                    "bg_threshold {} outside (0, 1)",
                    t
                )));
            }
        }
        Ok(())
    }
}

/// Picks `n` frames at equal interleave from the first `seconds` of the clip.
///
/// With F = min(T, floor(seconds * fps)) usable frames, the selected indices
/// are floor(i * F / n) for i in 0..n, which are strictly increasing whenever
/// F >= n. A clip with fewer usable frames than `n` is rejected.
pub fn sample_frames(clip: &Clip, seconds: f64, n: usize) -> Result<Clip> {
    if n == 0 {
        return Err(Error::Config("cannot sample 0 frames".into()));
    }
    let (t, h, w) = clip.dims();
    let usable = (seconds * clip.fps()).floor() as usize;
    let f = t.min(usable);
    if f < n {
        return Err(Error::Clip(format!(
            "clip offers {} usable frames in its first {} s ({} frames at {} fps) but {} were requested; \
             need at least {:.2} s of video",
            f,
            seconds,
            t,
            clip.fps(),
            n,
            n as f64 / clip.fps()
        )));
    }
    let mut data = Vec::with_capacity(n * h * w);
    for i in 0..n {
        let idx = i * f / n;
        data.extend_from_slice(clip.frame(idx));
    }
    let frames = Tensor::new(vec![n, h, w], data)?;
    Clip::new(frames, clip.fps())
}

/// Replaces each frame with its absolute difference from the per-pixel
/// temporal median of the clip.
///
/// The median of an even frame count is the lower of the two middle order
/// statistics. With `threshold` set, differences above it become 1.0 and the
/// rest 0.0.
pub fn background_subtract(clip: &Clip, threshold: Option<f32>) -> Result<Clip> {
    let (t, h, w) = clip.dims();
    if t < 3 {
        return Err(Error::Clip(format!(
            "background subtraction needs >= 3 frames to form a median reference, got {}",
            t
        )));
    }
    if let Some(tau) = threshold {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::Config(format!("bg threshold {} outside (0, 1)", tau)));
        }
    }
    let plane = h * w;
    let src = clip.frames.data();
    let mut reference = vec![0.0f32; plane];
    let mut column = vec![0.0f32; t];
    for p in 0..plane {
        for (ti, c) in column.iter_mut().enumerate() {
            *c = src[ti * plane + p];
        }
        column.sort_unstable_by(|a, b| a.partial_cmp(b).expect("pixels are finite"));
        reference[p] = column[(t - 1) / 2];
    }
    let mut out = vec![0.0f32; t * plane];
    for ti in 0..t {
        for p in 0..plane {
            let d = (src[ti * plane + p] - reference[p]).abs();
            out[ti * plane + p] = match threshold {
                Some(tau) => {
                    if d > tau {
                        1.0
                    } else {
                        0.0
                    }
                }
                None => d,
            };
        }
    }
    Clip::new(Tensor::new(vec![t, h, w], out)?, clip.fps())
}

/// Resizes one [H, W] frame with pixel-center bilinear sampling.
///
/// Source coordinate for output index i is (i + 0.5) * H / H' - 0.5, clamped
/// to the frame; the four neighbors blend via nested lerps, so constant
/// frames stay exactly constant and a same-size resize is the identity.
pub fn resize_bilinear(frame: &Tensor, target: (usize, usize)) -> Result<Tensor> {
    if frame.rank() != 2 {
        return Err(Error::Shape(format!(
            "resize expects an [H, W] frame; got shape {:?}",
            frame.shape()
        )));
    }
    let (th, tw) = target;
    if th == 0 || tw == 0 {
        return Err(Error::Config(format!(
            "resize target {}x{} has a zero dimension",
            th, tw
        )));
    }
    let (h, w) = (frame.shape()[0], frame.shape()[1]);
    let src = frame.data();
    let mut out = vec![0.0f32; th * tw];

    let coords = |n: usize, tn: usize| -> Vec<(usize, usize, f64)> {
        (0..tn)
            .map(|i| {
                let c = ((i as f64 + 0.5) * (n as f64 / tn as f64) - 0.5)
                    .clamp(0.0, (n - 1) as f64);
                let lo = c.floor() as usize;
                let hi = (lo + 1).min(n - 1);
                (lo, hi, c - lo as f64)
            })
            .collect()
    };
    let rows = coords(h, th);
    let cols = coords(w, tw);

    let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
    for (oi, &(r0, r1, rt)) in rows.iter().enumerate() {
        for (oj, &(c0, c1, ct)) in cols.iter().enumerate() {
            let a = src[r0 * w + c0] as f64;
            let b = src[r0 * w + c1] as f64;
            let c = src[r1 * w + c0] as f64;
            let d = src[r1 * w + c1] as f64;
            let top = lerp(a, b, ct);
            let bottom = lerp(c, d, ct);
            out[oi * tw + oj] = lerp(top, bottom, rt).clamp(0.0, 1.0) as f32;
        }
    }
    Tensor::new(vec![th, tw], out)
}

/// Mirrors every frame horizontally; fps is preserved. Involutive.
pub fn hflip(clip: &Clip) -> Clip {
    let (t, h, w) = clip.dims();
    let src = clip.frames.data();
    let mut out = vec![0.0f32; src.len()];
    for ti in 0..t {
        for hi in 0..h {
            let row = ti * h * w + hi * w;
            for wi in 0..w {
                out[row + wi] = src[row + (w - 1 - wi)];
            }
        }
    }
    Clip {
        frames: Tensor::new(vec![t, h, w], out).expect("same shape as input"),
        fps: clip.fps,
    }
}

/// Full pipeline: sample N frames from the first S seconds, optionally
/// background-subtract, resize every frame, and add the leading channel axis.
///
/// Returns a [1, N, target_h, target_w] tensor ready for the models.
pub fn preprocess(clip: &Clip, cfg: &PreprocessConfig) -> Result<Tensor> {
    cfg.validate()?;
    let sampled = sample_frames(clip, cfg.seconds, cfg.num_frames)?;
    let staged = if cfg.bg_sub {
        background_subtract(&sampled, cfg.bg_threshold)?
    } else {
        sampled
    };
    let (t, _, _) = staged.dims();
    let mut data = Vec::with_capacity(t * cfg.target_h * cfg.target_w);
    for ti in 0..t {
        let frame = Tensor::new(
            vec![staged.dims().1, staged.dims().2],
            staged.frame(ti).to_vec(),
        )?;
        let resized = resize_bilinear(&frame, (cfg.target_h, cfg.target_w))?;
        data.extend_from_slice(resized.data());
    }
    Tensor::new(vec![1, t, cfg.target_h, cfg.target_w], data)
}
