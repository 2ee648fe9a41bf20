//! RVID, a codec-free raw clip container.
//!
//! Little-endian layout: magic `RVID` (4 bytes), version u8 = 1, T/H/W as
//! u16, fps as f32, then T*H*W payload bytes, frame-major and row-major
//! within a frame. Pixels are stored as round(p * 255), so encoding an
//! already 8-bit-quantized clip round-trips bit-exactly.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::vision::Clip;

pub const RVID_MAGIC: [u8; 4] = *b"RVID";
pub const RVID_VERSION: u8 = 1;
/// magic + version + three u16 dims + f32 fps
pub const RVID_HEADER_LEN: usize = 15;

/// Serializes a clip. Dimensions above u16::MAX are rejected.
pub fn encode_rvid(clip: &Clip) -> Result<Vec<u8>> {
    let (t, h, w) = clip.dims();
    for (name, n) in [("T", t), ("H", h), ("W", w)] {
        if n > u16::MAX as usize {
            return Err(Error::Format(format!(
                "clip dimension {}={} exceeds the container maximum {}",
                name,
                n,
                u16::MAX
            )));
        }
    }
    let mut out = Vec::with_capacity(RVID_HEADER_LEN + t * h * w);
    out.extend_from_slice(&RVID_MAGIC);
    out.push(RVID_VERSION);
    out.extend_from_slice(&(t as u16).to_le_bytes());
    out.extend_from_slice(&(h as u16).to_le_bytes());
    out.extend_from_slice(&(w as u16).to_le_bytes());
    out.extend_from_slice(&(clip.fps() as f32).to_le_bytes());
    out.extend(
        clip.frames()
            .data()
            .iter()
            .map(|&p| (p * 255.0).round() as u8),
    );
    Ok(out)
}

/// Parses an RVID byte stream, reporting the byte offset of any violation.
pub fn decode_rvid(bytes: &[u8]) -> Result<Clip> {
    if bytes.len() < RVID_HEADER_LEN {
        return Err(Error::Format(format!(
            "header needs {} bytes, found {}",
            RVID_HEADER_LEN,
            bytes.len()
        )));
    }
    if bytes[..4] != RVID_MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?} at byte offset 0 (want \"RVID\")",
            &bytes[..4]
        )));
    }
    if bytes[4] != RVID_VERSION {
        return Err(Error::Format(format!(
            "unsupported version {} at byte offset 4 (want {})",
            bytes[4], RVID_VERSION
        )));
    }
    let dim = |off: usize| u16::from_le_bytes([bytes[off], bytes[off + 1]]) as usize;
    let (t, h, w) = (dim(5), dim(7), dim(9));
    for (name, n, off) in [("T", t, 5), ("H", h, 7), ("W", w, 9)] {
        if n == 0 {
            return Err(Error::Format(format!(
                "dimension {} at byte offset {} is zero",
                name, off
            )));
        }
    }
    let fps = f32::from_le_bytes(bytes[11..15].try_into().unwrap());
    if !fps.is_finite() || fps <= 0.0 {
        return Err(Error::Format(format!(
            "fps {} at byte offset 11 must be finite and > 0",
            fps
        )));
    }
    let expected = t * h * w;
    let payload = &bytes[RVID_HEADER_LEN..];
    if payload.len() != expected {
        return Err(Error::Format(format!(
            "payload at byte offset {} holds {} bytes but header {}x{}x{} requires {}",
            RVID_HEADER_LEN,
            payload.len(),
            t,
            h,
            w,
            expected
        )));
    }
    let data: Vec<f32> = payload.iter().map(|&b| b as f32 / 255.0).collect();
    Clip::new(Tensor::new(vec![t, h, w], data)?, fps as f64)
}

pub fn write_rvid(path: &Path, clip: &Clip) -> Result<()> {
    fs::write(path, encode_rvid(clip)?)?;
    Ok(())
}

pub fn read_rvid(path: &Path) -> Result<Clip> {
    let bytes = fs::read(path)?;
    decode_rvid(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {}", path.display(), msg)),
        other => other,
    })
}
