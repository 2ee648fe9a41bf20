//! Binary PGM (P5, maxval 255) frames and directory-of-frames clips.
//!
//! A directory of PGM files is read as one clip: lexicographic filename
//! order is temporal order. The frame rate comes from an explicit argument
//! or an `fps.txt` sidecar in the same directory.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::vision::Clip;

/// Name of the sidecar file consulted when no fps override is given.
pub const FPS_SIDECAR: &str = "fps.txt";

/// Serializes one grayscale frame as binary PGM.
pub fn encode_pgm(height: usize, width: usize, pixels: &[f32]) -> Result<Vec<u8>> {
    if pixels.len() != height * width {
        return Err(Error::Shape(format!(
            "{} pixels for a {}x{} frame",
            pixels.len(),
            height,
            width
        )));
    }
    let mut out = format!("P5\n{} {}\n255\n", width, height).into_bytes();
    out.extend(pixels.iter().map(|&p| (p * 255.0).round() as u8));
    Ok(out)
}

/// Parses one binary PGM; `name` labels error messages.
pub fn decode_pgm(bytes: &[u8], name: &str) -> Result<(usize, usize, Vec<f32>)> {
    let mut pos = 0usize;

    let mut token = |what: &str| -> Result<String> {
        // skip whitespace and '#' comments that run to end of line
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format(format!("{}: missing {} in header", name, what)));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };

    if token("magic")? != "P5" {
        return Err(Error::Format(format!(
            "{}: not a binary PGM (magic must be P5)",
            name
        )));
    }
    let parse = |s: String, what: &str| -> Result<usize> {
        s.parse::<usize>()
            .map_err(|_| Error::Format(format!("{}: {} '{}' is not a number", name, what, s)))
    };
    let width = parse(token("width")?, "width")?;
    let height = parse(token("height")?, "height")?;
    let maxval = parse(token("maxval")?, "maxval")?;
    if maxval != 255 {
        return Err(Error::Format(format!(
            "{}: maxval {} unsupported (want 255)",
            name, maxval
        )));
    }
    if width == 0 || height == 0 {
        return Err(Error::Format(format!("{}: zero dimension", name)));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let raster = bytes
        .get(pos..pos + width * height)
        .ok_or_else(|| {
            Error::Format(format!(
                "{}: raster truncated, want {} bytes after the header",
                name,
                width * height
            ))
        })?;
    Ok((
        height,
        width,
        raster.iter().map(|&b| b as f32 / 255.0).collect(),
    ))
}

/// Reads every `.pgm` file in `dir` (sorted by name) as one clip.
///
/// `fps` wins when given; otherwise the `fps.txt` sidecar is consulted.
pub fn load_pgm_dir(dir: &Path, fps: Option<f64>) -> Result<Clip> {
    let mut names: Vec<_> = fs::read_dir(dir)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| {
            p.extension()
                .map(|e| e.eq_ignore_ascii_case("pgm"))
                .unwrap_or(false)
        })
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(Error::Format(format!(
            "{}: no .pgm frames found",
            dir.display()
        )));
    }

    let fps = match fps {
        Some(f) => f,
        None => {
            let sidecar = dir.join(FPS_SIDECAR);
            let text = fs::read_to_string(&sidecar).map_err(|_| {
                Error::Format(format!(
                    "{}: no fps given and no {} sidecar present",
                    dir.display(),
                    FPS_SIDECAR
                ))
            })?;
            text.trim().parse::<f64>().map_err(|_| {
                Error::Format(format!(
                    "{}: fps value '{}' is not a number",
                    sidecar.display(),
                    text.trim()
                ))
            })?
        }
    };

    let mut dims: Option<(usize, usize)> = None;
    let mut data = Vec::new();
    for path in &names {
        let name = path.display().to_string();
        let (h, w, pixels) = decode_pgm(&fs::read(path)?, &name)?;
        match dims {
            None => dims = Some((h, w)),
            Some((eh, ew)) if (h, w) != (eh, ew) => {
                return Err(Error::Format(format!(
                    "{}: frame is {}x{} but earlier frames are {}x{}",
                    name, h, w, eh, ew
                )));
            }
            _ => {}
        }
        data.extend(pixels);
    }
    let (h, w) = dims.unwrap();
    Clip::new(Tensor::new(vec![names.len(), h, w], data)?, fps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip() {
        let pixels: Vec<f32> = (0..6).map(|i| i as f32 * 51.0 / 255.0).collect();
        let bytes = encode_pgm(2, 3, &pixels).unwrap();
        let (h, w, back) = decode_pgm(&bytes, "mem").unwrap();
        assert_eq!((h, w), (2, 3));
        assert_eq!(back, pixels);
    }

    #[test]
    fn maxval_byte_maps_to_one() {
        let bytes = encode_pgm(1, 1, &[1.0]).unwrap();
        let (_, _, px) = decode_pgm(&bytes, "mem").unwrap();
        assert_eq!(px, vec![1.0]);
    }

    #[test]
    fn comments_in_header_are_skipped() {
        let bytes = b"P5\n# made by hand\n2 1\n255\n\x00\xff".to_vec();
        let (h, w, px) = decode_pgm(&bytes, "mem").unwrap();
        assert_eq!((h, w), (1, 2));
        assert_eq!(px, vec![0.0, 1.0]);
    }

    #[test]
    fn non_p5_rejected_by_name() {
        let msg = decode_pgm(b"P2\n1 1\n255\n0", "frame_3.pgm")
            .unwrap_err()
            .to_string();
        assert!(msg.contains("frame_3.pgm"), "{}", msg);
    }

    #[test]
    fn wrong_maxval_rejected() {
        let msg = decode_pgm(b"P5\n1 1\n65535\n\x00\x00", "m").unwrap_err().to_string();
        assert!(msg.contains("65535"), "{}", msg);
    }

    #[test]
    fn directory_loads_in_name_order() {
        let dir = tempfile::tempdir().unwrap();
        for (i, v) in [(0u8, 10u8), (1, 20), (2, 30)] {
            let mut bytes = b"P5\n1 1\n255\n".to_vec();
            bytes.push(v);
            fs::write(dir.path().join(format!("frame_{:03}.pgm", i)), bytes).unwrap();
        }
        fs::write(dir.path().join(FPS_SIDECAR), "12.5\n").unwrap();
        let clip = load_pgm_dir(dir.path(), None).unwrap();
        assert_eq!(clip.dims(), (3, 1, 1));
        assert_eq!(clip.fps(), 12.5);
        let vals: Vec<u8> = (0..3)
            .map(|t| (clip.frame(t)[0] * 255.0).round() as u8)
            .collect();
        assert_eq!(vals, vec![10, 20, 30]);
    }

    #[test]
    fn explicit_fps_beats_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.pgm"), encode_pgm(1, 1, &[0.5]).unwrap()).unwrap();
        fs::write(dir.path().join(FPS_SIDECAR), "10").unwrap();
        let clip = load_pgm_dir(dir.path(), Some(30.0)).unwrap();
        assert_eq!(clip.fps(), 30.0);
    }

    #[test]
    fn missing_fps_everywhere_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.pgm"), encode_pgm(1, 1, &[0.5]).unwrap()).unwrap();
        let msg = load_pgm_dir(dir.path(), None).unwrap_err().to_string();
        assert!(msg.contains("fps.txt"), "{}", msg);
    }

    #[test]
    fn mixed_dimensions_rejected_naming_file() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.pgm"), encode_pgm(1, 1, &[0.5]).unwrap()).unwrap();
        fs::write(dir.path().join("b.pgm"), encode_pgm(1, 2, &[0.5, 0.5]).unwrap()).unwrap();
        let msg = load_pgm_dir(dir.path(), Some(10.0)).unwrap_err().to_string();
        assert!(msg.contains("b.pgm"), "{}", msg);
    }
}
