//! Single-file weight archive: everything inference needs in one blob.
//!
//! Layout, little-endian: magic `AR3D`, u32 header length, a UTF-8 JSON
//! header (format version, model spec, preprocess config, ordered class
//! names), then one record per parameter tensor in layer order: u8 ndim,
//! u32 dims, raw f32 payload. Weights are stored losslessly and the byte
//! stream is canonical, so save -> load -> save reproduces the file exactly
//! and the header hash can serve as a model fingerprint.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::{expected_param_shapes, ModelSpec, ParamSet};
use crate::tensor::Tensor;
use crate::vision::PreprocessConfig;

pub const ARCHIVE_MAGIC: [u8; 4] = *b"AR3D";
pub const ARCHIVE_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ArchiveHeader {
    format_version: u32,
    model: ModelSpec,
    preprocess: PreprocessConfig,
    classes: Vec<String>,
}

/// A trained model bundled with its preprocessing config and class names.
#[derive(Debug, Clone)]
pub struct WeightArchive {
    pub spec: ModelSpec,
    pub preprocess: PreprocessConfig,
    pub classes: Vec<String>,
    pub params: ParamSet,
}

impl WeightArchive {
    /// Validates the bundle: parameters match the model spec, class count matches
    /// the logits head, and the preprocess output feeds the model input.
    pub fn new(
        spec: ModelSpec,
        params: ParamSet,
        preprocess: PreprocessConfig,
        classes: Vec<String>,
    ) -> Result<Self> {
        params.matches_spec(&spec)?;
        preprocess.validate()?;
        if classes.len() != spec.num_classes {
            return Err(Error::Config(format!(
                "{} class names for a {}-way model",
                classes.len(),
                spec.num_classes
            )));
        }
        let produced = [1, preprocess.num_frames, preprocess.target_h, preprocess.target_w];
        if spec.input_shape != produced {
            return Err(Error::Config(format!(
                "preprocess config produces {:?} but the model expects {:?}",
                produced, spec.input_shape
            )));
        }
        Ok(WeightArchive {
            spec,
            preprocess,
            classes,
            params,
        })
    }

    fn header_json(&self) -> Vec<u8> {
        let header = ArchiveHeader {
            format_version: ARCHIVE_VERSION,
            model: self.spec.clone(),
            preprocess: self.preprocess.clone(),
            classes: self.classes.clone(),
        };
        serde_json::to_vec(&header).expect("header serializes")
    }

    /// Hex SHA-256 of the canonical header JSON; stable across round trips.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.header_json());
        digest.iter().map(|b| format!("{:02x}", b)).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = self.header_json();
        let mut out = Vec::with_capacity(
            8 + header.len() + self.params.total_values() * 4 + self.params.len() * 8,
        );
        out.extend_from_slice(&ARCHIVE_MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for tensor in self.params.tensors() {
            out.push(tensor.rank() as u8);
            for &d in tensor.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in tensor.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {}", path.display(), e))))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        let magic = cur.take(4, "magic")?;
        if magic != ARCHIVE_MAGIC {
            return Err(Error::Format(format!(
                "bad magic {:?} at byte offset 0 (want \"AR3D\")",
                magic
            )));
        }
        let header_len = u32::from_le_bytes(cur.take(4, "header length")?.try_into().unwrap()) as usize;
        let header_bytes = cur.take(header_len, "JSON header")?;
        let header: ArchiveHeader = serde_json::from_slice(header_bytes)
            .map_err(|e| Error::Format(format!("archive header: {}", e)))?;
        if header.format_version != ARCHIVE_VERSION {
            return Err(Error::Format(format!(
                "archive header: format_version {} unsupported (want {})",
                header.format_version, ARCHIVE_VERSION
            )));
        }

        let expected = expected_param_shapes(&header.model)
            .map_err(|e| Error::Format(format!("archive header: model field invalid: {}", e)))?;
        let mut entries = Vec::with_capacity(expected.len());
        for (name, want_shape) in expected {
            let ndim = cur.take(1, &format!("{} ndim", name))?[0] as usize;
            if ndim != want_shape.len() {
                return Err(Error::Format(format!(
                    "{}: record has {} dims but the model needs {} ({:?})",
                    name,
                    ndim,
                    want_shape.len(),
                    want_shape
                )));
            }
            let mut shape = Vec::with_capacity(ndim);
            for d in 0..ndim {
                let raw = cur.take(4, &format!("{} dim {}", name, d))?;
                shape.push(u32::from_le_bytes(raw.try_into().unwrap()) as usize);
            }
            if shape != want_shape {
                return Err(Error::Format(format!(
                    "{}: record shape {:?} does not match the model's {:?}",
                    name, shape, want_shape
                )));
            }
            let count: usize = shape.iter().product();
            let raw = cur.take(count * 4, &format!("{} payload", name))?;
            let data: Vec<f32> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            entries.push((name, Tensor::new(shape, data)?));
        }
        if cur.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} unexpected trailing bytes at offset {}",
                bytes.len() - cur.pos,
                cur.pos
            )));
        }

        WeightArchive::new(
            header.model,
            ParamSet::from_entries(entries),
            header.preprocess,
            header.classes,
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {}", path.display(), e))))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Format(msg) => Error::Format(format!("{}: {}", path.display(), msg)),
            other => other,
        })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or_else(|| {
            Error::Format(format!("{}: length overflows", what))
        })?;
        if end > self.bytes.len() {
            return Err(Error::Format(format!(
                "truncated while reading {} at byte offset {} (need {} bytes, {} remain)",
                what,
                self.pos,
                n,
                self.bytes.len() - self.pos
            )));
        }
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }
}
