//! Video activity recognition with small 3D convolutional networks.
//!
//! The crate covers the full workflow: decoding raw clips, background
//! subtraction and frame sampling, four model presets trained with Adam or
//! Nadam, a portable weight archive, offline evaluation, and a polling edge
//! runner that classifies clips dropped into a directory and emits JSON
//! events.
//!
//! Every numeric kernel is deterministic: given the same seed, training and
//! inference produce bit-identical results across runs and thread counts.
//! Tensors store f32 values; every reduction accumulates in f64.
//!
//! The `examples/` directory is the guided tour, one runnable program per
//! capability:
//!
//! - `build_presets` walks the four architectures and their shape chains
//! - `preprocess_pipeline` runs sampling, background subtraction, resizing
//! - `synthetic_dataset` generates a labeled motion dataset on disk
//! - `train_synthetic` trains a preset end to end and prints history
//! - `archive_roundtrip` saves, fingerprints, and reloads weights
//! - `resolution_study` measures accuracy/time across input resolutions
//! - `edge_watch` starts the directory-watching inference runner
//! - `custom_model` assembles a non-preset layer stack
//!
//! The `ar3d` binary wraps the same library surface in subcommands
//! (`synth-data`, `preprocess`, `train`, `eval`, `predict`,
//! `resolution-study`, `watch`).

pub mod archive;
pub mod cli;
pub mod data;
pub mod edge;
pub mod error;
pub mod nn;
pub mod optim;
pub mod seeds;
pub mod tensor;
pub mod train;
pub mod vision;

pub use error::{Error, Result};
pub use tensor::Tensor;
