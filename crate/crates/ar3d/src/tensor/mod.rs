//! Dense N-dimensional float arrays and the forward/backward numeric kernels
//! for every layer kind used by the models.
//!
//! Storage is 32-bit, row-major (last axis fastest). Every reduction inside a
//! kernel accumulates in 64-bit. All kernels are pure: identical inputs give
//! bit-identical outputs, and nothing here holds interior mutability, so the
//! whole module is safe to call from multiple threads.

mod kernels;

pub use kernels::{
    conv3d_backward, conv3d_forward, dense_backward, dense_forward, maxpool3d_backward,
    maxpool3d_forward, relu, relu_backward, softmax, softmax_cross_entropy, Conv3dGrads,
    DenseGrads, PoolIndexMap, SoftmaxOutput, POOL_WINDOW,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense N-dimensional array of `f32`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    /// Builds a tensor, checking that `data` fills `shape` exactly and that
    /// every dimension is at least 1.
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        Self::check_shape(&shape)?;
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "shape {:?} holds {} elements but {} were supplied",
                shape,
                expected,
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::check_shape(shape).expect("zeros: invalid shape");
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: &[usize], value: f32) -> Self {
        let mut t = Self::zeros(shape);
        t.data.fill(value);
        t
    }

    fn check_shape(shape: &[usize]) -> Result<()> {
        if shape.is_empty() {
            return Err(Error::Shape("tensor shape must be non-empty".into()));
        }
        if let Some(axis) = shape.iter().position(|&d| d == 0) {
            return Err(Error::Shape(format!(
                "axis {} of shape {:?} is zero; every dim must be >= 1",
                axis, shape
            )));
        }
        Ok(())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Reinterprets the same flat data under a new shape of equal volume.
    pub fn reshaped(&self, shape: Vec<usize>) -> Result<Tensor> {
        Tensor::new(shape, self.data.clone())
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f32> {
        self.data.iter()
    }

    /// True if every element is finite.
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Checks rank and per-axis dims against `expected`, naming the axis on failure.
    pub fn expect_shape(&self, expected: &[usize], what: &str) -> Result<()> {
        if self.shape.len() != expected.len() {
            return Err(Error::Shape(format!(
                "{}: rank {} found, rank {} required (shape {:?} vs {:?})",
                what,
                self.shape.len(),
                expected.len(),
                self.shape,
                expected
            )));
        }
        for (axis, (&got, &want)) in self.shape.iter().zip(expected).enumerate() {
            if got != want {
                return Err(Error::Shape(format!(
                    "{}: axis {} is {} but {} required (shape {:?} vs {:?})",
                    what, axis, got, want, self.shape, expected
                )));
            }
        }
        Ok(())
    }
}

/// Convolution geometry: odd kernel extents, stride fixed at 1 per axis, and
/// symmetric zero "same"-padding so output dims equal input dims.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGeom {
    /// Kernel extents (kT, kH, kW); all odd.
    pub kernel: (usize, usize, usize),
}

impl ConvGeom {
    pub fn new(kernel: (usize, usize, usize)) -> Result<Self> {
        let (kt, kh, kw) = kernel;
        for (axis, k) in [("kT", kt), ("kH", kh), ("kW", kw)] {
            if k == 0 || k % 2 == 0 {
                return Err(Error::Config(format!(
                    "kernel axis {} is {}; odd extents >= 1 are required for symmetric same-padding",
                    axis, k
                )));
            }
        }
        Ok(ConvGeom { kernel })
    }

    /// Zero-padding per axis: (k - 1) / 2.
    pub fn padding(&self) -> (usize, usize, usize) {
        let (kt, kh, kw) = self.kernel;
        ((kt - 1) / 2, (kh - 1) / 2, (kw - 1) / 2)
    }
}
