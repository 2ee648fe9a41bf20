//! Layer graph assembly, the four model presets, parameter initialization,
//! and whole-model forward/backward passes.
//!
//! A [`ModelSpec`] is an ordered layer list that chain-checks statically: the
//! shape after every layer is computable before any parameter exists. The
//! presets share one backbone family (16/32/64 conv filters, 3x3x3 kernels,
//! 2x2x2 pools, a 128-unit hidden dense layer); they differ in conv depth and
//! dropout. Preset 4 is an architecture alias of preset 3; its differences
//! (augmentation, Nadam, learning-rate decay) live in the training config.

mod run;

pub use run::{model_backward, model_forward, stack_samples, ForwardCache, Mode};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds;
use crate::tensor::{ConvGeom, Tensor};

pub const DEFAULT_CONV_WIDTHS: [usize; 3] = [16, 32, 64];
pub const DEFAULT_DENSE_UNITS: usize = 128;
pub const DEFAULT_DROPOUT_P: f64 = 0.5;
pub const DEFAULT_KERNEL: (usize, usize, usize) = (3, 3, 3);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerSpec {
    Conv3d {
        out_channels: usize,
        geom: ConvGeom,
        activation: Activation,
    },
    MaxPool3d,
    Flatten,
    Dense {
        units: usize,
        activation: Activation,
    },
    Dropout {
        p: f64,
    },
}

/// Shape flowing between layers: a [C, T, H, W] volume or a flat vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerShape {
    Volume([usize; 4]),
    Flat(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// [C, T, H, W] of a single input sample.
    pub input_shape: [usize; 4],
    pub num_classes: usize,
    pub layers: Vec<LayerSpec>,
}

impl ModelSpec {
    /// Chain-checks the layer list and returns the shape after every layer.
    pub fn layer_shapes(&self) -> Result<Vec<LayerShape>> {
        if self.num_classes < 2 {
            return Err(Error::Config(format!(
                "num_classes must be >= 2, got {}",
                self.num_classes
            )));
        }
        if let Some(axis) = self.input_shape.iter().position(|&d| d == 0) {
            return Err(Error::Shape(format!(
                "input axis {} of {:?} is zero",
                axis, self.input_shape
            )));
        }
        let mut shapes = Vec::with_capacity(self.layers.len());
        let mut cur = LayerShape::Volume(self.input_shape);
        for (i, layer) in self.layers.iter().enumerate() {
            cur = match (layer, &cur) {
                (
                    LayerSpec::Conv3d {
                        out_channels,
                        geom,
                        ..
                    },
                    LayerShape::Volume([_, t, h, w]),
                ) => {
                    if *out_channels == 0 {
                        return Err(Error::Config(format!("layer {}: 0 conv filters", i)));
                    }
                    ConvGeom::new(geom.kernel)?; // re-validate odd extents
                    LayerShape::Volume([*out_channels, *t, *h, *w])
                }
                (LayerSpec::MaxPool3d, LayerShape::Volume([c, t, h, w])) => {
                    for (name, n) in [("T", *t), ("H", *h), ("W", *w)] {
                        if n < 2 {
                            return Err(Error::Shape(format!(
                                "layer {}: pool axis {} is {} but needs >= 2",
                                i, name, n
                            )));
                        }
                    }
                    LayerShape::Volume([*c, t / 2, h / 2, w / 2])
                }
                (LayerSpec::Flatten, LayerShape::Volume([c, t, h, w])) => {
                    LayerShape::Flat(c * t * h * w)
                }
                (LayerSpec::Dense { units, .. }, LayerShape::Flat(_)) => {
                    if *units == 0 {
                        return Err(Error::Config(format!("layer {}: 0 dense units", i)));
                    }
                    LayerShape::Flat(*units)
                }
                (LayerSpec::Dropout { p }, shape) => {
                    if !(0.0..1.0).contains(p) {
                        return Err(Error::Config(format!(
                            "layer {}: dropout p={} outside [0,1)",
                            i, p
                        )));
                    }
                    shape.clone()
                }
                (layer, shape) => {
                    return Err(Error::Shape(format!(
                        "layer {}: {:?} cannot follow shape {:?}",
                        i, layer, shape
                    )));
                }
            };
            shapes.push(cur.clone());
        }
        match shapes.last() {
            Some(LayerShape::Flat(k)) if *k == self.num_classes => {}
            other => {
                return Err(Error::Shape(format!(
                    "model must end in Dense({}) producing the class logits; final shape is {:?}",
                    self.num_classes, other
                )));
            }
        }
        if !matches!(
            self.layers.last(),
            Some(LayerSpec::Dense {
                activation: Activation::None,
                ..
            })
        ) {
            return Err(Error::Config(
                "final layer must be a Dense logits head without activation".into(),
            ));
        }
        Ok(shapes)
    }

    pub fn validate(&self) -> Result<()> {
        self.layer_shapes().map(|_| ())
    }

    /// Stable structural fingerprint used to detect stale forward caches.
    pub fn digest(&self) -> u64 {
        let json = serde_json::to_vec(self).expect("model spec serializes");
        let mut h: u64 = 0xcbf29ce484222325;
        for b in json {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        h
    }
}

/// Builds one of the four study presets.
///
/// 1: two conv/pool stages. 2: three conv/pool stages. 3: preset 2 plus a
/// dropout layer before the logits head. 4: same architecture as 3.
pub fn build_preset(model_id: u8, input_shape: [usize; 4], num_classes: usize) -> Result<ModelSpec> {
    let conv_stages = match model_id {
        1 => 2,
        2 | 3 | 4 => 3,
        other => {
            return Err(Error::Config(format!(
                "model id {} unknown; presets are 1-4",
                other
            )))
        }
    };
    let min_dim = 1usize << conv_stages;
    let [_, t, h, w] = input_shape;
    for (name, n) in [("T", t), ("H", h), ("W", w)] {
        if n < min_dim {
            return Err(Error::Shape(format!(
                "input axis {} is {} but preset {} pools {} times and needs >= {}",
                name, n, model_id, conv_stages, min_dim
            )));
        }
    }

    let geom = ConvGeom::new(DEFAULT_KERNEL)?;
    let mut layers = Vec::new();
    for stage in 0..conv_stages {
        layers.push(LayerSpec::Conv3d {
            out_channels: DEFAULT_CONV_WIDTHS[stage],
            geom,
            activation: Activation::Relu,
        });
        layers.push(LayerSpec::MaxPool3d);
    }
    layers.push(LayerSpec::Flatten);
    layers.push(LayerSpec::Dense {
        units: DEFAULT_DENSE_UNITS,
        activation: Activation::Relu,
    });
    if model_id >= 3 {
        layers.push(LayerSpec::Dropout { p: DEFAULT_DROPOUT_P });
    }
    layers.push(LayerSpec::Dense {
        units: num_classes,
        activation: Activation::None,
    });

    let spec = ModelSpec {
        input_shape,
        num_classes,
        layers,
    };
    spec.validate()?;
    Ok(spec)
}

/// Ordered named parameter tensors, one weight/bias pair per trainable layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    entries: Vec<(String, Tensor)>,
}

impl ParamSet {
    pub fn from_entries(entries: Vec<(String, Tensor)>) -> Self {
        ParamSet { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(String, Tensor)] {
        &self.entries
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.entries.iter().map(|(_, t)| t)
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.entries.iter_mut().map(|(_, t)| t)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn total_values(&self) -> usize {
        self.tensors().map(|t| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().all(|t| t.all_finite())
    }

    /// Checks that names and shapes line up with what `spec` requires.
    pub fn matches_spec(&self, spec: &ModelSpec) -> Result<()> {
        let expected = expected_param_shapes(spec)?;
        if expected.len() != self.entries.len() {
            return Err(Error::Shape(format!(
                "parameter set holds {} tensors but the model needs {}",
                self.entries.len(),
                expected.len()
            )));
        }
        for ((name, tensor), (want_name, want_shape)) in self.entries.iter().zip(&expected) {
            if name != want_name {
                return Err(Error::Shape(format!(
                    "parameter {} found where {} expected",
                    name, want_name
                )));
            }
            tensor.expect_shape(want_shape, name)?;
        }
        Ok(())
    }
}

/// Names and shapes of every trainable tensor, in layer order.
pub fn expected_param_shapes(spec: &ModelSpec) -> Result<Vec<(String, Vec<usize>)>> {
    let shapes = spec.layer_shapes()?;
    let mut out = Vec::new();
    let mut cur = LayerShape::Volume(spec.input_shape);
    for (i, layer) in spec.layers.iter().enumerate() {
        match (layer, &cur) {
            (
                LayerSpec::Conv3d {
                    out_channels, geom, ..
                },
                LayerShape::Volume([cin, ..]),
            ) => {
                let (kt, kh, kw) = geom.kernel;
                out.push((
                    format!("layer{}.weight", i),
                    vec![*out_channels, *cin, kt, kh, kw],
                ));
                out.push((format!("layer{}.bias", i), vec![*out_channels]));
            }
            (LayerSpec::Dense { units, .. }, LayerShape::Flat(d)) => {
                out.push((format!("layer{}.weight", i), vec![*units, *d]));
                out.push((format!("layer{}.bias", i), vec![*units]));
            }
            _ => {}
        }
        cur = shapes[i].clone();
    }
    Ok(out)
}

/// He-style initialization, fully determined by `seed`.
///
/// Layers feeding a ReLU draw from Normal(0, sqrt(2/fan_in)); the linear
/// logits head draws from Normal(0, sqrt(1/fan_in)). Biases start at zero.
pub fn init_params(spec: &ModelSpec, seed: u64) -> Result<ParamSet> {
    let shapes = spec.layer_shapes()?;
    let mut entries = Vec::new();
    let mut cur = LayerShape::Volume(spec.input_shape);
    for (i, layer) in spec.layers.iter().enumerate() {
        let relu_gain = |a: &Activation| match a {
            Activation::Relu => 2.0,
            Activation::None => 1.0,
        };
        match (layer, &cur) {
            (
                LayerSpec::Conv3d {
                    out_channels,
                    geom,
                    activation,
                },
                LayerShape::Volume([cin, ..]),
            ) => {
                let (kt, kh, kw) = geom.kernel;
                let fan_in = cin * kt * kh * kw;
                let shape = vec![*out_channels, *cin, kt, kh, kw];
                entries.push((
                    format!("layer{}.weight", i),
                    sample_normal(&shape, relu_gain(activation), fan_in, seed, i as u64),
                ));
                entries.push((format!("layer{}.bias", i), Tensor::zeros(&[*out_channels])));
            }
            (LayerSpec::Dense { units, activation }, LayerShape::Flat(d)) => {
                let shape = vec![*units, *d];
                entries.push((
                    format!("layer{}.weight", i),
                    sample_normal(&shape, relu_gain(activation), *d, seed, i as u64),
                ));
                entries.push((format!("layer{}.bias", i), Tensor::zeros(&[*units])));
            }
            _ => {}
        }
        cur = shapes[i].clone();
    }
    Ok(ParamSet::from_entries(entries))
}

fn sample_normal(shape: &[usize], gain: f64, fan_in: usize, seed: u64, stream: u64) -> Tensor {
    let std = (gain / fan_in as f64).sqrt();
    let normal = Normal::new(0.0f64, std).expect("std is finite and positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::mix(seed, stream));
    let n: usize = shape.iter().product();
    let data: Vec<f32> = (0..n).map(|_| normal.sample(&mut rng) as f32).collect();
    Tensor::new(shape.to_vec(), data).expect("sampled tensor matches shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_conv_layer_counts() {
        let count = |spec: &ModelSpec| {
            spec.layers
                .iter()
                .filter(|l| matches!(l, LayerSpec::Conv3d { .. }))
                .count()
        };
        let shape = [1, 35, 20, 20];
        assert_eq!(count(&build_preset(1, shape, 6).unwrap()), 2);
        assert_eq!(count(&build_preset(2, shape, 6).unwrap()), 3);
        assert_eq!(count(&build_preset(3, shape, 6).unwrap()), 3);
    }

    #[test]
    fn preset3_flatten_dim_is_1024() {
        let spec = build_preset(3, [1, 35, 20, 20], 6).unwrap();
        let shapes = spec.layer_shapes().unwrap();
        let flat = shapes
            .iter()
            .find_map(|s| match s {
                LayerShape::Flat(d) => Some(*d),
                _ => None,
            })
            .unwrap();
        assert_eq!(flat, 64 * 4 * 2 * 2);
    }

    #[test]
    fn preset3_is_preset2_plus_one_dropout() {
        let m2 = build_preset(2, [1, 35, 20, 20], 6).unwrap();
        let m3 = build_preset(3, [1, 35, 20, 20], 6).unwrap();
        assert_eq!(m3.layers.len(), m2.layers.len() + 1);
        let dropped: Vec<_> = m3
            .layers
            .iter()
            .filter(|l| !matches!(l, LayerSpec::Dropout { .. }))
            .cloned()
            .collect();
        assert_eq!(dropped, m2.layers);
        assert!(matches!(
            m3.layers[m3.layers.len() - 2],
            LayerSpec::Dropout { p } if p == 0.5
        ));
    }

    #[test]
    fn preset4_aliases_preset3_architecture() {
        let m3 = build_preset(3, [1, 16, 24, 24], 6).unwrap();
        let m4 = build_preset(4, [1, 16, 24, 24], 6).unwrap();
        assert_eq!(m3, m4);
    }

    #[test]
    fn too_small_input_reports_minimum() {
        let err = build_preset(3, [1, 35, 6, 20], 6).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains(">= 8"), "{}", msg);
    }

    #[test]
    fn init_is_seed_deterministic_with_zero_biases() {
        let spec = build_preset(1, [1, 8, 8, 8], 3).unwrap();
        let a = init_params(&spec, 42).unwrap();
        let b = init_params(&spec, 42).unwrap();
        assert_eq!(a, b);
        let c = init_params(&spec, 43).unwrap();
        assert_ne!(a, c);
        for (name, t) in a.entries() {
            if name.ends_with(".bias") {
                assert!(t.data().iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn init_std_tracks_he_scaling() {
        // conv with 16 in-channels: fan_in = 16*27 = 432, >10k weights
        let spec = ModelSpec {
            input_shape: [16, 4, 8, 8],
            num_classes: 2,
            layers: vec![
                LayerSpec::Conv3d {
                    out_channels: 32,
                    geom: ConvGeom::new((3, 3, 3)).unwrap(),
                    activation: Activation::Relu,
                },
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    units: 2,
                    activation: Activation::None,
                },
            ],
        };
        let params = init_params(&spec, 7).unwrap();
        let w = params.get("layer0.weight").unwrap();
        assert!(w.len() > 10_000);
        let mean: f64 = w.data().iter().map(|&v| v as f64).sum::<f64>() / w.len() as f64;
        let var: f64 =
            w.data().iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / w.len() as f64;
        let expect = (2.0 / 432.0f64).sqrt();
        assert!(
            (var.sqrt() - expect).abs() / expect < 0.10,
            "std {} vs {}",
            var.sqrt(),
            expect
        );
    }

    #[test]
    fn param_shapes_line_up_with_spec() {
        let spec = build_preset(3, [1, 16, 24, 24], 6).unwrap();
        let params = init_params(&spec, 1).unwrap();
        params.matches_spec(&spec).unwrap();
    }

    #[test]
    fn dense_before_flatten_rejected() {
        let spec = ModelSpec {
            input_shape: [1, 4, 4, 4],
            num_classes: 2,
            layers: vec![LayerSpec::Dense {
                units: 2,
                activation: Activation::None,
            }],
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn digest_changes_with_structure() {
        let a = build_preset(2, [1, 16, 24, 24], 6).unwrap();
        let b = build_preset(3, [1, 16, 24, 24], 6).unwrap();
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest(), a.clone().digest());
    }
}
