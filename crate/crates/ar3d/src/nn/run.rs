//! Whole-model execution: batched forward with a replayable trace, and the
//! matching backward pass producing mean-loss gradients.
//!
//! Samples in a batch are independent, so both passes fan out across a rayon
//! pool; gradient accumulation happens afterwards in sample order with f64
//! accumulators, keeping results identical from run to run regardless of
//! thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::seeds;
use crate::tensor::{
    conv3d_backward, conv3d_forward, dense_backward, dense_forward, maxpool3d_backward,
    maxpool3d_forward, relu, relu_backward, softmax_cross_entropy, PoolIndexMap, Tensor,
};

use super::{Activation, LayerSpec, ModelSpec, ParamSet};

/// Whether stochastic layers (dropout) are live or bypassed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

enum LayerTrace {
    Conv {
        input: Tensor,
        pre_activation: Option<Tensor>,
    },
    Pool {
        map: PoolIndexMap,
    },
    Flatten {
        input_shape: Vec<usize>,
    },
    Dense {
        input: Tensor,
        pre_activation: Option<Tensor>,
    },
    Dropout {
        mask: Option<Vec<f32>>,
    },
}

struct SampleTrace {
    layers: Vec<LayerTrace>,
    logits: Tensor,
}

/// Everything the backward pass needs to replay one forward batch exactly.
pub struct ForwardCache {
    spec_digest: u64,
    samples: Vec<SampleTrace>,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.samples.len()
    }
}

/// Stacks equal-shaped sample tensors into one batch tensor with a leading
/// batch axis.
pub fn stack_samples(samples: &[Tensor]) -> Result<Tensor> {
    let first = samples
        .first()
        .ok_or_else(|| Error::Shape("cannot stack an empty sample list".into()))?;
    let mut shape = vec![samples.len()];
    shape.extend_from_slice(first.shape());
    let mut data = Vec::with_capacity(samples.len() * first.len());
    for (i, s) in samples.iter().enumerate() {
        if s.shape() != first.shape() {
            return Err(Error::Shape(format!(
                "sample {} has shape {:?} but sample 0 has {:?}",
                i,
                s.shape(),
                first.shape()
            )));
        }
        data.extend_from_slice(s.data());
    }
    Tensor::new(shape, data)
}

/// Runs the model over a [B, C, T, H, W] batch and returns [B, K] logits plus
/// the trace consumed by [`model_backward`].
///
/// In train mode each sample's dropout masks are drawn from an rng seeded by
/// (seed, sample index, layer index), so outcomes do not depend on scheduling.
/// Eval mode never touches the rng and treats dropout as identity.
pub fn model_forward(
    spec: &ModelSpec,
    params: &ParamSet,
    batch: &Tensor,
    mode: Mode,
    seed: u64,
) -> Result<(Tensor, ForwardCache)> {
    params.matches_spec(spec)?;
    if batch.rank() != 5 {
        return Err(Error::Shape(format!(
            "batch must be [B, C, T, H, W]; got rank {} shape {:?}",
            batch.rank(),
            batch.shape()
        )));
    }
    let b = batch.shape()[0];
    let sample_shape: Vec<usize> = spec.input_shape.to_vec();
    if batch.shape()[1..] != sample_shape[..] {
        return Err(Error::Shape(format!(
            "batch sample shape {:?} does not match model input {:?}",
            &batch.shape()[1..],
            sample_shape
        )));
    }

    let stride: usize = sample_shape.iter().product();
    let samples: Vec<SampleTrace> = (0..b)
        .into_par_iter()
        .map(|s| {
            let data = batch.data()[s * stride..(s + 1) * stride].to_vec();
            let input = Tensor::new(sample_shape.clone(), data)?;
            forward_sample(spec, params, input, mode, seed, s)
        })
        .collect::<Result<Vec<_>>>()?;

    let k = spec.num_classes;
    let mut logits = Vec::with_capacity(b * k);
    for trace in &samples {
        logits.extend_from_slice(trace.logits.data());
    }
    let logits = Tensor::new(vec![b, k], logits)?;
    let cache = ForwardCache {
        spec_digest: spec.digest(),
        samples,
    };
    Ok((logits, cache))
}

fn forward_sample(
    spec: &ModelSpec,
    params: &ParamSet,
    input: Tensor,
    mode: Mode,
    seed: u64,
    sample_index: usize,
) -> Result<SampleTrace> {
    let mut x = input;
    let mut layers = Vec::with_capacity(spec.layers.len());
    for (i, layer) in spec.layers.iter().enumerate() {
        match layer {
            LayerSpec::Conv3d {
                geom, activation, ..
            } => {
                let w = params.get(&format!("layer{}.weight", i)).unwrap();
                let bias = params.get(&format!("layer{}.bias", i)).unwrap();
                let z = conv3d_forward(&x, w, bias, geom)?;
                let (y, pre) = apply_activation(z, activation)?;
                layers.push(LayerTrace::Conv {
                    input: x,
                    pre_activation: pre,
                });
                x = y;
            }
            LayerSpec::MaxPool3d => {
                let (y, map) = maxpool3d_forward(&x)?;
                layers.push(LayerTrace::Pool { map });
                x = y;
            }
            LayerSpec::Flatten => {
                let input_shape = x.shape().to_vec();
                let flat = x.len();
                layers.push(LayerTrace::Flatten { input_shape });
                x = x.reshaped(vec![flat])?;
            }
            LayerSpec::Dense { activation, .. } => {
                let w = params.get(&format!("layer{}.weight", i)).unwrap();
                let bias = params.get(&format!("layer{}.bias", i)).unwrap();
                let z = dense_forward(&x, w, bias)?;
                let (y, pre) = apply_activation(z, activation)?;
                layers.push(LayerTrace::Dense {
                    input: x,
                    pre_activation: pre,
                });
                x = y;
            }
            LayerSpec::Dropout { p } => {
                let mask = match mode {
                    Mode::Eval => None,
                    Mode::Train => {
                        let mut rng = ChaCha8Rng::seed_from_u64(seeds::mix3(
                            seed,
                            sample_index as u64,
                            i as u64,
                        ));
                        let scale = (1.0 / (1.0 - p)) as f32;
                        let mask: Vec<f32> = (0..x.len())
                            .map(|_| if rng.gen::<f64>() < *p { 0.0 } else { scale })
                            .collect();
                        let data: Vec<f32> = x
                            .data()
                            .iter()
                            .zip(&mask)
                            .map(|(&v, &m)| v * m)
                            .collect();
                        x = Tensor::new(x.shape().to_vec(), data)?;
                        Some(mask)
                    }
                };
                layers.push(LayerTrace::Dropout { mask });
            }
        }
    }
    Ok(SampleTrace { layers, logits: x })
}

fn apply_activation(z: Tensor, activation: &Activation) -> Result<(Tensor, Option<Tensor>)> {
    match activation {
        Activation::None => Ok((z, None)),
        Activation::Relu => {
            let y = relu(&z);
            Ok((y, Some(z)))
        }
    }
}

/// Computes the mean cross-entropy loss over the cached batch and its
/// gradient with respect to every parameter.
///
/// The cache must come from a [`model_forward`] call on the same model
/// structure; a digest mismatch is rejected rather than silently producing
/// gradients for the wrong graph.
pub fn model_backward(
    spec: &ModelSpec,
    params: &ParamSet,
    cache: &ForwardCache,
    targets: &[usize],
) -> Result<(f64, ParamSet)> {
    if cache.spec_digest != spec.digest() {
        return Err(Error::Train(
            "forward cache was built by a different model structure".into(),
        ));
    }
    params.matches_spec(spec)?;
    if targets.len() != cache.samples.len() {
        return Err(Error::Shape(format!(
            "{} targets for a batch of {}",
            targets.len(),
            cache.samples.len()
        )));
    }

    let per_sample: Vec<(f64, Vec<(String, Tensor)>)> = cache
        .samples
        .par_iter()
        .zip(targets.par_iter())
        .map(|(trace, &target)| backward_sample(spec, params, trace, target))
        .collect::<Result<Vec<_>>>()?;

    let b = per_sample.len() as f64;
    let mut loss_sum = 0.0f64;
    let mut acc: Vec<(String, Vec<usize>, Vec<f64>)> = params
        .entries()
        .iter()
        .map(|(name, t)| (name.clone(), t.shape().to_vec(), vec![0.0; t.len()]))
        .collect();
    for (loss, grads) in &per_sample {
        loss_sum += loss;
        for ((_, g), (_, _, sums)) in grads.iter().zip(acc.iter_mut()) {
            for (s, &v) in sums.iter_mut().zip(g.data()) {
                *s += v as f64;
            }
        }
    }
    let entries = acc
        .into_iter()
        .map(|(name, shape, sums)| {
            let data: Vec<f32> = sums.iter().map(|&s| (s / b) as f32).collect();
            Tensor::new(shape, data).map(|t| (name, t))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((loss_sum / b, ParamSet::from_entries(entries)))
}

fn backward_sample(
    spec: &ModelSpec,
    params: &ParamSet,
    trace: &SampleTrace,
    target: usize,
) -> Result<(f64, Vec<(String, Tensor)>)> {
    let out = softmax_cross_entropy(&trace.logits, target)?;
    let mut grad = out.grad_logits;
    let mut grads: Vec<(String, Tensor)> = Vec::new();
    for (i, layer) in spec.layers.iter().enumerate().rev() {
        match (layer, &trace.layers[i]) {
            (
                LayerSpec::Conv3d { geom, .. },
                LayerTrace::Conv {
                    input,
                    pre_activation,
                },
            ) => {
                if let Some(z) = pre_activation {
                    grad = relu_backward(z, &grad)?;
                }
                let w = params.get(&format!("layer{}.weight", i)).unwrap();
                let g = conv3d_backward(input, w, geom, &grad)?;
                grads.push((format!("layer{}.bias", i), g.bias));
                grads.push((format!("layer{}.weight", i), g.weights));
                grad = g.input;
            }
            (LayerSpec::MaxPool3d, LayerTrace::Pool { map }) => {
                grad = maxpool3d_backward(map, &grad)?;
            }
            (LayerSpec::Flatten, LayerTrace::Flatten { input_shape }) => {
                grad = grad.reshaped(input_shape.clone())?;
            }
            (
                LayerSpec::Dense { .. },
                LayerTrace::Dense {
                    input,
                    pre_activation,
                },
            ) => {
                if let Some(z) = pre_activation {
                    grad = relu_backward(z, &grad)?;
                }
                let w = params.get(&format!("layer{}.weight", i)).unwrap();
                let g = dense_backward(input, w, &grad)?;
                grads.push((format!("layer{}.bias", i), g.bias));
                grads.push((format!("layer{}.weight", i), g.weights));
                grad = g.input;
            }
            (LayerSpec::Dropout { .. }, LayerTrace::Dropout { mask }) => {
                if let Some(mask) = mask {
                    let data: Vec<f32> = grad
                        .data()
                        .iter()
                        .zip(mask)
                        .map(|(&v, &m)| v * m)
                        .collect();
                    grad = Tensor::new(grad.shape().to_vec(), data)?;
                }
            }
            _ => {
                return Err(Error::Train(format!(
                    "forward trace at layer {} does not match the model structure",
                    i
                )));
            }
        }
    }
    // reversed traversal pushed (bias, weight) pairs deepest-last; restore
    // the parameter-set ordering (layer order, weight before bias)
    grads.reverse();
    Ok((out.loss, grads))
}
