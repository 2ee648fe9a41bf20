//! Adam and Nadam parameter updates plus the per-epoch learning-rate decay
//! schedule.
//!
//! Both optimizers are pure state transitions: the caller owns an
//! [`OptimState`] and feeds it back in. Update arithmetic runs in 64-bit and
//! is elementwise independent, so parameter order never changes a result.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ParamSet;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimKind {
    Adam,
    Nadam,
}

/// Optimizer hyperparameters. `decay` is the time-based decay constant k in
/// lr = lr0 / (1 + k * epoch).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimConfig {
    pub kind: OptimKind,
    pub lr0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub decay: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self::adam()
    }
}

impl OptimConfig {
    pub fn adam() -> Self {
        OptimConfig {
            kind: OptimKind::Adam,
            lr0: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            decay: 0.01,
        }
    }

    pub fn nadam() -> Self {
        OptimConfig {
            kind: OptimKind::Nadam,
            ..Self::adam()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0) {
            return Err(Error::Config(format!("lr0 must be > 0, got {}", self.lr0)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{} must lie in (0,1), got {}", name, b)));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if self.decay < 0.0 {
            return Err(Error::Config(format!("decay must be >= 0, got {}", self.decay)));
        }
        Ok(())
    }
}

/// First/second moment estimates mirroring a [`ParamSet`], plus the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl OptimState {
    /// Fresh zeroed state shaped like `params`.
    pub fn new(params: &ParamSet) -> Self {
        let zeros: Vec<Tensor> = params
            .tensors()
            .map(|t| Tensor::zeros(t.shape()))
            .collect();
        OptimState {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Canonical little-endian byte encoding; restoring mid-run continues
    /// bit-identically.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&(self.m.len() as u32).to_le_bytes());
        for t in self.m.iter().chain(&self.v) {
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &x in t.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, at: 0 };
        let step = u64::from_le_bytes(cur.take::<8>()?);
        let count = u32::from_le_bytes(cur.take::<4>()?) as usize;
        let mut tensors = Vec::with_capacity(count * 2);
        for _ in 0..count * 2 {
            let rank = u32::from_le_bytes(cur.take::<4>()?) as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(u32::from_le_bytes(cur.take::<4>()?) as usize);
            }
            let n: usize = shape.iter().product();
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                data.push(f32::from_le_bytes(cur.take::<4>()?));
            }
            tensors.push(Tensor::new(shape, data)?);
        }
        if cur.at != bytes.len() {
            return Err(Error::Format(format!(
                "optimizer state: {} trailing bytes at offset {}",
                bytes.len() - cur.at,
                cur.at
            )));
        }
        let v = tensors.split_off(count);
        Ok(OptimState {
            step,
            m: tensors,
            v,
        })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        if self.at + N > self.bytes.len() {
            return Err(Error::Format(format!(
                "optimizer state truncated at byte offset {}",
                self.at
            )));
        }
        let mut buf = [0u8; N];
        buf.copy_from_slice(&self.bytes[self.at..self.at + N]);
        self.at += N;
        Ok(buf)
    }
}

/// One Adam update at learning rate `lr`; consumes and returns params/state.
pub fn adam_step(
    mut params: ParamSet,
    grads: &ParamSet,
    mut state: OptimState,
    cfg: &OptimConfig,
    lr: f64,
) -> Result<(ParamSet, OptimState)> {
    step_checked(&mut params, grads, &mut state, cfg, lr, false)?;
    Ok((params, state))
}

/// One Nadam update: Adam with the Nesterov-corrected first moment
/// theta -= lr * (b1*m/(1-b1^(t+1)) + (1-b1)*g/(1-b1^t)) / (sqrt(v_hat)+eps).
pub fn nadam_step(
    mut params: ParamSet,
    grads: &ParamSet,
    mut state: OptimState,
    cfg: &OptimConfig,
    lr: f64,
) -> Result<(ParamSet, OptimState)> {
    step_checked(&mut params, grads, &mut state, cfg, lr, true)?;
    Ok((params, state))
}

/// Dispatches on `cfg.kind`.
pub fn optim_step(
    params: ParamSet,
    grads: &ParamSet,
    state: OptimState,
    cfg: &OptimConfig,
    lr: f64,
) -> Result<(ParamSet, OptimState)> {
    match cfg.kind {
        OptimKind::Adam => adam_step(params, grads, state, cfg, lr),
        OptimKind::Nadam => nadam_step(params, grads, state, cfg, lr),
    }
}

fn step_checked(
    params: &mut ParamSet,
    grads: &ParamSet,
    state: &mut OptimState,
    cfg: &OptimConfig,
    lr: f64,
    nesterov: bool,
) -> Result<()> {
    cfg.validate()?;
    if !(lr > 0.0) {
        return Err(Error::Config(format!("learning rate must be > 0, got {}", lr)));
    }
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Shape(format!(
            "optimizer: {} parameter tensors vs {} gradient tensors vs state of {}",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (p, g) in params.tensors().zip(grads.tensors()) {
        g.expect_shape(p.shape(), "optimizer gradient vs parameter")?;
        if !g.all_finite() {
            return Err(Error::Train(
                "non-finite gradient encountered; aborting update".into(),
            ));
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let b1 = cfg.beta1;
    let b2 = cfg.beta2;
    let bc1 = 1.0 - b1.powi(t);
    let bc2 = 1.0 - b2.powi(t);
    let bc1_next = 1.0 - b1.powi(t + 1);

    for ((p, g), (m, v)) in params
        .tensors_mut()
        .zip(grads.tensors())
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        let pd = p.data_mut();
        let gd = g.data();
        let md = m.data_mut();
        let vd = v.data_mut();
        for i in 0..pd.len() {
            let gi = gd[i] as f64;
            let mi = b1 * md[i] as f64 + (1.0 - b1) * gi;
            let vi = b2 * vd[i] as f64 + (1.0 - b2) * gi * gi;
            md[i] = mi as f32;
            vd[i] = vi as f32;
            let v_hat = vi / bc2;
            let numer = if nesterov {
                b1 * mi / bc1_next + (1.0 - b1) * gi / bc1
            } else {
                mi / bc1
            };
            pd[i] = (pd[i] as f64 - lr * numer / (v_hat.sqrt() + cfg.epsilon)) as f32;
        }
    }
    Ok(())
}

/// Time-based decay: lr = lr0 / (1 + k * epoch); k = 0 keeps lr constant.
pub fn decayed_lr(cfg: &OptimConfig, epoch: usize) -> f64 {
    cfg.lr0 / (1.0 + cfg.decay * epoch as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ParamSet;

    fn scalar_params(v: f32) -> ParamSet {
        ParamSet::from_entries(vec![("theta".to_string(), Tensor::new(vec![1], vec![v]).unwrap())])
    }

    fn run_quadratic(kind: OptimKind) -> (f32, usize) {
        // minimize 0.5*(theta - 3)^2 from theta = 0 at lr = 0.05
        let cfg = OptimConfig {
            kind,
            lr0: 0.05,
            ..OptimConfig::adam()
        };
        let mut params = scalar_params(0.0);
        let mut state = OptimState::new(&params);
        let mut first_hit = usize::MAX;
        for step in 1..=2000 {
            let theta = params.tensors().next().unwrap().data()[0];
            let g = scalar_params(theta - 3.0);
            let (p, s) = optim_step(params, &g, state, &cfg, cfg.lr0).unwrap();
            params = p;
            state = s;
            let theta = params.tensors().next().unwrap().data()[0];
            if (theta - 3.0).abs() < 1e-3 && first_hit == usize::MAX {
                first_hit = step;
            }
        }
        let theta = params.tensors().next().unwrap().data()[0];
        (theta, first_hit)
    }

    #[test]
    fn adam_zero_gradient_leaves_params_unchanged() {
        let cfg = OptimConfig::adam();
        let params = scalar_params(1.5);
        let state = OptimState::new(&params);
        let (p, s) = adam_step(params, &scalar_params(0.0), state, &cfg, 1e-3).unwrap();
        assert_eq!(p.tensors().next().unwrap().data()[0], 1.5);
        assert_eq!(s.step_count(), 1);
    }

    #[test]
    fn adam_first_step_matches_closed_form() {
        // from fresh state: delta = -lr * g / (|g| + eps)
        let cfg = OptimConfig::adam();
        for &g in &[0.7f32, -2.5, 0.003] {
            let params = scalar_params(0.0);
            let state = OptimState::new(&params);
            let (p, _) = adam_step(params, &scalar_params(g), state, &cfg, cfg.lr0).unwrap();
            let expect = -cfg.lr0 * g as f64 / (g.abs() as f64 + cfg.epsilon);
            let got = p.tensors().next().unwrap().data()[0] as f64;
            assert!(
                (got - expect).abs() < 1e-9,
                "g={} got={} expect={}",
                g,
                got,
                expect
            );
        }
    }

    #[test]
    fn adam_converges_on_quadratic() {
        let (theta, first_hit) = run_quadratic(OptimKind::Adam);
        assert!((theta - 3.0).abs() < 1e-3, "theta = {}", theta);
        assert!(first_hit <= 2000);
    }

    #[test]
    fn nadam_converges_on_quadratic() {
        let (theta, _) = run_quadratic(OptimKind::Nadam);
        assert!((theta - 3.0).abs() < 1e-3, "theta = {}", theta);
    }

    #[test]
    fn nadam_with_beta1_zero_equals_adam() {
        let cfg = OptimConfig {
            beta1: 0.0,
            ..OptimConfig::adam()
        };
        let mut pa = scalar_params(0.2);
        let mut pn = scalar_params(0.2);
        let mut sa = OptimState::new(&pa);
        let mut sn = OptimState::new(&pn);
        for i in 0..20 {
            let g = scalar_params(0.3 - i as f32 * 0.01);
            let (a, s1) = adam_step(pa, &g, sa, &cfg, 0.01).unwrap();
            let (n, s2) = nadam_step(pn, &g, sn, &cfg, 0.01).unwrap();
            pa = a;
            pn = n;
            sa = s1;
            sn = s2;
            assert_eq!(
                pa.tensors().next().unwrap().data()[0],
                pn.tensors().next().unwrap().data()[0]
            );
        }
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let cfg = OptimConfig::adam();
        let params = scalar_params(0.0);
        let state = OptimState::new(&params);
        let err = adam_step(params, &scalar_params(f32::NAN), state, &cfg, 1e-3).unwrap_err();
        assert!(matches!(err, Error::Train(_)));
    }

    #[test]
    fn decay_schedule_points() {
        let cfg = OptimConfig::adam(); // lr0 = 1e-3, k = 0.01
        assert_eq!(decayed_lr(&cfg, 0), 1e-3);
        assert!((decayed_lr(&cfg, 100) - 5e-4).abs() < 1e-18);
        let flat = OptimConfig {
            decay: 0.0,
            ..OptimConfig::adam()
        };
        assert_eq!(decayed_lr(&flat, 12345), 1e-3);
    }

    #[test]
    fn state_roundtrip_continues_bit_identically() {
        let cfg = OptimConfig::adam();
        let mut params = scalar_params(0.0);
        let mut state = OptimState::new(&params);
        for i in 0..10 {
            let g = scalar_params(1.0 / (i as f32 + 1.0));
            let (p, s) = adam_step(params, &g, state, &cfg, 0.01).unwrap();
            params = p;
            state = s;
        }
        let restored = OptimState::from_bytes(&state.to_bytes()).unwrap();
        assert_eq!(restored, state);
        let g = scalar_params(0.21);
        let (p1, s1) = adam_step(params.clone(), &g, state, &cfg, 0.01).unwrap();
        let (p2, s2) = adam_step(params, &g, restored, &cfg, 0.01).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(s1, s2);
    }
}
