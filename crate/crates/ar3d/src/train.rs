//! Training, evaluation, prediction, and the input-resolution study.
//!
//! [`train`] runs seeded mini-batch optimization with a per-epoch decayed
//! learning rate, records a [`History`] row per epoch, and retains both the
//! final parameters and the best-validation-loss checkpoint. Everything is
//! determined by the manifest, config, and seed: two identical runs produce
//! bit-identical histories and weights.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{augment_training_set, load_split, AugmentMode, DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::nn::{
    build_preset, init_params, model_backward, model_forward, stack_samples, Mode, ModelSpec,
    ParamSet,
};
use crate::optim::{decayed_lr, optim_step, OptimConfig, OptimKind, OptimState};
use crate::seeds;
use crate::tensor::{softmax, softmax_cross_entropy};
use crate::tensor::Tensor;
use crate::vision::{preprocess, Clip, PreprocessConfig};

/// Reference test accuracies (percent) reported for the four presets on the
/// public datasets, as (dataset, without subtraction, with subtraction).
/// Desk-scale runs on synthetic data are not expected to reproduce these;
/// they are printed next to measured numbers for comparison when evaluating.
pub const REFERENCE_ACCURACY: [(&str, [f64; 4], [f64; 4]); 3] = [
    ("kth", [32.00, 57.00, 62.00, 73.00], [67.00, 64.00, 84.00, 96.00]),
    ("weizmann", [26.00, 63.33, 63.33, 80.00], [83.33, 86.67, 93.33, 100.00]),
    ("ut-interaction", [45.00, 50.00, 60.00, 60.00], [70.00, 75.00, 70.00, 80.00]),
];

/// Reference accuracies (percent) for preset 3 at varying input resolutions.
pub const REFERENCE_RESOLUTION_ACCURACY: [(usize, f64); 3] =
    [(20, 84.00), (40, 82.00), (60, 84.00)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Preset 1-4.
    pub model_id: u8,
    pub optim: OptimConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub augment: AugmentMode,
    pub preprocess: PreprocessConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::for_model(3).expect("preset 3 exists")
    }
}

impl TrainConfig {
    /// Canonical settings per preset: presets 1-3 use Adam at a constant
    /// learning rate and no augmentation; preset 4 uses Nadam, learning-rate
    /// decay, and flip augmentation.
    pub fn for_model(model_id: u8) -> Result<Self> {
        if !(1..=4).contains(&model_id) {
            return Err(Error::Config(format!(
                "model id {} unknown; presets are 1-4",
                model_id
            )));
        }
        let (optim, augment) = if model_id == 4 {
            (OptimConfig::nadam(), AugmentMode::Model4)
        } else {
            (
                OptimConfig {
                    decay: 0.0,
                    ..OptimConfig::adam()
                },
                AugmentMode::None,
            )
        };
        Ok(TrainConfig {
            model_id,
            optim,
            epochs: 50,
            batch_size: 16,
            seed: 0,
            augment,
            preprocess: PreprocessConfig::kth(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=4).contains(&self.model_id) {
            return Err(Error::Config(format!(
                "model id {} unknown; presets are 1-4",
                self.model_id
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        self.optim.validate()?;
        self.preprocess.validate()
    }
}

/// One completed epoch: losses, validation accuracy, and the lr in effect.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    pub lr: f64,
}

/// Per-epoch training curve.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    rows: Vec<EpochStats>,
}

impl History {
    pub fn push(&mut self, row: EpochStats) {
        self.rows.push(row);
    }

    pub fn rows(&self) -> &[EpochStats] {
        &self.rows
    }

    /// First epoch whose validation loss drops to `threshold` or below.
    pub fn epochs_to_val_loss(&self, threshold: f64) -> Option<usize> {
        self.rows
            .iter()
            .find(|r| r.val_loss <= threshold)
            .map(|r| r.epoch)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,val_acc,lr\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6}\n",
                r.epoch, r.train_loss, r.val_loss, r.val_acc, r.lr
            ));
        }
        out
    }
}

/// K x K counts, rows = true class, columns = predicted class.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    classes: Vec<String>,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: Vec<String>) -> Self {
        let k = classes.len();
        ConfusionMatrix {
            classes,
            counts: vec![0; k * k],
        }
    }

    pub fn record(&mut self, true_class: usize, predicted: usize) {
        let k = self.classes.len();
        self.counts[true_class * k + predicted] += 1;
    }

    pub fn count(&self, true_class: usize, predicted: usize) -> u64 {
        self.counts[true_class * self.classes.len() + predicted]
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        let k = self.classes.len();
        (0..k).map(|i| self.counts[i * k + i]).sum()
    }

    pub fn row_sum(&self, true_class: usize) -> u64 {
        let k = self.classes.len();
        self.counts[true_class * k..(true_class + 1) * k].iter().sum()
    }

    pub fn accuracy(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            self.trace() as f64 / self.total() as f64
        }
    }

    /// Header row of class names, then one row per true class.
    pub fn to_csv(&self) -> String {
        let k = self.classes.len();
        let mut out = format!("true\\predicted,{}\n", self.classes.join(","));
        for t in 0..k {
            out.push_str(&self.classes[t]);
            for p in 0..k {
                out.push_str(&format!(",{}", self.counts[t * k + p]));
            }
            out.push('\n');
        }
        out
    }
}

/// Everything a training run produces.
#[derive(Debug, Clone)]
pub struct TrainResult {
    pub spec: ModelSpec,
    pub final_params: ParamSet,
    pub best_params: ParamSet,
    /// Epoch whose validation loss was lowest (earliest wins ties).
    pub best_epoch: usize,
    pub history: History,
}

struct PreparedSet {
    inputs: Vec<Tensor>,
    targets: Vec<usize>,
}

fn prepare(clips: &[crate::data::LabeledClip], cfg: &PreprocessConfig) -> Result<PreparedSet> {
    let mut inputs = Vec::with_capacity(clips.len());
    let mut targets = Vec::with_capacity(clips.len());
    for c in clips {
        let tensor = preprocess(&c.clip, cfg)
            .map_err(|e| Error::Clip(format!("{}: {}", c.path.display(), e)))?;
        inputs.push(tensor);
        targets.push(c.class);
    }
    Ok(PreparedSet { inputs, targets })
}

/// Mean eval-mode loss, plus per-sample predictions (argmax, lowest index
/// wins ties).
fn eval_pass(
    spec: &ModelSpec,
    params: &ParamSet,
    set: &PreparedSet,
    batch_size: usize,
) -> Result<(f64, Vec<usize>)> {
    let mut loss_sum = 0.0f64;
    let mut preds = Vec::with_capacity(set.inputs.len());
    for (chunk, targets) in set
        .inputs
        .chunks(batch_size)
        .zip(set.targets.chunks(batch_size))
    {
        let batch = stack_samples(chunk)?;
        let (logits, _) = model_forward(spec, params, &batch, Mode::Eval, 0)?;
        let k = spec.num_classes;
        for (row, &target) in logits.data().chunks(k).zip(targets) {
            let row_tensor = Tensor::new(vec![k], row.to_vec())?;
            loss_sum += softmax_cross_entropy(&row_tensor, target)?.loss;
            preds.push(argmax_lowest(row));
        }
    }
    Ok((loss_sum / set.inputs.len() as f64, preds))
}

fn argmax_lowest(row: &[f32]) -> usize {
    let mut best = 0usize;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Trains a preset on the manifest's train split, validating every epoch.
///
/// Aborts with the epoch and batch in the message if the loss or any
/// gradient turns non-finite.
pub fn train(manifest: &DatasetManifest, cfg: &TrainConfig) -> Result<TrainResult> {
    cfg.validate()?;
    manifest.validate()?;

    let train_clips = load_split(manifest, Split::Train)?;
    let val_clips = load_split(manifest, Split::Val)?;
    if train_clips.is_empty() {
        return Err(Error::Train("train split is empty".into()));
    }
    if val_clips.is_empty() {
        return Err(Error::Train("val split is empty".into()));
    }
    let train_clips = augment_training_set(train_clips, &val_clips, cfg.augment);

    let train_set = prepare(&train_clips, &cfg.preprocess)?;
    let val_set = prepare(&val_clips, &cfg.preprocess)?;

    let input_shape = [
        1,
        cfg.preprocess.num_frames,
        cfg.preprocess.target_h,
        cfg.preprocess.target_w,
    ];
    let spec = build_preset(cfg.model_id, input_shape, manifest.classes.len())?;
    let mut params = init_params(&spec, cfg.seed)?;
    let mut state = OptimState::new(&params);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seeds::mix(cfg.seed, u64::MAX));

    let mut history = History::default();
    let mut best: Option<(f64, usize, ParamSet)> = None;

    for epoch in 0..cfg.epochs {
        let lr = decayed_lr(&cfg.optim, epoch);
        let mut order: Vec<usize> = (0..train_set.inputs.len()).collect();
        order.shuffle(&mut shuffle_rng);

        let mut loss_sum = 0.0f64;
        for (batch_idx, idxs) in order.chunks(cfg.batch_size).enumerate() {
            let samples: Vec<Tensor> =
                idxs.iter().map(|&i| train_set.inputs[i].clone()).collect();
            let targets: Vec<usize> = idxs.iter().map(|&i| train_set.targets[i]).collect();
            let batch = stack_samples(&samples)?;
            let dropout_seed = seeds::mix3(cfg.seed, epoch as u64, batch_idx as u64);
            let (_, cache) = model_forward(&spec, &params, &batch, Mode::Train, dropout_seed)?;
            let (loss, grads) = model_backward(&spec, &params, &cache, &targets)?;
            if !loss.is_finite() {
                return Err(Error::Train(format!(
                    "loss became {} at epoch {}, batch {}",
                    loss, epoch, batch_idx
                )));
            }
            loss_sum += loss * idxs.len() as f64;
            let (new_params, new_state) = optim_step(params, &grads, state, &cfg.optim, lr)
                .map_err(|e| {
                    Error::Train(format!("epoch {}, batch {}: {}", epoch, batch_idx, e))
                })?;
            params = new_params;
            state = new_state;
        }
        let train_loss = loss_sum / train_set.inputs.len() as f64;

        let (val_loss, preds) = eval_pass(&spec, &params, &val_set, cfg.batch_size)?;
        if !val_loss.is_finite() {
            return Err(Error::Train(format!(
                "validation loss became {} at epoch {}",
                val_loss, epoch
            )));
        }
        let correct = preds
            .iter()
            .zip(&val_set.targets)
            .filter(|(p, t)| p == t)
            .count();
        let val_acc = correct as f64 / val_set.targets.len() as f64;

        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
            val_acc,
            lr,
        });
        if best.as_ref().map_or(true, |(b, _, _)| val_loss < *b) {
            best = Some((val_loss, epoch, params.clone()));
        }
    }

    let (_, best_epoch, best_params) = best.expect("epochs >= 1 guarantees one row");
    Ok(TrainResult {
        spec,
        final_params: params,
        best_params,
        best_epoch,
        history,
    })
}

/// Eval-mode accuracy and confusion matrix over the manifest's test split.
pub fn evaluate(
    spec: &ModelSpec,
    params: &ParamSet,
    manifest: &DatasetManifest,
    cfg: &PreprocessConfig,
) -> Result<(f64, ConfusionMatrix)> {
    let test_clips = load_split(manifest, Split::Test)?;
    if test_clips.is_empty() {
        return Err(Error::Train("test split is empty".into()));
    }
    let set = prepare(&test_clips, cfg)?;
    let (_, preds) = eval_pass(spec, params, &set, 16)?;
    let mut matrix = ConfusionMatrix::new(manifest.classes.clone());
    for (&t, &p) in set.targets.iter().zip(&preds) {
        matrix.record(t, p);
    }
    Ok((matrix.accuracy(), matrix))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class_index: usize,
    pub class_name: String,
    /// 64-bit probabilities; they sum to 1 within 1e-12.
    pub probs: Vec<f64>,
}

/// Classifies one clip: preprocess, eval-mode forward, softmax.
pub fn predict(
    spec: &ModelSpec,
    params: &ParamSet,
    classes: &[String],
    clip: &Clip,
    cfg: &PreprocessConfig,
) -> Result<Prediction> {
    if classes.len() != spec.num_classes {
        return Err(Error::Config(format!(
            "{} class names for a {}-way model",
            classes.len(),
            spec.num_classes
        )));
    }
    let input = preprocess(clip, cfg)?;
    let batch = stack_samples(&[input])?;
    let (logits, _) = model_forward(spec, params, &batch, Mode::Eval, 0)?;
    let row = Tensor::new(vec![spec.num_classes], logits.data().to_vec())?;
    let probs = softmax(&row)?;
    let class_index = argmax_lowest(logits.data());
    Ok(Prediction {
        class_index,
        class_name: classes[class_index].clone(),
        probs,
    })
}

/// One row of the resolution study.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub size: usize,
    pub accuracy: f64,
    pub epoch_seconds: f64,
}

pub fn study_csv(rows: &[StudyRow]) -> String {
    let mut out = String::from("size,accuracy,epoch_seconds\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:.6},{:.6}\n",
            r.size, r.accuracy, r.epoch_seconds
        ));
    }
    out
}

/// Re-trains with identical data, split, and seed at each square input
/// resolution, reporting best-checkpoint test accuracy and mean wall-clock
/// seconds per epoch.
pub fn resolution_study(
    manifest: &DatasetManifest,
    cfg: &TrainConfig,
    sizes: &[usize],
) -> Result<Vec<StudyRow>> {
    if sizes.is_empty() {
        return Err(Error::Config("resolution study needs at least one size".into()));
    }
    let mut rows = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let mut run_cfg = cfg.clone();
        run_cfg.preprocess.target_h = size;
        run_cfg.preprocess.target_w = size;
        let started = Instant::now();
        let result = train(manifest, &run_cfg)?;
        let epoch_seconds = started.elapsed().as_secs_f64() / cfg.epochs as f64;
        let (accuracy, _) = evaluate(
            &result.spec,
            &result.best_params,
            manifest,
            &run_cfg.preprocess,
        )?;
        rows.push(StudyRow {
            size,
            accuracy,
            epoch_seconds,
        });
    }
    Ok(rows)
}

/// Canonical optimizer label for logs.
pub fn optim_name(kind: OptimKind) -> &'static str {
    match kind {
        OptimKind::Adam => "adam",
        OptimKind::Nadam => "nadam",
    }
}
