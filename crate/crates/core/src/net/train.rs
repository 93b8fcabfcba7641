//! Two-term MSE loss, Adam with bias correction, the stepped learning-rate
//! schedule, and the deterministic training loop.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{check_params, forward, grad, init_params};
use super::tensor::{NetworkParams, Tensor};
use super::NetworkSpec;
use crate::datagen::Sample;
use crate::error::{Error, Result};
use crate::math::{derive_seed, fnv1a};
use crate::rig::WeightVector;

// Sub-stream tags for deriving independent RNG seeds from the config seed.
const SEED_TAG_INIT: u64 = 0x11;
const SEED_TAG_SPLIT: u64 = 0x22;
const SEED_TAG_SHUFFLE: u64 = 0x33;

/// Optimizer and loop hyperparameters. Defaults follow the training recipe
/// this artifact implements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub batch: usize,
    pub epochs: usize,
    /// Learning-rate multiplier applied every `lr_step_epochs` epochs.
    pub lr_gamma: f64,
    pub lr_step_epochs: usize,
    pub seed: u64,
    pub active_loss_weight: f64,
    /// Fraction of the dataset held out for validation.
    pub val_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 5e-5,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-10,
            weight_decay: 1e-7,
            batch: 16,
            epochs: 20,
            lr_gamma: 0.5,
            lr_step_epochs: 3,
            seed: 0,
            active_loss_weight: 0.1,
            val_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr0 <= 0.0
            || self.beta1 <= 0.0
            || self.beta1 >= 1.0
            || self.beta2 <= 0.0
            || self.beta2 >= 1.0
            || self.eps <= 0.0
            || self.weight_decay < 0.0
            || self.lr_gamma <= 0.0
            || self.lr_step_epochs == 0
            || self.active_loss_weight < 0.0
        {
            return Err(Error::invalid("training hyperparameters out of range"));
        }
        if self.batch == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.val_fraction) || self.val_fraction == 0.0 {
            return Err(Error::invalid("validation fraction must be in (0, 1)"));
        }
        Ok(())
    }
}

/// Two-term loss: MSE over all targets plus `active_weight` times the MSE
/// over the targets active in the ground truth. The active term is zero when
/// nothing is active.
pub fn loss(pred: &WeightVector, gt: &WeightVector, active_weight: f64) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::invalid("prediction and ground truth lengths differ"));
    }
    Ok(loss_gradient(&pred.0, &gt.0, active_weight).0)
}

/// Loss value and its gradient with respect to the prediction.
pub(super) fn loss_gradient(pred: &[f64], gt: &[f64], active_weight: f64) -> (f64, Vec<f64>) {
    let k = pred.len() as f64;
    let active: Vec<usize> = gt
        .iter()
        .enumerate()
        .filter(|(_, g)| **g > 0.0)
        .map(|(i, _)| i)
        .collect();
    let mut total = 0.0;
    let mut dpred = vec![0.0; pred.len()];
    for i in 0..pred.len() {
        let d = pred[i] - gt[i];
        total += d * d / k;
        dpred[i] = 2.0 * d / k;
    }
    if !active.is_empty() {
        let na = active.len() as f64;
        for &i in &active {
            let d = pred[i] - gt[i];
            total += active_weight * d * d / na;
            dpred[i] += active_weight * 2.0 * d / na;
        }
    }
    (total, dpred)
}

/// `lr0 * gamma^floor(epoch / step)`.
pub fn lr_schedule(cfg: &TrainConfig, epoch: usize) -> f64 {
    cfg.lr0 * cfg.lr_gamma.powi((epoch / cfg.lr_step_epochs) as i32)
}

/// First and second moment accumulators over the flat parameter view.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(param_count: usize) -> Self {
        AdamState {
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            step: 0,
        }
    }
}

/// One Adam update with bias correction. Weight decay enters as an L2 term
/// added to the gradient before the moment updates.
pub fn adam_step(
    params: &mut NetworkParams,
    grads: &NetworkParams,
    state: &mut AdamState,
    cfg: &TrainConfig,
    lr: f64,
) -> Result<()> {
    if !params.same_layout(grads) {
        return Err(Error::invalid("gradient layout does not match parameters"));
    }
    if state.m.len() != params.param_count() {
        return Err(Error::invalid("optimizer state size does not match parameters"));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let mut offset = 0;
    let grads = grads.tensors();
    for (ti, (_, tensor)) in params.tensors_mut().enumerate() {
        let gdata = &grads[ti].1.data;
        for (j, theta) in tensor.data.iter_mut().enumerate() {
            let g = gdata[j] + cfg.weight_decay * *theta;
            let slot = offset + j;
            state.m[slot] = cfg.beta1 * state.m[slot] + (1.0 - cfg.beta1) * g;
            state.v[slot] = cfg.beta2 * state.v[slot] + (1.0 - cfg.beta2) * g * g;
            let m_hat = state.m[slot] / bc1;
            let v_hat = state.v[slot] / bc2;
            *theta -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
        offset += tensor.data.len();
    }
    Ok(())
}

/// Losses recorded for one epoch. Epoch 0 is the freshly initialized model
/// before any update; epoch `e >= 1` is the state after the e-th pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub seed: u64,
    /// FNV-1a fingerprint of the serialized training set.
    pub dataset_hash: String,
    pub val_fraction: f64,
    pub variant: String,
    pub epochs: Vec<EpochRecord>,
}

impl TrainReport {
    pub fn initial_val_loss(&self) -> f64 {
        self.epochs.first().map(|e| e.val_loss).unwrap_or(f64::NAN)
    }

    pub fn final_val_loss(&self) -> f64 {
        self.epochs.last().map(|e| e.val_loss).unwrap_or(f64::NAN)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

pub fn dataset_fingerprint(samples: &[Sample]) -> Result<String> {
    let bytes = serde_json::to_vec(samples)?;
    Ok(format!("{:016x}", fnv1a(&bytes)))
}

fn mean_loss_over(
    params: &NetworkParams,
    spec: &NetworkSpec,
    samples: &[Sample],
    indices: &[usize],
    active_weight: f64,
) -> Result<f64> {
    let mut total = 0.0;
    for &i in indices {
        let pred = forward(params, spec, &samples[i].landmarks)?;
        total += loss(&pred, &samples[i].weights, active_weight)?;
    }
    Ok(total / indices.len() as f64)
}

/// Trains a network on (aligned landmarks, weights) samples.
///
/// Deterministic for a fixed seed: initialization, the train/validation
/// split, and every epoch's shuffle all come from seeds derived from
/// `cfg.seed`.
pub fn train(
    samples: &[Sample],
    spec: &NetworkSpec,
    cfg: &TrainConfig,
) -> Result<(NetworkParams, TrainReport)> {
    cfg.validate()?;
    spec.validate()?;
    if samples.len() < 2 * cfg.batch {
        return Err(Error::invalid(format!(
            "dataset of {} samples is smaller than two minibatches",
            samples.len()
        )));
    }
    for (i, s) in samples.iter().enumerate() {
        if s.weights.len() != spec.k() {
            return Err(Error::invalid(format!(
                "sample {i} has {} weights, spec has {} targets",
                s.weights.len(),
                spec.k()
            )));
        }
    }

    let mut split_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, SEED_TAG_SPLIT));
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut split_rng);
    let val_count = ((samples.len() as f64 * cfg.val_fraction).round() as usize)
        .clamp(1, samples.len() - cfg.batch);
    let (val_idx, train_idx) = order.split_at(val_count);
    let val_idx = val_idx.to_vec();
    let mut train_idx = train_idx.to_vec();

    let mut params = init_params(spec, derive_seed(cfg.seed, SEED_TAG_INIT))?;
    let mut state = AdamState::new(params.param_count());
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, SEED_TAG_SHUFFLE));

    let mut report = TrainReport {
        seed: cfg.seed,
        dataset_hash: dataset_fingerprint(samples)?,
        val_fraction: cfg.val_fraction,
        variant: spec.variant.label().to_string(),
        epochs: Vec::with_capacity(cfg.epochs + 1),
    };
    report.epochs.push(EpochRecord {
        epoch: 0,
        lr: lr_schedule(cfg, 0),
        train_loss: mean_loss_over(&params, spec, samples, &train_idx, cfg.active_loss_weight)?,
        val_loss: mean_loss_over(&params, spec, samples, &val_idx, cfg.active_loss_weight)?,
    });

    for epoch in 0..cfg.epochs {
        let lr = lr_schedule(cfg, epoch);
        train_idx.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for chunk in train_idx.chunks(cfg.batch) {
            let batch: Vec<(&crate::align::LandmarkSet, &WeightVector)> = chunk
                .iter()
                .map(|&i| (&samples[i].landmarks, &samples[i].weights))
                .collect();
            let (batch_loss, grads) = grad(&params, spec, &batch, cfg.active_loss_weight)?;
            loss_sum += batch_loss * chunk.len() as f64;
            adam_step(&mut params, &grads, &mut state, cfg, lr)?;
        }
        params.ensure_finite("training update")?;
        let train_loss = loss_sum / train_idx.len() as f64;
        let val_loss = mean_loss_over(&params, spec, samples, &val_idx, cfg.active_loss_weight)?;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::NumericFailure {
                tensor: "<loss>".into(),
                msg: format!("non-finite loss at epoch {}", epoch + 1),
            });
        }
        report.epochs.push(EpochRecord {
            epoch: epoch + 1,
            lr,
            train_loss,
            val_loss,
        });
    }

    Ok((params, report))
}

/// On-disk parameter bundle: the spec plus every named tensor.
#[derive(Serialize, Deserialize)]
struct ParamsFile {
    format_version: u32,
    variant: String,
    spec: NetworkSpec,
    tensors: BTreeMap<String, Tensor>,
}

pub fn save_params(
    path: impl AsRef<Path>,
    spec: &NetworkSpec,
    params: &NetworkParams,
) -> Result<()> {
    check_params(spec, params)?;
    let file = ParamsFile {
        format_version: 1,
        variant: spec.variant.label().to_string(),
        spec: spec.clone(),
        tensors: params
            .tensors()
            .iter()
            .map(|(n, t)| (n.clone(), t.clone()))
            .collect(),
    };
    std::fs::write(path, serde_json::to_string(&file)?)?;
    Ok(())
}

pub fn load_params(path: impl AsRef<Path>) -> Result<(NetworkSpec, NetworkParams)> {
    let file: ParamsFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    if file.format_version != 1 {
        return Err(Error::invalid(format!(
            "unsupported params format version {}",
            file.format_version
        )));
    }
    file.spec.validate()?;
    // rebuild in canonical order; check_params verifies names and shapes
    let mut params = NetworkParams::new();
    let mut tensors = file.tensors;
    let reference = init_params(&file.spec, 0)?;
    for (name, _) in reference.tensors() {
        let t = tensors
            .remove(name)
            .ok_or_else(|| Error::invalid(format!("params file is missing tensor `{name}`")))?;
        params.push(name.clone(), t);
    }
    if let Some((extra, _)) = tensors.into_iter().next() {
        return Err(Error::invalid(format!(
            "params file has unexpected tensor `{extra}`"
        )));
    }
    check_params(&file.spec, &params)?;
    params.ensure_finite("parameter load")?;
    Ok((file.spec, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_dataset, make_procedural_rig, template_from_rig, GenConfig, PoseDistribution};
    use crate::net::Variant;
    use crate::rig::HeadPose;

    #[test]
    fn loss_zero_when_equal() {
        let w = WeightVector(vec![0.3, 0.0, 0.9]);
        assert_eq!(loss(&w, &w, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn loss_active_term_vanishes_for_all_zero_gt() {
        let gt = WeightVector::zeros(8);
        let pred = WeightVector(vec![0.5; 8]);
        assert!((loss(&pred, &gt, 0.1).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn loss_hand_computed_case() {
        // all-term (0.04 + 0.01)/4, active-term 0.1 * 0.04/1
        let gt = WeightVector(vec![0.8, 0.0, 0.0, 0.0]);
        let pred = WeightVector(vec![0.6, 0.1, 0.0, 0.0]);
        assert!((loss(&pred, &gt, 0.1).unwrap() - 0.0165).abs() < 1e-15);
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let gt = vec![0.8, 0.0, 0.4, 0.0];
        let pred = vec![0.6, 0.1, 0.2, 0.9];
        let (_, dp) = loss_gradient(&pred, &gt, 0.1);
        let h = 1e-7;
        for i in 0..pred.len() {
            let mut p = pred.clone();
            p[i] += h;
            let up = loss_gradient(&p, &gt, 0.1).0;
            p[i] -= 2.0 * h;
            let dn = loss_gradient(&p, &gt, 0.1).0;
            let fd = (up - dn) / (2.0 * h);
            assert!((fd - dp[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn schedule_halves_every_three_epochs() {
        let cfg = TrainConfig::default();
        assert_eq!(lr_schedule(&cfg, 0), 5e-5);
        assert_eq!(lr_schedule(&cfg, 2), 5e-5);
        assert_eq!(lr_schedule(&cfg, 3), 2.5e-5);
        assert_eq!(lr_schedule(&cfg, 9), 6.25e-6);
    }

    fn toy_params() -> NetworkParams {
        let mut p = NetworkParams::new();
        p.push(
            "w",
            Tensor {
                shape: vec![2],
                data: vec![0.5, -0.25],
            },
        );
        p
    }

    #[test]
    fn adam_first_step_magnitude_is_the_learning_rate() {
        // bias-corrected Adam: first update is lr * g/(|g| + eps) ~ lr
        let mut params = toy_params();
        let before = params.flat();
        let mut grads = params.zeros_like();
        grads.get_mut("w").data.copy_from_slice(&[1e-3, -2.0]);
        let mut state = AdamState::new(2);
        let cfg = TrainConfig {
            weight_decay: 0.0,
            ..TrainConfig::default()
        };
        adam_step(&mut params, &grads, &mut state, &cfg, 5e-5).unwrap();
        let after = params.flat();
        for i in 0..2 {
            let step = (after[i] - before[i]).abs();
            assert!(
                (step - 5e-5).abs() < 0.1 * 5e-5,
                "step {step} not within 10% of lr"
            );
        }
        // direction opposes the gradient
        assert!(after[0] < before[0]);
        assert!(after[1] > before[1]);
    }

    #[test]
    fn adam_zero_gradient_only_decays() {
        let mut params = toy_params();
        let before = params.flat();
        let grads = params.zeros_like();
        let mut state = AdamState::new(2);
        let cfg = TrainConfig::default();
        adam_step(&mut params, &grads, &mut state, &cfg, cfg.lr0).unwrap();
        for (b, a) in before.iter().zip(params.flat()) {
            assert!((a - b).abs() <= cfg.lr0 * 1.0 + 1e-18, "moved more than lr");
            // pure weight decay pushes toward zero, bounded by lr since
            // Adam normalizes the decay gradient like any other
            assert!(a.abs() <= b.abs());
        }
    }

    #[test]
    fn adam_is_deterministic() {
        let run = || {
            let mut params = toy_params();
            let mut grads = params.zeros_like();
            grads.get_mut("w").data.copy_from_slice(&[0.3, 0.7]);
            let mut state = AdamState::new(2);
            let cfg = TrainConfig::default();
            for _ in 0..5 {
                adam_step(&mut params, &grads, &mut state, &cfg, 1e-4).unwrap();
            }
            params.flat()
        };
        assert_eq!(run(), run());
    }

    fn tiny_dataset(count: usize) -> (crate::rig::BlendshapeRig, Vec<Sample>) {
        let rig = make_procedural_rig(3, 600, 12).unwrap();
        let tmpl = template_from_rig(&rig).unwrap();
        let dist = PoseDistribution::new(vec![HeadPose::identity()]).unwrap();
        let cfg = GenConfig {
            count,
            seed: 9,
            ..GenConfig::default()
        };
        let data = generate_dataset(&rig, &tmpl, &rig.reasonable, &dist, &cfg).unwrap();
        (rig, data)
    }

    #[test]
    fn train_rejects_small_datasets() {
        let (rig, data) = tiny_dataset(8);
        let spec = NetworkSpec::for_rig(Variant::NoGrouping, &rig);
        let cfg = TrainConfig::default();
        assert!(matches!(
            train(&data, &spec, &cfg),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn train_is_deterministic_and_records_every_epoch() {
        let (rig, data) = tiny_dataset(48);
        let spec = NetworkSpec::for_rig(Variant::FullGrouping, &rig);
        let cfg = TrainConfig {
            epochs: 2,
            seed: 5,
            ..TrainConfig::default()
        };
        let (p1, r1) = train(&data, &spec, &cfg).unwrap();
        let (p2, r2) = train(&data, &spec, &cfg).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(r1, r2);
        assert_eq!(r1.epochs.len(), 3); // init + 2 epochs
        assert!(r1.epochs.iter().all(|e| e.train_loss.is_finite() && e.val_loss.is_finite()));
        let (p3, _) = train(&data, &spec, &TrainConfig { seed: 6, ..cfg }).unwrap();
        assert_ne!(p1, p3);
    }

    #[test]
    fn params_file_roundtrip() {
        let (rig, _) = tiny_dataset(8);
        let spec = NetworkSpec::for_rig(Variant::FullGrouping, &rig);
        let params = init_params(&spec, 17).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("params.json");
        save_params(&path, &spec, &params).unwrap();
        let (spec2, params2) = load_params(&path).unwrap();
        assert_eq!(spec, spec2);
        assert_eq!(params, params2);
    }

    #[test]
    fn report_roundtrip() {
        let report = TrainReport {
            seed: 1,
            dataset_hash: "abc".into(),
            val_fraction: 0.1,
            variant: "full".into(),
            epochs: vec![EpochRecord {
                epoch: 0,
                lr: 5e-5,
                train_loss: 0.2,
                val_loss: 0.25,
            }],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        report.save(&path).unwrap();
        assert_eq!(TrainReport::load(&path).unwrap(), report);
    }
}
