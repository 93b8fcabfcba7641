//! Landmark-similarity MSE metric, round-trip evaluation against synthetic
//! ground truth, and the multi-variant ablation runner.

use std::collections::BTreeMap;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::align::{align_to_template, AlignmentTemplate, LandmarkSet};
use crate::datagen::Sample;
use crate::error::{Error, Result};
use crate::math::{fnv1a, median, percentile, stable_sum};
use crate::net::{forward, train, NetworkParams, NetworkSpec, TrainConfig, Variant};
use crate::rig::{apply_weights, project_landmarks, BlendshapeRig, WeightVector};

/// Mean squared distance in px^2 between two landmark sets after each is
/// independently aligned to the template. Averages the squared Euclidean
/// distance over the 68 points (not over the 136 scalar coordinates).
pub fn landmark_similarity_mse(
    a: &LandmarkSet,
    b: &LandmarkSet,
    tmpl: &AlignmentTemplate,
) -> Result<f64> {
    let (aa, _) = align_to_template(a, tmpl)?;
    let (bb, _) = align_to_template(b, tmpl)?;
    let sq: Vec<f64> = aa
        .points
        .iter()
        .zip(&bb.points)
        .map(|(p, q)| {
            let dx = p[0] - q[0];
            let dy = p[1] - q[1];
            dx * dx + dy * dy
        })
        .collect();
    Ok(stable_sum(&sq) / sq.len() as f64)
}

/// Per-frame metric values plus aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Metric identifier; distances are squared pixels per point in the
    /// 128x128 aligned frame.
    pub metric: String,
    pub frames: usize,
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
    pub per_frame: Vec<f64>,
    pub config_hash: String,
}

impl EvalReport {
    fn from_values(per_frame: Vec<f64>, config_hash: String) -> Self {
        EvalReport {
            metric: "landmark_mse_px2_per_point".into(),
            frames: per_frame.len(),
            mean: stable_sum(&per_frame) / per_frame.len() as f64,
            median: median(&per_frame),
            p95: percentile(&per_frame, 0.95),
            per_frame,
            config_hash,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

fn round_trip_with<F>(
    rig: &BlendshapeRig,
    tmpl: &AlignmentTemplate,
    samples: &[Sample],
    config_hash: String,
    mut predictor: F,
) -> Result<EvalReport>
where
    F: FnMut(&Sample) -> Result<WeightVector>,
{
    if samples.is_empty() {
        return Err(Error::invalid("evaluation needs at least one sample"));
    }
    let mut per_frame = Vec::with_capacity(samples.len());
    for (i, sample) in samples.iter().enumerate() {
        let mut run = || -> Result<f64> {
            let weights = predictor(sample)?;
            let mesh = apply_weights(rig, &weights)?;
            let reprojected = project_landmarks(rig, &mesh, &sample.pose)?;
            landmark_similarity_mse(&reprojected, &sample.landmarks, tmpl)
        };
        per_frame.push(run().map_err(|e| e.at_sample(i))?);
    }
    Ok(EvalReport::from_values(per_frame, config_hash))
}

/// Round-trip evaluation: predict weights from each sample's landmarks,
/// reproject them through the rig at the sample's pose, and measure the
/// landmark-similarity MSE against the sample's own landmarks.
pub fn round_trip_eval(
    rig: &BlendshapeRig,
    tmpl: &AlignmentTemplate,
    params: &NetworkParams,
    spec: &NetworkSpec,
    samples: &[Sample],
) -> Result<EvalReport> {
    let mut hash_bytes = serde_json::to_vec(spec)?;
    for v in params.flat() {
        hash_bytes.extend_from_slice(&v.to_le_bytes());
    }
    let config_hash = format!("{:016x}", fnv1a(&hash_bytes));
    round_trip_with(rig, tmpl, samples, config_hash, |s| {
        forward(params, spec, &s.landmarks)
    })
}

/// Round-trip with predictions forced to the ground truth. Isolates the
/// projection/alignment path from the model.
pub fn round_trip_eval_oracle(
    rig: &BlendshapeRig,
    tmpl: &AlignmentTemplate,
    samples: &[Sample],
) -> Result<EvalReport> {
    round_trip_with(rig, tmpl, samples, "oracle".into(), |s| Ok(s.weights.clone()))
}

/// One trained-and-evaluated ablation cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub variant: String,
    pub seed: u64,
    pub heldout_mse: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub cells: Vec<AblationCell>,
    /// Median held-out MSE per variant over its successful seeds.
    pub medians: BTreeMap<String, f64>,
    pub heldout_frames: usize,
}

impl AblationReport {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// `variant,seed,heldout_mse` rows; failed cells write `error`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut out = BufWriter::new(file);
        writeln!(out, "variant,seed,heldout_mse")?;
        for cell in &self.cells {
            match cell.heldout_mse {
                Some(v) => writeln!(out, "{},{},{v}", cell.variant, cell.seed)?,
                None => writeln!(out, "{},{},error", cell.variant, cell.seed)?,
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Deterministic ablation split: the trailing tenth of the dataset is the
/// shared held-out evaluation set. Samples are generated i.i.d. per index,
/// so a tail split is unbiased and identical for every cell.
pub fn ablation_split(samples: &[Sample]) -> (&[Sample], &[Sample]) {
    let heldout = (samples.len() / 10).max(1);
    samples.split_at(samples.len() - heldout)
}

/// Trains every `(variant, seed)` cell on the shared training pool and
/// evaluates the round-trip MSE on the shared held-out set. Cell failures
/// are recorded and the run continues.
pub fn ablation_run(
    samples: &[Sample],
    variants: &[Variant],
    seeds: &[u64],
    rig: &BlendshapeRig,
    tmpl: &AlignmentTemplate,
    base_cfg: &TrainConfig,
) -> Result<AblationReport> {
    if variants.is_empty() || seeds.is_empty() {
        return Err(Error::invalid("ablation needs at least one variant and one seed"));
    }
    let (train_pool, heldout) = ablation_split(samples);
    let mut cells = Vec::new();
    let mut by_variant: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for &variant in variants {
        for &seed in seeds {
            let cfg = TrainConfig {
                seed,
                ..base_cfg.clone()
            };
            let spec = NetworkSpec::for_rig(variant, rig);
            let outcome = train(train_pool, &spec, &cfg).and_then(|(params, _)| {
                round_trip_eval(rig, tmpl, &params, &spec, heldout)
            });
            match outcome {
                Ok(report) => {
                    by_variant
                        .entry(variant.label().to_string())
                        .or_default()
                        .push(report.mean);
                    cells.push(AblationCell {
                        variant: variant.label().to_string(),
                        seed,
                        heldout_mse: Some(report.mean),
                        error: None,
                    });
                }
                Err(e) => cells.push(AblationCell {
                    variant: variant.label().to_string(),
                    seed,
                    heldout_mse: None,
                    error: Some(e.to_string()),
                }),
            }
        }
    }
    let medians = by_variant
        .into_iter()
        .map(|(k, v)| (k, median(&v)))
        .collect();
    Ok(AblationReport {
        cells,
        medians,
        heldout_frames: heldout.len(),
    })
}
