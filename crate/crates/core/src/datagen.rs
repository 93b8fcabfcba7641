//! Synthetic training corpus: constrained expression sampling, pose
//! sampling from an empirical distribution, and landmark synthesis by
//! direct projection. Also the procedural rig factory that stands in for a
//! licensed character.

use std::collections::BTreeMap;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::align::{align_to_template, AlignmentTemplate, LandmarkSet, LANDMARK_COUNT};
use crate::error::{Error, Result};
use crate::math::{derive_seed, dist3, Point2, Point3};
use crate::net::GroupSpec;
use crate::rig::{
    apply_weights, is_reasonable, project_landmarks, BlendshapeRig, DeltaTarget, HeadPose,
    ReasonableArray, WeightVector,
};

/// Empirical head-pose samples, drawn uniformly during generation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoseDistribution {
    pub poses: Vec<HeadPose>,
}

impl PoseDistribution {
    pub fn new(poses: Vec<HeadPose>) -> Result<Self> {
        if poses.is_empty() {
            return Err(Error::invalid("pose distribution must be non-empty"));
        }
        for p in &poses {
            p.validate()?;
        }
        Ok(PoseDistribution { poses })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file: PoseDistribution = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        PoseDistribution::new(file.poses)
    }
}

/// Stand-in for a measured natural-pose distribution: 2,000 poses from
/// zero-mean normals (sigma yaw 0.3, pitch 0.2, roll 0.1 rad) clipped at two
/// sigma so the face always stays mostly camera-facing. Fixed seed, so every
/// build ships the same distribution.
pub fn default_pose_distribution() -> PoseDistribution {
    let mut rng = ChaCha8Rng::seed_from_u64(0x705E5);
    let mut normal = move || {
        // Box-Muller
        let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    };
    let poses = (0..2000)
        .map(|_| {
            let yaw = (normal() * 0.3).clamp(-0.6, 0.6);
            let pitch = (normal() * 0.2).clamp(-0.4, 0.4);
            let roll = (normal() * 0.1).clamp(-0.2, 0.2);
            HeadPose([yaw, pitch, roll])
        })
        .collect();
    PoseDistribution { poses }
}

/// One training example: aligned landmarks plus the ground-truth weights and
/// the pose they were rendered under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    #[serde(rename = "lm")]
    pub landmarks: LandmarkSet,
    #[serde(rename = "w")]
    pub weights: WeightVector,
    pub pose: HeadPose,
}

/// Generation settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub count: usize,
    pub seed: u64,
    /// Cap on simultaneously active targets.
    pub max_active: usize,
    /// Fraction of pure-neutral samples injected so the rest pose is learned.
    pub neutral_fraction: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            count: 30_000,
            seed: 0,
            max_active: 5,
            neutral_fraction: 0.05,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::invalid("sample count must be at least 1"));
        }
        if self.max_active == 0 {
            return Err(Error::invalid("max_active must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.neutral_fraction) {
            return Err(Error::invalid("neutral fraction must be in [0, 1)"));
        }
        Ok(())
    }
}

/// Draws a random expression subject to the three corpus constraints:
/// between 1 and `max_active` active targets, every active weight in
/// `(0, 1]`, and all active pairs allowed by the reasonable array.
///
/// The active set is built greedily: indices are shuffled and accepted only
/// if pairwise-allowed with everything accepted so far, stopping at the
/// drawn size or at exhaustion. Never loops forever.
pub fn sample_expression(
    rng: &mut impl Rng,
    arr: &ReasonableArray,
    k: usize,
    max_active: usize,
) -> Result<WeightVector> {
    if max_active == 0 {
        return Err(Error::invalid("max_active must be at least 1"));
    }
    if k == 0 || arr.k() != k {
        return Err(Error::invalid("target count does not match reasonable array"));
    }
    let want = rng.gen_range(1..=max_active.min(k));
    let mut order: Vec<usize> = (0..k).collect();
    order.shuffle(rng);
    let mut active: Vec<usize> = Vec::with_capacity(want);
    for idx in order {
        if active.iter().all(|&a| arr.allowed(a, idx)) {
            active.push(idx);
            if active.len() == want {
                break;
            }
        }
    }
    if active.is_empty() {
        // unreachable while the diagonal is allowed; kept as a contract check
        return Err(Error::GenerationFailure(
            "no single-target expression is allowed".into(),
        ));
    }
    let mut w = vec![0.0; k];
    for idx in active {
        // 1 - [0,1) lands in (0,1]
        w[idx] = 1.0 - rng.gen_range(0.0..1.0);
    }
    Ok(WeightVector(w))
}

/// Uniformly picks one pose from the distribution.
pub fn sample_pose(rng: &mut impl Rng, dist: &PoseDistribution) -> Result<HeadPose> {
    if dist.poses.is_empty() {
        return Err(Error::invalid("pose distribution is empty"));
    }
    Ok(dist.poses[rng.gen_range(0..dist.poses.len())])
}

/// Synthesizes one sample: expression and pose are drawn, the expressed mesh
/// is projected, and the landmarks are aligned to the template.
pub fn synth_sample(
    rig: &BlendshapeRig,
    tmpl: &AlignmentTemplate,
    arr: &ReasonableArray,
    dist: &PoseDistribution,
    rng: &mut impl Rng,
    cfg: &GenConfig,
) -> Result<Sample> {
    let weights = if rng.gen_range(0.0..1.0) < cfg.neutral_fraction {
        WeightVector::zeros(rig.target_count())
    } else {
        sample_expression(rng, arr, rig.target_count(), cfg.max_active)?
    };
    let pose = sample_pose(rng, dist)?;
    let mesh = apply_weights(rig, &weights)?;
    let raw = project_landmarks(rig, &mesh, &pose)?;
    let (landmarks, _) = align_to_template(&raw, tmpl)?;
    Ok(Sample {
        landmarks,
        weights,
        pose,
    })
}

/// Generates `cfg.count` samples. Sample `i` uses a seed derived from
/// `(cfg.seed, i)`, so the corpus is order-independent and resumable, and
/// identical seeds reproduce identical bytes.
pub fn generate_dataset(
    rig: &BlendshapeRig,
    tmpl: &AlignmentTemplate,
    arr: &ReasonableArray,
    dist: &PoseDistribution,
    cfg: &GenConfig,
) -> Result<Vec<Sample>> {
    cfg.validate()?;
    let mut samples = Vec::with_capacity(cfg.count);
    for i in 0..cfg.count {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, i as u64));
        let sample =
            synth_sample(rig, tmpl, arr, dist, &mut rng, cfg).map_err(|e| e.at_sample(i))?;
        samples.push(sample);
    }
    Ok(samples)
}

/// Validity check for one sample against the corpus constraints. Pure
/// neutral samples (zero active) are allowed; active samples must respect
/// the cap, the `(0, 1]` range, and the reasonable array.
pub fn check_sample(sample: &Sample, arr: &ReasonableArray, max_active: usize) -> Result<()> {
    let active = sample.weights.active_indices();
    if active.len() > max_active {
        return Err(Error::invalid(format!(
            "{} active targets exceeds the cap of {max_active}",
            active.len()
        )));
    }
    for &i in &active {
        let v = sample.weights.0[i];
        if !(v > 0.0 && v <= 1.0) {
            return Err(Error::invalid(format!("active weight {v} outside (0, 1]")));
        }
    }
    if !is_reasonable(arr, &sample.weights) {
        return Err(Error::invalid("weights violate the reasonable array"));
    }
    if sample
        .landmarks
        .points
        .iter()
        .flatten()
        .any(|c| !(-32.0..=160.0).contains(c))
    {
        return Err(Error::invalid("aligned landmarks left the template frame"));
    }
    Ok(())
}

/// Writes one sample per line as JSON.
pub fn save_dataset(path: impl AsRef<Path>, samples: &[Sample]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut out = BufWriter::new(file);
    for s in samples {
        serde_json::to_writer(&mut out, s)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<Sample>> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut samples = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: Sample =
            serde_json::from_str(&line).map_err(|e| Error::from(e).at_sample(i))?;
        if sample.landmarks.points.len() != LANDMARK_COUNT {
            return Err(Error::invalid(format!("sample {i} has a malformed landmark set")));
        }
        samples.push(sample);
    }
    Ok(samples)
}

// ---------------------------------------------------------------------------
// Procedural rig factory
// ---------------------------------------------------------------------------

/// Canonical frontal landmark layout in a 128x128 image frame (y down),
/// optionally stretched by per-seed proportion factors.
fn landmark_layout(sx: f64, sy: f64) -> Vec<Point2> {
    let c = [64.0, 64.0];
    let warp = |p: Point2| -> Point2 {
        [
            c[0] + (p[0] - c[0]) * sx,
            c[1] + (p[1] - c[1]) * sy,
        ]
    };
    let mut pts: Vec<Point2> = Vec::with_capacity(LANDMARK_COUNT);

    // jaw 0-16: elliptic arc from the image-left temple through the chin
    for i in 0..17 {
        let phi = (170.0 - 10.0 * i as f64).to_radians();
        pts.push(warp([64.0 + 46.0 * phi.cos(), 66.0 + 50.0 * phi.sin()]));
    }
    // eyebrows 17-21 (subject right, image left) and 22-26
    for i in 0..5 {
        let arch = 5.0 * (std::f64::consts::PI * i as f64 / 4.0).sin();
        pts.push(warp([22.0 + 7.5 * i as f64, 46.0 - arch]));
    }
    for i in 0..5 {
        let arch = 5.0 * (std::f64::consts::PI * i as f64 / 4.0).sin();
        pts.push(warp([76.0 + 7.5 * i as f64, 46.0 - arch]));
    }
    // nose bridge 27-30
    for i in 0..4 {
        pts.push(warp([64.0, 52.0 + 8.0 * i as f64]));
    }
    // nostril row 31-35, center dipping lowest
    for i in 0..5 {
        let dip = 2.0 * (std::f64::consts::PI * i as f64 / 4.0).sin();
        pts.push(warp([56.0 + 4.0 * i as f64, 84.0 + dip]));
    }
    // eyes 36-41 and 42-47: left corner, two upper-lid, right corner, two
    // lower-lid. The right eye's image-left corner is its outer corner; the
    // left eye's is its inner corner, matching the standard index order.
    let (hw, hh) = (9.0, 3.4);
    let eye_local: [Point2; 6] = [
        [-hw, 0.0],
        [-hw / 2.0, -hh],
        [hw / 2.0, -hh],
        [hw, 0.0],
        [hw / 2.0, hh],
        [-hw / 2.0, hh],
    ];
    for cx in [40.0, 88.0] {
        for p in eye_local {
            pts.push(warp([cx + p[0], 56.0 + p[1]]));
        }
    }
    // outer lips 48-59 around (64, 96)
    for i in 0..12 {
        let phi = (180.0 - 30.0 * i as f64).to_radians();
        pts.push(warp([64.0 + 17.0 * phi.cos(), 96.0 - 7.0 * phi.sin()]));
    }
    // inner lips (teeth region) 60-67
    for i in 0..8 {
        let phi = (180.0 - 45.0 * i as f64).to_radians();
        pts.push(warp([64.0 + 10.0 * phi.cos(), 96.0 - 2.5 * phi.sin()]));
    }
    debug_assert_eq!(pts.len(), LANDMARK_COUNT);
    pts
}

/// Face depth profile: an ellipsoidal dome plus a nose bump.
fn face_depth(p: Point2, dome: f64) -> f64 {
    let nx = (p[0] - 64.0) / 52.0;
    let ny = (p[1] - 70.0) / 60.0;
    let shell = dome * (1.0 - nx * nx - ny * ny).max(0.05).sqrt();
    let nose = 8.0 * (-((p[0] - 64.0).powi(2) + (p[1] - 74.0).powi(2)) / 150.0).exp();
    shell + nose
}

/// One localized displacement: vertices within `radius` of any anchor
/// landmark move along `dir`, scaled by a smooth cosine falloff.
struct Bump {
    anchors: &'static [usize],
    dir: Point3,
    radius: f64,
}

struct TargetTemplate {
    name: &'static str,
    bumps: Vec<Bump>,
}

fn bump(anchors: &'static [usize], dir: Point3, radius: f64) -> Bump {
    Bump {
        anchors,
        dir,
        radius,
    }
}

/// The 62-entry target catalog. Ordered so that a small prefix already
/// spans several facial regions.
fn target_catalog() -> Vec<TargetTemplate> {
    let t = |name: &'static str, bumps: Vec<Bump>| TargetTemplate { name, bumps };
    vec![
        t("brow_raise_l", vec![bump(&[22, 23, 24, 25, 26], [0.0, -4.0, 0.5], 10.0)]),
        t("brow_raise_r", vec![bump(&[17, 18, 19, 20, 21], [0.0, -4.0, 0.5], 10.0)]),
        t("eye_blink_l", vec![
            bump(&[43, 44], [0.0, 5.0, -0.3], 6.0),
            bump(&[46, 47], [0.0, -1.6, 0.0], 5.0),
        ]),
        t("eye_blink_r", vec![
            bump(&[37, 38], [0.0, 5.0, -0.3], 6.0),
            bump(&[40, 41], [0.0, -1.6, 0.0], 5.0),
        ]),
        t("nose_sneer_l", vec![bump(&[34, 35], [0.0, -2.5, 0.3], 6.0)]),
        t("nose_sneer_r", vec![bump(&[31, 32], [0.0, -2.5, 0.3], 6.0)]),
        t("mouth_open", vec![
            bump(&[55, 56, 57, 58, 59], [0.0, 6.0, 0.0], 9.0),
            bump(&[65, 66, 67], [0.0, 5.0, 0.0], 6.0),
            bump(&[7, 8, 9], [0.0, 5.0, 0.0], 12.0),
        ]),
        t("viseme_aa", vec![
            bump(&[55, 56, 57, 58, 59], [0.0, 5.0, 0.0], 8.0),
            bump(&[65, 66, 67], [0.0, 4.5, 0.0], 5.0),
            bump(&[7, 8, 9], [0.0, 4.0, 0.0], 10.0),
        ]),
        t("mouth_smile_l", vec![bump(&[54], [2.5, -3.0, 0.5], 7.0)]),
        t("mouth_smile_r", vec![bump(&[48], [-2.5, -3.0, 0.5], 7.0)]),
        t("eye_look_up_l", vec![bump(&[42, 43, 44, 45, 46, 47], [0.0, -1.2, 0.0], 7.0)]),
        t("eye_look_up_r", vec![bump(&[36, 37, 38, 39, 40, 41], [0.0, -1.2, 0.0], 7.0)]),
        t("brow_lower_l", vec![bump(&[22, 23, 24, 25, 26], [0.0, 2.5, 0.0], 9.0)]),
        t("brow_lower_r", vec![bump(&[17, 18, 19, 20, 21], [0.0, 2.5, 0.0], 9.0)]),
        t("brow_inner_up_l", vec![bump(&[22, 23], [0.0, -3.0, 0.0], 7.0)]),
        t("brow_inner_up_r", vec![bump(&[20, 21], [0.0, -3.0, 0.0], 7.0)]),
        t("brow_outer_up_l", vec![bump(&[25, 26], [0.0, -3.0, 0.0], 7.0)]),
        t("brow_outer_up_r", vec![bump(&[17, 18], [0.0, -3.0, 0.0], 7.0)]),
        t("eye_wide_l", vec![bump(&[43, 44], [0.0, -2.0, 0.2], 5.0)]),
        t("eye_wide_r", vec![bump(&[37, 38], [0.0, -2.0, 0.2], 5.0)]),
        t("eye_squint_l", vec![
            bump(&[43, 44], [0.0, 1.2, 0.0], 5.0),
            bump(&[46, 47], [0.0, -1.2, 0.0], 5.0),
        ]),
        t("eye_squint_r", vec![
            bump(&[37, 38], [0.0, 1.2, 0.0], 5.0),
            bump(&[40, 41], [0.0, -1.2, 0.0], 5.0),
        ]),
        t("eye_look_down_l", vec![bump(&[42, 43, 44, 45, 46, 47], [0.0, 1.4, 0.0], 7.0)]),
        t("eye_look_down_r", vec![bump(&[36, 37, 38, 39, 40, 41], [0.0, 1.4, 0.0], 7.0)]),
        t("eye_look_left_l", vec![bump(&[42, 43, 44, 45, 46, 47], [1.5, 0.0, 0.0], 7.0)]),
        t("eye_look_left_r", vec![bump(&[36, 37, 38, 39, 40, 41], [1.5, 0.0, 0.0], 7.0)]),
        t("eye_look_right_l", vec![bump(&[42, 43, 44, 45, 46, 47], [-1.5, 0.0, 0.0], 7.0)]),
        t("eye_look_right_r", vec![bump(&[36, 37, 38, 39, 40, 41], [-1.5, 0.0, 0.0], 7.0)]),
        t("nose_flare_l", vec![bump(&[34, 35], [1.8, 0.4, 0.0], 5.0)]),
        t("nose_flare_r", vec![bump(&[31, 32], [-1.8, 0.4, 0.0], 5.0)]),
        t("mouth_close", vec![
            bump(&[61, 62, 63], [0.0, 1.2, 0.0], 4.0),
            bump(&[65, 66, 67], [0.0, -1.2, 0.0], 4.0),
        ]),
        t("mouth_frown_l", vec![bump(&[54], [1.0, 3.0, 0.0], 7.0)]),
        t("mouth_frown_r", vec![bump(&[48], [-1.0, 3.0, 0.0], 7.0)]),
        t("mouth_pucker", vec![
            bump(&[48], [3.0, 0.0, 1.0], 5.0),
            bump(&[54], [-3.0, 0.0, 1.0], 5.0),
            bump(&[50, 51, 52], [0.0, 1.0, 1.0], 5.0),
            bump(&[56, 57, 58], [0.0, -1.0, 1.0], 5.0),
        ]),
        t("mouth_funnel", vec![
            bump(&[49, 50, 51, 52, 53], [0.0, -1.5, 1.5], 6.0),
            bump(&[55, 56, 57, 58, 59], [0.0, 1.5, 1.5], 6.0),
        ]),
        t("mouth_press_l", vec![
            bump(&[52, 53], [0.0, 1.0, -0.3], 4.0),
            bump(&[55, 56], [0.0, -1.0, -0.3], 4.0),
        ]),
        t("mouth_press_r", vec![
            bump(&[49, 50], [0.0, 1.0, -0.3], 4.0),
            bump(&[58, 59], [0.0, -1.0, -0.3], 4.0),
        ]),
        t("mouth_stretch_l", vec![bump(&[54], [3.0, 0.5, 0.0], 8.0)]),
        t("mouth_stretch_r", vec![bump(&[48], [-3.0, 0.5, 0.0], 8.0)]),
        t("mouth_upper_up_l", vec![bump(&[52, 53], [0.0, -2.2, 0.0], 5.0)]),
        t("mouth_upper_up_r", vec![bump(&[49, 50], [0.0, -2.2, 0.0], 5.0)]),
        t("mouth_lower_down_l", vec![bump(&[55, 56], [0.0, 2.2, 0.0], 5.0)]),
        t("mouth_lower_down_r", vec![bump(&[58, 59], [0.0, 2.2, 0.0], 5.0)]),
        t("mouth_dimple_l", vec![bump(&[54], [1.8, 0.0, -0.8], 4.0)]),
        t("mouth_dimple_r", vec![bump(&[48], [-1.8, 0.0, -0.8], 4.0)]),
        t("mouth_roll_upper", vec![bump(&[49, 50, 51, 52, 53], [0.0, 1.0, -1.2], 5.0)]),
        t("mouth_roll_lower", vec![bump(&[55, 56, 57, 58, 59], [0.0, -1.0, -1.2], 5.0)]),
        t("mouth_shrug_upper", vec![bump(&[49, 50, 51, 52, 53], [0.0, -1.5, 0.5], 6.0)]),
        t("mouth_shrug_lower", vec![bump(&[55, 56, 57, 58, 59, 8], [0.0, -1.8, 0.5], 7.0)]),
        t("viseme_e", vec![
            bump(&[48], [-1.5, 0.0, 0.0], 6.0),
            bump(&[54], [1.5, 0.0, 0.0], 6.0),
            bump(&[55, 56, 57, 58, 59], [0.0, 2.5, 0.0], 6.0),
        ]),
        t("viseme_ih", vec![bump(&[56, 57, 58], [0.0, 2.0, 0.0], 6.0)]),
        t("viseme_oh", vec![
            bump(&[48], [2.5, 0.0, 0.5], 5.0),
            bump(&[54], [-2.5, 0.0, 0.5], 5.0),
            bump(&[55, 56, 57, 58, 59], [0.0, 3.5, 0.0], 6.0),
            bump(&[49, 50, 51, 52, 53], [0.0, -1.0, 0.0], 6.0),
        ]),
        t("viseme_ou", vec![
            bump(&[48], [3.5, 0.0, 1.0], 5.0),
            bump(&[54], [-3.5, 0.0, 1.0], 5.0),
            bump(&[55, 56, 57, 58, 59], [0.0, 1.5, 1.0], 5.0),
        ]),
        t("viseme_pp", vec![
            bump(&[61, 62, 63], [0.0, 1.0, 0.3], 4.0),
            bump(&[65, 66, 67], [0.0, -1.0, 0.3], 4.0),
        ]),
        t("viseme_ff", vec![bump(&[55, 56, 57, 58, 59], [0.0, -1.5, -1.5], 6.0)]),
        t("viseme_th", vec![bump(&[65, 66, 67], [0.0, 1.5, 1.2], 4.0)]),
        t("viseme_dd", vec![
            bump(&[56, 57, 58], [0.0, 1.8, 0.0], 6.0),
            bump(&[65, 66, 67], [0.0, 1.5, 0.0], 4.0),
        ]),
        t("viseme_kk", vec![
            bump(&[55, 56, 57, 58, 59], [0.0, 2.2, 0.0], 6.0),
            bump(&[8], [0.0, 1.8, 0.0], 8.0),
        ]),
        t("viseme_ch", vec![
            bump(&[48], [1.8, 0.0, 0.4], 5.0),
            bump(&[54], [-1.8, 0.0, 0.4], 5.0),
            bump(&[55, 56, 57, 58, 59], [0.0, 2.0, 0.8], 6.0),
        ]),
        t("viseme_ss", vec![
            bump(&[48], [-1.2, 0.0, 0.0], 5.0),
            bump(&[54], [1.2, 0.0, 0.0], 5.0),
            bump(&[65, 66, 67], [0.0, 1.0, 0.0], 4.0),
        ]),
        t("viseme_nn", vec![
            bump(&[61, 62, 63], [0.0, 1.0, 0.0], 4.0),
            bump(&[65, 66, 67], [0.0, -1.0, 0.0], 4.0),
        ]),
        t("viseme_rr", vec![
            bump(&[48], [1.5, 0.0, 0.3], 5.0),
            bump(&[54], [-1.5, 0.0, 0.3], 5.0),
            bump(&[55, 56, 57, 58, 59], [0.0, 1.8, 0.3], 6.0),
        ]),
    ]
}

/// Antagonist pairs disallowed from firing together, by name. Applied only
/// where both names exist in the rig.
fn antagonist_pairs() -> Vec<(&'static str, &'static str)> {
    vec![
        ("brow_raise_l", "brow_lower_l"),
        ("brow_raise_r", "brow_lower_r"),
        ("brow_inner_up_l", "brow_lower_l"),
        ("brow_inner_up_r", "brow_lower_r"),
        ("brow_outer_up_l", "brow_lower_l"),
        ("brow_outer_up_r", "brow_lower_r"),
        ("eye_blink_l", "eye_wide_l"),
        ("eye_blink_r", "eye_wide_r"),
        ("eye_look_left_l", "eye_look_right_l"),
        ("eye_look_left_r", "eye_look_right_r"),
        ("eye_look_up_l", "eye_look_down_l"),
        ("eye_look_up_r", "eye_look_down_r"),
        ("mouth_open", "mouth_close"),
        ("mouth_smile_l", "mouth_frown_l"),
        ("mouth_smile_r", "mouth_frown_r"),
        ("mouth_pucker", "mouth_stretch_l"),
        ("mouth_pucker", "mouth_stretch_r"),
        ("mouth_funnel", "mouth_close"),
        ("mouth_roll_upper", "mouth_shrug_upper"),
        ("mouth_roll_lower", "mouth_shrug_lower"),
    ]
}

/// Strips a trailing `_<digits>` repetition suffix added when `K` exceeds
/// the catalog size.
fn base_name(name: &str) -> &str {
    if let Some(pos) = name.rfind('_') {
        let (head, tail) = name.split_at(pos);
        if tail[1..].chars().all(|c| c.is_ascii_digit()) && !tail[1..].is_empty() {
            return head;
        }
    }
    name
}

/// Default feature-source derivation by name prefix: brows and eyes map to
/// their side's region, noses to the nose region, and everything mouth-like
/// to the mouth group.
pub fn derive_group_spec(target_names: &[String]) -> GroupSpec {
    let mut groups = BTreeMap::new();
    groups.insert("mouth".to_string(), vec!["lips".to_string(), "teeth".to_string()]);
    let mut target_source = BTreeMap::new();
    for name in target_names {
        let base = base_name(name);
        let right = base.ends_with("_r");
        let source = if base.starts_with("brow_") {
            if right { "eyebrow_right" } else { "eyebrow_left" }
        } else if base.starts_with("eye_") {
            if right { "eye_right" } else { "eye_left" }
        } else if base.starts_with("nose_") {
            "nose"
        } else {
            // mouth_ and viseme_ targets read the grouped mouth feature
            "mouth"
        };
        target_source.insert(name.clone(), source.to_string());
    }
    GroupSpec {
        groups,
        target_source,
    }
}

/// Builds a face-like procedural character: 68 landmark vertices laid out in
/// the standard topology on an ellipsoidal shell, filler vertices sampled
/// over the face oval, and `k` localized smooth delta targets with semantic
/// names. Deterministic per seed; different seeds vary the proportions,
/// filler cloud, and bump magnitudes.
pub fn make_procedural_rig(seed: u64, vertices: usize, k: usize) -> Result<BlendshapeRig> {
    if vertices < 500 {
        return Err(Error::invalid(format!(
            "procedural rig needs at least 500 vertices, got {vertices}"
        )));
    }
    if k < 8 {
        return Err(Error::invalid(format!(
            "procedural rig needs at least 8 targets, got {k}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xF1));

    // per-seed proportions
    let sx = rng.gen_range(0.97..1.03);
    let sy = rng.gen_range(0.97..1.03);
    let dome = rng.gen_range(26.0..34.0);

    let layout = landmark_layout(sx, sy);
    let mut neutral: Vec<Point3> = layout
        .iter()
        .map(|p| [p[0], p[1], face_depth(*p, dome)])
        .collect();
    while neutral.len() < vertices {
        // rejection-sample the face oval
        let x = rng.gen_range(14.0..114.0);
        let y = rng.gen_range(10.0..120.0);
        let nx = (x - 64.0) / (48.0 * sx);
        let ny = (y - 66.0) / (54.0 * sy);
        if nx * nx + ny * ny > 1.0 {
            continue;
        }
        let z = face_depth([x, y], dome) + rng.gen_range(-0.5..0.5);
        neutral.push([x, y, z]);
    }

    let catalog = target_catalog();
    let mut targets = Vec::with_capacity(k);
    for idx in 0..k {
        let entry = &catalog[idx % catalog.len()];
        let name = if idx < catalog.len() {
            entry.name.to_string()
        } else {
            format!("{}_{}", entry.name, idx / catalog.len() + 1)
        };
        // eyelid travel is bounded by the eye opening; the other regions
        // move a lot more on a real face (a full jaw drop is 15-20px at
        // this resolution), so their catalog amplitudes are scaled up
        let class_scale = if entry.name.starts_with("eye_") { 1.0 } else { 2.5 };
        let amp = class_scale * rng.gen_range(0.9..1.1);
        let rad = rng.gen_range(0.95..1.05);
        let mut accum: BTreeMap<u32, Point3> = BTreeMap::new();
        for b in &entry.bumps {
            let radius = b.radius * rad;
            let anchor_points: Vec<Point3> = b.anchors.iter().map(|&a| neutral[a]).collect();
            for (vi, v) in neutral.iter().enumerate() {
                let d = anchor_points
                    .iter()
                    .map(|a| dist3(*v, *a))
                    .fold(f64::INFINITY, f64::min);
                if d >= radius {
                    continue;
                }
                let falloff = (std::f64::consts::FRAC_PI_2 * d / radius).cos().powi(2);
                let s = amp * falloff;
                let e = accum.entry(vi as u32).or_insert([0.0; 3]);
                e[0] += s * b.dir[0];
                e[1] += s * b.dir[1];
                e[2] += s * b.dir[2];
            }
        }
        let deltas: Vec<(u32, f64, f64, f64)> = accum
            .into_iter()
            .filter(|(_, d)| d[0].abs() + d[1].abs() + d[2].abs() > 1e-6)
            .map(|(v, d)| (v, d[0], d[1], d[2]))
            .collect();
        targets.push(DeltaTarget { name, deltas });
    }

    let names: Vec<String> = targets.iter().map(|t| t.name.clone()).collect();
    let mut reasonable = ReasonableArray::all_allowed(k);
    let find = |n: &str| names.iter().position(|t| base_name(t) == n);
    for (a, b) in antagonist_pairs() {
        if let (Some(i), Some(j)) = (find(a), find(b)) {
            reasonable.disallow(i, j)?;
        }
    }
    // at most one viseme at a time, and no viseme with the broad mouth poses
    let visemes: Vec<usize> = names
        .iter()
        .enumerate()
        .filter(|(_, n)| base_name(n).starts_with("viseme_"))
        .map(|(i, _)| i)
        .collect();
    for (a, &i) in visemes.iter().enumerate() {
        for &j in &visemes[a + 1..] {
            reasonable.disallow(i, j)?;
        }
        for broad in ["mouth_open", "mouth_close", "mouth_pucker", "mouth_funnel"] {
            if let Some(j) = find(broad) {
                if i != j {
                    reasonable.disallow(i, j)?;
                }
            }
        }
    }

    let rig = BlendshapeRig {
        name: format!("procedural-{seed}-v{vertices}-k{k}"),
        vertex_count: vertices,
        neutral,
        targets,
        landmark_indices: (0..LANDMARK_COUNT).collect(),
        reasonable,
        group_spec: derive_group_spec(&names),
    };
    rig.validate()?;
    Ok(rig)
}

/// Canonical template for a rig: its frontal neutral projection, rescaled
/// uniformly to fit `[8, 120]^2` and centered in the frame.
pub fn template_from_rig(rig: &BlendshapeRig) -> Result<AlignmentTemplate> {
    let frontal = project_landmarks(rig, &rig.neutral, &HeadPose::identity())?;
    let (lo, hi) = frontal.bounds();
    let width = (hi[0] - lo[0]).max(1e-9);
    let height = (hi[1] - lo[1]).max(1e-9);
    let scale = (112.0 / width).min(112.0 / height);
    let cx = 0.5 * (lo[0] + hi[0]);
    let cy = 0.5 * (lo[1] + hi[1]);
    let points = frontal
        .points
        .iter()
        .map(|p| [64.0 + (p[0] - cx) * scale, 64.0 + (p[1] - cy) * scale])
        .collect();
    AlignmentTemplate::new(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::FRAME_RESOLUTION;
    use crate::math::dist2;

    #[test]
    fn expression_sampler_respects_all_constraints() {
        let rig = make_procedural_rig(1, 600, 20).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..10_000 {
            let w = sample_expression(&mut rng, &rig.reasonable, 20, 5).unwrap();
            let active = w.active_indices();
            assert!((1..=5).contains(&active.len()));
            assert!(active.iter().all(|&i| w.0[i] > 0.0 && w.0[i] <= 1.0));
            assert!(is_reasonable(&rig.reasonable, &w));
        }
    }

    #[test]
    fn max_active_one_forces_single_target() {
        let arr = ReasonableArray::all_allowed(10);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let w = sample_expression(&mut rng, &arr, 10, 1).unwrap();
            assert_eq!(w.active_count(), 1);
        }
    }

    #[test]
    fn active_count_histogram_covers_one_to_five() {
        let arr = ReasonableArray::all_allowed(30);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut hist = [0usize; 6];
        for _ in 0..10_000 {
            let w = sample_expression(&mut rng, &arr, 30, 5).unwrap();
            hist[w.active_count()] += 1;
        }
        assert_eq!(hist[0], 0);
        for n in 1..=5 {
            assert!(hist[n] > 0, "active count {n} never drawn: {hist:?}");
        }
    }

    #[test]
    fn no_target_starves_with_all_allowed_array() {
        let arr = ReasonableArray::all_allowed(62);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut counts = vec![0usize; 62];
        let draws = 10_000;
        for _ in 0..draws {
            let w = sample_expression(&mut rng, &arr, 62, 5).unwrap();
            for i in w.active_indices() {
                counts[i] += 1;
            }
        }
        for (i, &c) in counts.iter().enumerate() {
            assert!(
                c as f64 >= 0.005 * draws as f64,
                "target {i} active only {c}/{draws} times"
            );
        }
    }

    #[test]
    fn pose_sampler_is_uniform_and_closed() {
        let a = HeadPose([0.1, 0.0, 0.0]);
        let b = HeadPose([-0.2, 0.1, 0.0]);
        let single = PoseDistribution::new(vec![a]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..50 {
            assert_eq!(sample_pose(&mut rng, &single).unwrap(), a);
        }
        let two = PoseDistribution::new(vec![a, b]).unwrap();
        let mut hits = 0usize;
        let draws = 10_000;
        for _ in 0..draws {
            let p = sample_pose(&mut rng, &two).unwrap();
            assert!(p == a || p == b);
            if p == a {
                hits += 1;
            }
        }
        let freq = hits as f64 / draws as f64;
        assert!((0.48..=0.52).contains(&freq), "frequency {freq}");
    }

    #[test]
    fn empty_pose_distribution_rejected() {
        assert!(matches!(
            PoseDistribution::new(vec![]),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn neutral_sample_reproduces_aligned_neutral_layout() {
        let rig = make_procedural_rig(2, 700, 12).unwrap();
        let tmpl = template_from_rig(&rig).unwrap();
        let dist = PoseDistribution::new(vec![HeadPose::identity()]).unwrap();
        let cfg = GenConfig {
            count: 1,
            neutral_fraction: 1.0,
            ..GenConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = synth_sample(&rig, &tmpl, &rig.reasonable, &dist, &mut rng, &cfg).unwrap();
        assert_eq!(s.weights, WeightVector::zeros(12));
        let raw = project_landmarks(&rig, &rig.neutral, &HeadPose::identity()).unwrap();
        let (want, _) = align_to_template(&raw, &tmpl).unwrap();
        for (p, q) in s.landmarks.points.iter().zip(&want.points) {
            assert!(dist2(*p, *q) < 1e-9);
        }
    }

    #[test]
    fn samples_stay_inside_frame_with_slack() {
        let rig = make_procedural_rig(3, 700, 16).unwrap();
        let tmpl = template_from_rig(&rig).unwrap();
        let dist = default_pose_distribution();
        let cfg = GenConfig {
            count: 2_000,
            seed: 4,
            ..GenConfig::default()
        };
        let data = generate_dataset(&rig, &tmpl, &rig.reasonable, &dist, &cfg).unwrap();
        for (i, s) in data.iter().enumerate() {
            check_sample(s, &rig.reasonable, cfg.max_active)
                .unwrap_or_else(|e| panic!("sample {i}: {e}"));
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let rig = make_procedural_rig(5, 650, 12).unwrap();
        let tmpl = template_from_rig(&rig).unwrap();
        let dist = default_pose_distribution();
        let cfg = GenConfig {
            count: 50,
            seed: 11,
            ..GenConfig::default()
        };
        let a = generate_dataset(&rig, &tmpl, &rig.reasonable, &dist, &cfg).unwrap();
        let b = generate_dataset(&rig, &tmpl, &rig.reasonable, &dist, &cfg).unwrap();
        assert_eq!(a, b);
        let bytes_a = serde_json::to_vec(&a).unwrap();
        let bytes_b = serde_json::to_vec(&b).unwrap();
        assert_eq!(bytes_a, bytes_b);
    }

    #[test]
    fn zero_count_rejected() {
        let rig = make_procedural_rig(5, 650, 12).unwrap();
        let tmpl = template_from_rig(&rig).unwrap();
        let dist = default_pose_distribution();
        let cfg = GenConfig {
            count: 0,
            ..GenConfig::default()
        };
        assert!(matches!(
            generate_dataset(&rig, &tmpl, &rig.reasonable, &dist, &cfg),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn dataset_file_roundtrip() {
        let rig = make_procedural_rig(6, 600, 10).unwrap();
        let tmpl = template_from_rig(&rig).unwrap();
        let dist = default_pose_distribution();
        let cfg = GenConfig {
            count: 20,
            seed: 3,
            ..GenConfig::default()
        };
        let data = generate_dataset(&rig, &tmpl, &rig.reasonable, &dist, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        save_dataset(&path, &data).unwrap();
        assert_eq!(load_dataset(&path).unwrap(), data);
    }

    #[test]
    fn procedural_rig_is_deterministic_per_seed() {
        let a = make_procedural_rig(7, 800, 62).unwrap();
        let b = make_procedural_rig(7, 800, 62).unwrap();
        assert_eq!(
            serde_json::to_vec(&a.neutral).unwrap(),
            serde_json::to_vec(&b.neutral).unwrap()
        );
        assert_eq!(a.targets, b.targets);
        let c = make_procedural_rig(8, 800, 62).unwrap();
        assert_ne!(a.neutral, c.neutral);
    }

    #[test]
    fn every_target_visibly_displaces_a_landmark() {
        let rig = make_procedural_rig(1, 900, 62).unwrap();
        let base = project_landmarks(&rig, &rig.neutral, &HeadPose::identity()).unwrap();
        for k in 0..rig.target_count() {
            let mesh = apply_weights(&rig, &WeightVector::unit(62, k)).unwrap();
            let moved = project_landmarks(&rig, &mesh, &HeadPose::identity()).unwrap();
            let max_shift = base
                .points
                .iter()
                .zip(&moved.points)
                .map(|(a, b)| dist2(*a, *b))
                .fold(0.0, f64::max);
            assert!(
                max_shift > 0.5,
                "target {} ({}) shifts landmarks at most {max_shift:.3}px",
                k,
                rig.targets[k].name
            );
        }
    }

    #[test]
    fn rig_below_minimums_rejected() {
        assert!(matches!(
            make_procedural_rig(0, 400, 62),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            make_procedural_rig(0, 600, 4),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn template_fits_frame() {
        let rig = make_procedural_rig(9, 700, 12).unwrap();
        let tmpl = template_from_rig(&rig).unwrap();
        for p in &tmpl.points {
            assert!(p[0] >= 8.0 - 1e-9 && p[0] <= 120.0 + 1e-9);
            assert!(p[1] >= 8.0 - 1e-9 && p[1] <= 120.0 + 1e-9);
        }
        assert_eq!(tmpl.resolution, FRAME_RESOLUTION);
    }

    #[test]
    fn default_poses_are_valid_and_repeatable() {
        let a = default_pose_distribution();
        let b = default_pose_distribution();
        assert_eq!(a.poses, b.poses);
        assert_eq!(a.poses.len(), 2000);
        for p in &a.poses {
            p.validate().unwrap();
            assert!(p.yaw().abs() <= 0.6 && p.pitch().abs() <= 0.4 && p.roll().abs() <= 0.2);
        }
    }

    #[test]
    fn group_spec_derivation_by_prefix() {
        let names: Vec<String> = ["brow_raise_l", "eye_blink_r", "nose_flare_l", "mouth_open", "viseme_aa"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let spec = derive_group_spec(&names);
        assert_eq!(spec.target_source["brow_raise_l"], "eyebrow_left");
        assert_eq!(spec.target_source["eye_blink_r"], "eye_right");
        assert_eq!(spec.target_source["nose_flare_l"], "nose");
        assert_eq!(spec.target_source["mouth_open"], "mouth");
        assert_eq!(spec.target_source["viseme_aa"], "mouth");
        spec.validate(&names).unwrap();
    }
}
