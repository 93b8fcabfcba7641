//! Blendshape characters: a neutral mesh plus additive delta targets,
//! landmark-vertex projection under a head pose, and the reasonable-pair
//! rules that keep weight combinations plausible.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::align::{LandmarkSet, LANDMARK_COUNT};
use crate::error::{Error, Result};
use crate::math::{mat3_apply, rot_x, rot_y, rot_z, Point3};
use crate::net::GroupSpec;

/// Vertices of an expressed mesh.
pub type Mesh = Vec<Point3>;

/// Blendshape weight coefficients, one per target, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightVector(pub Vec<f64>);

impl WeightVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let w = WeightVector(values);
        w.validate()?;
        Ok(w)
    }

    pub fn zeros(k: usize) -> Self {
        WeightVector(vec![0.0; k])
    }

    /// Unit vector activating only target `index` at full weight.
    pub fn unit(k: usize, index: usize) -> Self {
        let mut w = vec![0.0; k];
        w[index] = 1.0;
        WeightVector(w)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(bad) = self.0.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!(
                "weight {bad} outside [0, 1]"
            )));
        }
        Ok(())
    }

    pub fn active_indices(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn active_count(&self) -> usize {
        self.0.iter().filter(|v| **v > 0.0).count()
    }
}

/// Sparse per-vertex displacement field added to the neutral mesh.
///
/// Each entry is `(vertex_index, dx, dy, dz)`, matching the on-disk layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaTarget {
    pub name: String,
    pub deltas: Vec<(u32, f64, f64, f64)>,
}

impl DeltaTarget {
    pub fn displacement_entries(&self) -> impl Iterator<Item = (usize, Point3)> + '_ {
        self.deltas
            .iter()
            .map(|&(i, dx, dy, dz)| (i as usize, [dx, dy, dz]))
    }
}

/// Symmetric boolean matrix declaring which target pairs may be active
/// together. The diagonal is always allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct ReasonableArray {
    k: usize,
    allowed: Vec<bool>,
}

impl ReasonableArray {
    /// All pairs allowed.
    pub fn all_allowed(k: usize) -> Self {
        ReasonableArray {
            k,
            allowed: vec![true; k * k],
        }
    }

    pub fn from_disallowed_pairs(k: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut arr = ReasonableArray::all_allowed(k);
        for &(i, j) in pairs {
            arr.disallow(i, j)?;
        }
        Ok(arr)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn disallow(&mut self, i: usize, j: usize) -> Result<()> {
        if i >= self.k || j >= self.k {
            return Err(Error::invalid(format!(
                "pair ({i}, {j}) out of range for {} targets",
                self.k
            )));
        }
        if i == j {
            return Err(Error::invalid("the diagonal must stay allowed"));
        }
        self.allowed[i * self.k + j] = false;
        self.allowed[j * self.k + i] = false;
        Ok(())
    }

    pub fn allowed(&self, i: usize, j: usize) -> bool {
        self.allowed[i * self.k + j]
    }

    /// Disallowed pairs with `i < j`, the sparse on-disk form.
    pub fn disallowed_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs = Vec::new();
        for i in 0..self.k {
            for j in (i + 1)..self.k {
                if !self.allowed(i, j) {
                    pairs.push((i, j));
                }
            }
        }
        pairs
    }
}

/// Head orientation in radians. Yaw turns about the vertical image axis,
/// pitch about the horizontal axis, roll about the view axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HeadPose(pub [f64; 3]);

impl HeadPose {
    pub fn new(yaw: f64, pitch: f64, roll: f64) -> Result<Self> {
        let pose = HeadPose([yaw, pitch, roll]);
        pose.validate()?;
        Ok(pose)
    }

    pub fn identity() -> Self {
        HeadPose([0.0, 0.0, 0.0])
    }

    pub fn yaw(&self) -> f64 {
        self.0[0]
    }

    pub fn pitch(&self) -> f64 {
        self.0[1]
    }

    pub fn roll(&self) -> f64 {
        self.0[2]
    }

    pub fn validate(&self) -> Result<()> {
        use std::f64::consts::PI;
        if self.0.iter().any(|a| !a.is_finite() || a.abs() > PI) {
            return Err(Error::invalid(format!(
                "pose angles must lie in [-pi, pi], got {:?}",
                self.0
            )));
        }
        Ok(())
    }
}

/// A blendshape character.
#[derive(Debug, Clone)]
pub struct BlendshapeRig {
    pub name: String,
    pub vertex_count: usize,
    pub neutral: Mesh,
    pub targets: Vec<DeltaTarget>,
    /// Which mesh vertices are the 68 tracked landmarks.
    pub landmark_indices: Vec<usize>,
    pub reasonable: ReasonableArray,
    pub group_spec: GroupSpec,
}

impl BlendshapeRig {
    /// Number of blendshape targets.
    pub fn target_count(&self) -> usize {
        self.targets.len()
    }

    pub fn target_names(&self) -> Vec<String> {
        self.targets.iter().map(|t| t.name.clone()).collect()
    }

    pub fn target_index(&self, name: &str) -> Option<usize> {
        self.targets.iter().position(|t| t.name == name)
    }

    /// Pivot used for pose rotation: the neutral mesh centroid. Taking it
    /// from the neutral keeps the rotation consistent across expressions.
    pub fn pivot(&self) -> Point3 {
        let mut c = [0.0; 3];
        for v in &self.neutral {
            c = crate::math::add3(c, *v);
        }
        let n = self.neutral.len() as f64;
        [c[0] / n, c[1] / n, c[2] / n]
    }

    pub fn validate(&self) -> Result<()> {
        if self.neutral.len() != self.vertex_count {
            return Err(Error::invalid(format!(
                "neutral has {} vertices, header says {}",
                self.neutral.len(),
                self.vertex_count
            )));
        }
        if self.landmark_indices.len() != LANDMARK_COUNT {
            return Err(Error::invalid(format!(
                "need {LANDMARK_COUNT} landmark indices, got {}",
                self.landmark_indices.len()
            )));
        }
        let mut seen = HashSet::new();
        for &i in &self.landmark_indices {
            if i >= self.vertex_count {
                return Err(Error::invalid(format!("landmark index {i} out of range")));
            }
            if !seen.insert(i) {
                return Err(Error::invalid(format!("duplicate landmark index {i}")));
            }
        }
        let mut names = HashSet::new();
        for target in &self.targets {
            if !names.insert(target.name.as_str()) {
                return Err(Error::invalid(format!(
                    "duplicate target name `{}`",
                    target.name
                )));
            }
            let mut verts = HashSet::new();
            for (i, _) in target.displacement_entries() {
                if i >= self.vertex_count {
                    return Err(Error::invalid(format!(
                        "target `{}` references vertex {i} out of range",
                        target.name
                    )));
                }
                if !verts.insert(i) {
                    return Err(Error::invalid(format!(
                        "target `{}` lists vertex {i} twice",
                        target.name
                    )));
                }
            }
        }
        if self.reasonable.k() != self.targets.len() {
            return Err(Error::invalid(
                "reasonable array size does not match target count",
            ));
        }
        self.group_spec.validate(&self.target_names())?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = RigBundleFile::from_rig(self);
        let text = serde_json::to_string(&file)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: RigBundleFile = serde_json::from_str(&text)?;
        let rig = file.into_rig()?;
        rig.validate()?;
        Ok(rig)
    }
}

/// On-disk rig bundle. The reasonable array is stored as its disallowed
/// pairs, which are far sparser than the full matrix.
#[derive(Serialize, Deserialize)]
struct RigBundleFile {
    name: String,
    vertex_count: usize,
    neutral: Vec<Point3>,
    targets: Vec<DeltaTarget>,
    landmark_indices: Vec<usize>,
    disallowed_pairs: Vec<(usize, usize)>,
    groups: GroupSpec,
}

impl RigBundleFile {
    fn from_rig(rig: &BlendshapeRig) -> Self {
        RigBundleFile {
            name: rig.name.clone(),
            vertex_count: rig.vertex_count,
            neutral: rig.neutral.clone(),
            targets: rig.targets.clone(),
            landmark_indices: rig.landmark_indices.clone(),
            disallowed_pairs: rig.reasonable.disallowed_pairs(),
            groups: rig.group_spec.clone(),
        }
    }

    fn into_rig(self) -> Result<BlendshapeRig> {
        let reasonable =
            ReasonableArray::from_disallowed_pairs(self.targets.len(), &self.disallowed_pairs)?;
        Ok(BlendshapeRig {
            name: self.name,
            vertex_count: self.vertex_count,
            neutral: self.neutral,
            targets: self.targets,
            landmark_indices: self.landmark_indices,
            reasonable,
            group_spec: self.groups,
        })
    }
}

/// Evaluates the expressed mesh: `neutral[v] + sum_k w_k * delta_k[v]`.
pub fn apply_weights(rig: &BlendshapeRig, weights: &WeightVector) -> Result<Mesh> {
    if weights.len() != rig.target_count() {
        return Err(Error::invalid(format!(
            "weight vector has {} components, rig has {} targets",
            weights.len(),
            rig.target_count()
        )));
    }
    weights.validate()?;
    let mut mesh = rig.neutral.clone();
    for (target, &w) in rig.targets.iter().zip(&weights.0) {
        if w == 0.0 {
            continue;
        }
        for (vertex, delta) in target.displacement_entries() {
            mesh[vertex][0] += w * delta[0];
            mesh[vertex][1] += w * delta[1];
            mesh[vertex][2] += w * delta[2];
        }
    }
    Ok(mesh)
}

/// Rotates the mesh about the rig's pivot by the head pose and projects the
/// 68 landmark vertices orthographically (z dropped).
///
/// Rotation is intrinsic roll∘pitch∘yaw: yaw applied first, then pitch,
/// then roll. The neutral frontal face spans roughly `[0, 128]^2`.
pub fn project_landmarks(
    rig: &BlendshapeRig,
    mesh: &Mesh,
    pose: &HeadPose,
) -> Result<LandmarkSet> {
    if mesh.len() != rig.vertex_count {
        return Err(Error::invalid(format!(
            "mesh has {} vertices, rig has {}",
            mesh.len(),
            rig.vertex_count
        )));
    }
    pose.validate()?;
    let pivot = rig.pivot();
    let yaw = rot_y(pose.yaw());
    let pitch = rot_x(pose.pitch());
    let roll = rot_z(pose.roll());
    let points = rig
        .landmark_indices
        .iter()
        .map(|&i| {
            let v = crate::math::sub3(mesh[i], pivot);
            let v = mat3_apply(&yaw, v);
            let v = mat3_apply(&pitch, v);
            let v = mat3_apply(&roll, v);
            [v[0] + pivot[0], v[1] + pivot[1]]
        })
        .collect();
    Ok(LandmarkSet { points })
}

/// True iff every pair of simultaneously active targets is allowed.
pub fn is_reasonable(arr: &ReasonableArray, weights: &WeightVector) -> bool {
    let active = weights.active_indices();
    for (n, &i) in active.iter().enumerate() {
        for &j in &active[n + 1..] {
            if !arr.allowed(i, j) {
                return false;
            }
        }
    }
    true
}

/// Scans disallowed active pairs in ascending `(i, j)` order and zeroes the
/// smaller weight of each; on ties the higher index is zeroed. Weights are
/// only ever zeroed, so a single pass reaches a reasonable state.
pub fn enforce_reasonable(arr: &ReasonableArray, weights: &WeightVector) -> WeightVector {
    let mut w = weights.0.clone();
    let k = w.len().min(arr.k());
    for i in 0..k {
        if w[i] == 0.0 {
            continue;
        }
        for j in (i + 1)..k {
            if w[i] == 0.0 {
                break;
            }
            if w[j] > 0.0 && !arr.allowed(i, j) {
                if w[i] < w[j] {
                    w[i] = 0.0;
                } else {
                    w[j] = 0.0;
                }
            }
        }
    }
    WeightVector(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::make_procedural_rig;
    use crate::math::dist2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_rig() -> BlendshapeRig {
        make_procedural_rig(7, 600, 10).unwrap()
    }

    #[test]
    fn zero_weights_give_neutral_mesh() {
        let rig = small_rig();
        let mesh = apply_weights(&rig, &WeightVector::zeros(rig.target_count())).unwrap();
        assert_eq!(mesh, rig.neutral);
    }

    #[test]
    fn unit_weight_adds_full_delta() {
        let rig = small_rig();
        let mesh = apply_weights(&rig, &WeightVector::unit(rig.target_count(), 3)).unwrap();
        let mut want = rig.neutral.clone();
        for (v, d) in rig.targets[3].displacement_entries() {
            want[v] = crate::math::add3(want[v], d);
        }
        for (a, b) in mesh.iter().zip(&want) {
            assert!(crate::math::dist3(*a, *b) < 1e-15);
        }
    }

    /// Dense brute-force oracle: builds full per-target displacement arrays
    /// and sums every vertex over every target.
    fn dense_apply(rig: &BlendshapeRig, w: &WeightVector) -> Mesh {
        let mut dense: Vec<Vec<Point3>> = Vec::new();
        for t in &rig.targets {
            let mut field = vec![[0.0; 3]; rig.vertex_count];
            for (v, d) in t.displacement_entries() {
                field[v] = d;
            }
            dense.push(field);
        }
        (0..rig.vertex_count)
            .map(|v| {
                let mut p = rig.neutral[v];
                for (k, field) in dense.iter().enumerate() {
                    p[0] += w.0[k] * field[v][0];
                    p[1] += w.0[k] * field[v][1];
                    p[2] += w.0[k] * field[v][2];
                }
                p
            })
            .collect()
    }

    #[test]
    fn pair_combination_matches_dense_oracle() {
        let rig = small_rig();
        let mut w = WeightVector::zeros(rig.target_count());
        // pick a reasonable pair
        let (i, j) = (0, 2);
        assert!(rig.reasonable.allowed(i, j));
        w.0[i] = 0.5;
        w.0[j] = 0.5;
        let fast = apply_weights(&rig, &w).unwrap();
        let slow = dense_apply(&rig, &w);
        for (a, b) in fast.iter().zip(&slow) {
            assert!(crate::math::dist3(*a, *b) < 1e-12);
        }
    }

    #[test]
    fn apply_weights_is_linear_in_the_deltas() {
        let rig = small_rig();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k = rig.target_count();
        let w1 = WeightVector((0..k).map(|_| rng.gen_range(0.0..0.5)).collect());
        let w2 = WeightVector((0..k).map(|_| rng.gen_range(0.0..0.5)).collect());
        let (alpha, beta) = (0.6, 0.4);
        let combo = WeightVector(
            w1.0.iter()
                .zip(&w2.0)
                .map(|(a, b)| alpha * a + beta * b)
                .collect(),
        );
        let m1 = apply_weights(&rig, &w1).unwrap();
        let m2 = apply_weights(&rig, &w2).unwrap();
        let mc = apply_weights(&rig, &combo).unwrap();
        for v in 0..rig.vertex_count {
            for a in 0..3 {
                let lhs = mc[v][a] - rig.neutral[v][a];
                let rhs =
                    alpha * (m1[v][a] - rig.neutral[v][a]) + beta * (m2[v][a] - rig.neutral[v][a]);
                assert!((lhs - rhs).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let rig = small_rig();
        let w = WeightVector::zeros(rig.target_count() + 1);
        assert!(matches!(
            apply_weights(&rig, &w),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn same_weights_transfer_across_rigs() {
        // two rigs sharing K and target names but different geometry
        let a = make_procedural_rig(1, 700, 12).unwrap();
        let b = make_procedural_rig(2, 900, 12).unwrap();
        assert_eq!(a.target_names(), b.target_names());
        assert_ne!(a.neutral, b.neutral);
        let mut w = WeightVector::zeros(12);
        w.0[1] = 0.7;
        w.0[5] = 0.2;
        apply_weights(&a, &w).unwrap();
        apply_weights(&b, &w).unwrap();
    }

    #[test]
    fn identity_pose_projects_canonical_layout() {
        let rig = small_rig();
        let lms = project_landmarks(&rig, &rig.neutral, &HeadPose::identity()).unwrap();
        for (p, &i) in lms.points.iter().zip(&rig.landmark_indices) {
            assert_eq!(p[0], rig.neutral[i][0]);
            assert_eq!(p[1], rig.neutral[i][1]);
        }
    }

    #[test]
    fn roll_pi_rotates_layout_about_pivot() {
        let rig = small_rig();
        let base = project_landmarks(&rig, &rig.neutral, &HeadPose::identity()).unwrap();
        let rolled =
            project_landmarks(&rig, &rig.neutral, &HeadPose::new(0.0, 0.0, std::f64::consts::PI).unwrap())
                .unwrap();
        let pivot = rig.pivot();
        for (p, q) in base.points.iter().zip(&rolled.points) {
            let want = [2.0 * pivot[0] - p[0], 2.0 * pivot[1] - p[1]];
            assert!(dist2(*q, want) < 1e-9);
        }
    }

    #[test]
    fn projection_matches_composed_matrix_oracle() {
        let rig = small_rig();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let pose = HeadPose::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            )
            .unwrap();
            let got = project_landmarks(&rig, &rig.neutral, &pose).unwrap();
            // oracle: single composed matrix applied once per point
            let m = crate::math::mat3_mul(
                &rot_z(pose.roll()),
                &crate::math::mat3_mul(&rot_x(pose.pitch()), &rot_y(pose.yaw())),
            );
            let pivot = rig.pivot();
            for (p, &i) in got.points.iter().zip(&rig.landmark_indices) {
                let v = crate::math::sub3(rig.neutral[i], pivot);
                let r = mat3_apply(&m, v);
                let want = [r[0] + pivot[0], r[1] + pivot[1]];
                assert!(dist2(*p, want) < 1e-12);
            }
        }
    }

    #[test]
    fn identity_projection_is_injective_on_landmarks() {
        for seed in [1, 2, 3] {
            let rig = make_procedural_rig(seed, 800, 20).unwrap();
            let lms = project_landmarks(&rig, &rig.neutral, &HeadPose::identity()).unwrap();
            for i in 0..lms.points.len() {
                for j in (i + 1)..lms.points.len() {
                    assert!(
                        dist2(lms.points[i], lms.points[j]) > 1e-6,
                        "landmarks {i} and {j} coincide"
                    );
                }
            }
        }
    }

    #[test]
    fn reasonable_checks() {
        let arr = ReasonableArray::from_disallowed_pairs(4, &[(0, 1)]).unwrap();
        assert!(is_reasonable(&arr, &WeightVector::zeros(4)));
        assert!(is_reasonable(&arr, &WeightVector::unit(4, 0)));
        let mut w = WeightVector::zeros(4);
        w.0[0] = 0.8;
        w.0[1] = 0.3;
        assert!(!is_reasonable(&arr, &w));
        let fixed = enforce_reasonable(&arr, &w);
        assert_eq!(fixed.0, vec![0.8, 0.0, 0.0, 0.0]);
        assert!(is_reasonable(&arr, &fixed));
    }

    #[test]
    fn enforce_noop_when_already_reasonable() {
        let arr = ReasonableArray::from_disallowed_pairs(4, &[(0, 1)]).unwrap();
        let mut w = WeightVector::zeros(4);
        w.0[0] = 0.4;
        w.0[2] = 0.9;
        assert_eq!(enforce_reasonable(&arr, &w), w);
    }

    #[test]
    fn enforce_tie_zeroes_higher_index() {
        let arr = ReasonableArray::from_disallowed_pairs(2, &[(0, 1)]).unwrap();
        let w = WeightVector(vec![0.5, 0.5]);
        assert_eq!(enforce_reasonable(&arr, &w).0, vec![0.5, 0.0]);
    }

    /// Fixpoint oracle: repeatedly zero the smaller weight of the first
    /// violating pair in ascending order until no violation remains.
    pub(crate) fn enforce_fixpoint_oracle(
        arr: &ReasonableArray,
        weights: &WeightVector,
    ) -> WeightVector {
        let mut w = weights.0.clone();
        loop {
            let mut violated = None;
            'scan: for i in 0..w.len() {
                for j in (i + 1)..w.len() {
                    if w[i] > 0.0 && w[j] > 0.0 && !arr.allowed(i, j) {
                        violated = Some((i, j));
                        break 'scan;
                    }
                }
            }
            match violated {
                Some((i, j)) => {
                    if w[i] < w[j] {
                        w[i] = 0.0;
                    } else {
                        w[j] = 0.0;
                    }
                }
                None => return WeightVector(w),
            }
        }
    }

    #[test]
    fn chained_conflicts_match_fixpoint_oracle() {
        let arr = ReasonableArray::from_disallowed_pairs(3, &[(0, 1), (1, 2)]).unwrap();
        let w = WeightVector(vec![0.5, 0.9, 0.8]);
        let fast = enforce_reasonable(&arr, &w);
        let oracle = enforce_fixpoint_oracle(&arr, &w);
        assert_eq!(fast, oracle);
        assert!(is_reasonable(&arr, &fast));
    }

    #[test]
    fn enforce_random_vectors_match_oracle_and_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let k = 12;
        let mut pairs = Vec::new();
        for i in 0..k {
            for j in (i + 1)..k {
                if rng.gen_bool(0.3) {
                    pairs.push((i, j));
                }
            }
        }
        let arr = ReasonableArray::from_disallowed_pairs(k, &pairs).unwrap();
        for _ in 0..500 {
            let w = WeightVector(
                (0..k)
                    .map(|_| {
                        if rng.gen_bool(0.5) {
                            0.0
                        } else {
                            rng.gen_range(0.0..=1.0)
                        }
                    })
                    .collect(),
            );
            let fast = enforce_reasonable(&arr, &w);
            assert_eq!(fast, enforce_fixpoint_oracle(&arr, &w));
            assert_eq!(fast, enforce_reasonable(&arr, &fast), "not idempotent");
            assert!(is_reasonable(&arr, &fast));
            // only ever zeroes components
            for (a, b) in w.0.iter().zip(&fast.0) {
                assert!(*b == *a || *b == 0.0);
            }
        }
    }

    #[test]
    fn rig_bundle_roundtrip() {
        let rig = small_rig();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rig.json");
        rig.save(&path).unwrap();
        let back = BlendshapeRig::load(&path).unwrap();
        assert_eq!(rig.name, back.name);
        assert_eq!(rig.neutral, back.neutral);
        assert_eq!(rig.targets, back.targets);
        assert_eq!(rig.landmark_indices, back.landmark_indices);
        assert_eq!(rig.reasonable, back.reasonable);
        assert_eq!(rig.group_spec, back.group_spec);
    }
}
