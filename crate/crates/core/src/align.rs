//! Similarity-transform (sRT) alignment of landmark sets to a canonical
//! 128x128 frontal template.
//!
//! The same alignment is used in three places: synthetic data generation,
//! inference pre-processing, and the evaluation metric. The solver is the
//! closed-form least-squares Procrustes fit for 2D similarity transforms,
//! with reflections excluded by construction.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{add2, cross2, dist2, dot2, scale2, sub2, Point2};

/// Number of points in the standard facial landmark topology.
pub const LANDMARK_COUNT: usize = 68;

/// Side length in pixels of the canonical aligned frame.
pub const FRAME_RESOLUTION: f64 = 128.0;

/// A set of 68 facial landmarks in pixel coordinates (x right, y down).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LandmarkSet {
    pub points: Vec<Point2>,
}

impl LandmarkSet {
    pub fn new(points: Vec<Point2>) -> Result<Self> {
        if points.len() != LANDMARK_COUNT {
            return Err(Error::invalid(format!(
                "landmark set needs {LANDMARK_COUNT} points, got {}",
                points.len()
            )));
        }
        if points.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::invalid("landmark coordinates must be finite"));
        }
        Ok(Self { points })
    }

    pub fn centroid(&self) -> Point2 {
        let mut c = [0.0, 0.0];
        for p in &self.points {
            c = add2(c, *p);
        }
        scale2(c, 1.0 / self.points.len() as f64)
    }

    /// Axis-aligned bounding box as (min, max) corners.
    pub fn bounds(&self) -> (Point2, Point2) {
        let mut lo = [f64::INFINITY, f64::INFINITY];
        let mut hi = [f64::NEG_INFINITY, f64::NEG_INFINITY];
        for p in &self.points {
            for a in 0..2 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        (lo, hi)
    }
}

/// The canonical frontal landmark layout every set is aligned to.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlignmentTemplate {
    pub resolution: f64,
    pub points: Vec<Point2>,
}

impl AlignmentTemplate {
    pub fn new(points: Vec<Point2>) -> Result<Self> {
        let lms = LandmarkSet::new(points)?;
        if point_variance(&lms.points) < 1e-9 {
            return Err(Error::degenerate("template points are all coincident"));
        }
        Ok(Self {
            resolution: FRAME_RESOLUTION,
            points: lms.points,
        })
    }

    pub fn as_landmarks(&self) -> LandmarkSet {
        LandmarkSet {
            points: self.points.clone(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let tmpl: AlignmentTemplate = serde_json::from_str(&text)?;
        AlignmentTemplate::new(tmpl.points)
    }
}

/// Similarity transform `p -> s * R * p + t` with `det(R) = +1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTransform {
    pub scale: f64,
    /// Rotation angle in radians; the 2x2 matrix is derived from it so the
    /// `det(R) = +1` invariant can never drift.
    pub rotation: f64,
    pub translation: Point2,
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: 0.0,
            translation: [0.0, 0.0],
        }
    }

    /// Row-major rotation matrix.
    pub fn rotation_matrix(&self) -> [[f64; 2]; 2] {
        let (s, c) = self.rotation.sin_cos();
        [[c, -s], [s, c]]
    }

    pub fn apply_point(&self, p: Point2) -> Point2 {
        let r = self.rotation_matrix();
        [
            self.scale * (r[0][0] * p[0] + r[0][1] * p[1]) + self.translation[0],
            self.scale * (r[1][0] * p[0] + r[1][1] * p[1]) + self.translation[1],
        ]
    }

    /// The transform equivalent to applying `first`, then `self`.
    pub fn compose(&self, first: &SimilarityTransform) -> SimilarityTransform {
        SimilarityTransform {
            scale: self.scale * first.scale,
            rotation: self.rotation + first.rotation,
            translation: self.apply_point(first.translation),
        }
    }

    pub fn inverse(&self) -> SimilarityTransform {
        let inv = SimilarityTransform {
            scale: 1.0 / self.scale,
            rotation: -self.rotation,
            translation: [0.0, 0.0],
        };
        let t = inv.apply_point(self.translation);
        SimilarityTransform {
            translation: [-t[0], -t[1]],
            ..inv
        }
    }
}

fn point_variance(points: &[Point2]) -> f64 {
    let n = points.len() as f64;
    let mut c = [0.0, 0.0];
    for p in points {
        c = add2(c, *p);
    }
    c = scale2(c, 1.0 / n);
    points.iter().map(|p| dot2(sub2(*p, c), sub2(*p, c))).sum::<f64>() / n
}

/// Least-squares similarity fit: argmin over (s, R, t) of
/// `sum_i || s*R*src_i + t - dst_i ||^2`, rotation-only (no reflection).
///
/// The 2D closed form reduces to one angle: with centered points x, y the
/// optimal rotation maximizes `cos(th)*sum(x.y) + sin(th)*sum(x × y)`, giving
/// `th = atan2(sum cross, sum dot)` and `s = |(sum dot, sum cross)| / sum|x|^2`.
pub fn estimate_similarity(src: &LandmarkSet, dst: &LandmarkSet) -> Result<SimilarityTransform> {
    if src.points.len() != dst.points.len() {
        return Err(Error::invalid("source and destination sizes differ"));
    }
    let n = src.points.len() as f64;
    let src_c = src.centroid();
    let dst_c = dst.centroid();

    let mut sum_dot = 0.0;
    let mut sum_cross = 0.0;
    let mut src_var = 0.0;
    for (p, q) in src.points.iter().zip(&dst.points) {
        let x = sub2(*p, src_c);
        let y = sub2(*q, dst_c);
        sum_dot += dot2(x, y);
        sum_cross += cross2(x, y);
        src_var += dot2(x, x);
    }
    if src_var / n < 1e-12 {
        return Err(Error::degenerate(
            "source landmarks have zero variance; similarity fit is underdetermined",
        ));
    }

    let rotation = sum_cross.atan2(sum_dot);
    let scale = (sum_dot * sum_dot + sum_cross * sum_cross).sqrt() / src_var;
    let mut transform = SimilarityTransform {
        scale,
        rotation,
        translation: [0.0, 0.0],
    };
    let rotated_c = transform.apply_point(src_c);
    transform.translation = sub2(dst_c, rotated_c);
    Ok(transform)
}

/// Maps every point through the transform.
pub fn apply_similarity(transform: &SimilarityTransform, lms: &LandmarkSet) -> LandmarkSet {
    LandmarkSet {
        points: lms.points.iter().map(|p| transform.apply_point(*p)).collect(),
    }
}

/// Aligns landmarks onto the template, returning the aligned set and the
/// transform that produced it.
pub fn align_to_template(
    lms: &LandmarkSet,
    tmpl: &AlignmentTemplate,
) -> Result<(LandmarkSet, SimilarityTransform)> {
    let transform = estimate_similarity(lms, &tmpl.as_landmarks())?;
    Ok((apply_similarity(&transform, lms), transform))
}

/// Mean squared residual of a fit, used by tests and the evaluation metric.
pub fn alignment_residual(a: &LandmarkSet, b: &LandmarkSet) -> f64 {
    a.points
        .iter()
        .zip(&b.points)
        .map(|(p, q)| {
            let d = dist2(*p, *q);
            d * d
        })
        .sum::<f64>()
        / a.points.len() as f64
}
