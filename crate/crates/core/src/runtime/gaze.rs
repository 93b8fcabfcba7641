//! Geometric gaze detection from eye corner and iris keypoints.
//!
//! Directions are in the subject's frame: `left` means the actor looks to
//! their own left. All measures are normalized by the eye's corner distance
//! and oriented by the inter-eye axis, which makes the coefficients
//! invariant under orientation-preserving similarity transforms of the
//! whole observation set.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{dist2, dot2, norm2, scale2, sub2, Point2};

/// Keypoints of one eye in a single frame. Eyelid points are paired by
/// index (upper\[i\] above lower\[i\]). The iris is a separate input channel
/// and may be missing.
#[derive(Debug, Clone, PartialEq)]
pub struct EyeObservation {
    pub inner: Point2,
    pub outer: Point2,
    pub iris: Option<Point2>,
    pub upper: Vec<Point2>,
    pub lower: Vec<Point2>,
}

impl EyeObservation {
    pub fn corner_distance(&self) -> f64 {
        dist2(self.inner, self.outer)
    }
}

/// The horizontal eye line through the two corners.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EyeLine {
    pub midpoint: Point2,
    /// Unit direction from the inner to the outer corner.
    pub direction: Point2,
    pub length: f64,
    /// `(slope, bias)` of `y = slope*x + bias`; `None` for a vertical line.
    pub slope_bias: Option<(f64, f64)>,
}

impl EyeLine {
    pub fn is_vertical(&self) -> bool {
        self.slope_bias.is_none()
    }
}

/// Line through the eye corners with midpoint, length, and, when the line
/// is not vertical, its slope and bias.
pub fn eye_line(obs: &EyeObservation) -> Result<EyeLine> {
    let d = sub2(obs.outer, obs.inner);
    let length = norm2(d);
    if length < 1e-9 {
        return Err(Error::degenerate("eye corners coincide"));
    }
    let direction = scale2(d, 1.0 / length);
    let midpoint = [
        0.5 * (obs.inner[0] + obs.outer[0]),
        0.5 * (obs.inner[1] + obs.outer[1]),
    ];
    let slope_bias = if d[0].abs() < 1e-12 * length {
        None
    } else {
        let slope = d[1] / d[0];
        Some((slope, obs.inner[1] - slope * obs.inner[0]))
    };
    Ok(EyeLine {
        midpoint,
        direction,
        length,
        slope_bias,
    })
}

/// Orthogonal projection of the iris onto the eye line, plus its normalized
/// line coordinate: 0 at the inner corner, 1 at the outer.
pub fn iris_intersection(obs: &EyeObservation) -> Result<(Point2, f64)> {
    let line = eye_line(obs)?;
    let iris = obs
        .iris
        .ok_or_else(|| Error::degenerate("observation has no iris point"))?;
    let along = dot2(sub2(iris, obs.inner), line.direction);
    let q = [
        obs.inner[0] + line.direction[0] * along,
        obs.inner[1] + line.direction[1] * along,
    ];
    Ok((q, along / line.length))
}

/// Scale-free thresholds for turning normalized offsets into coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GazeCalibration {
    /// Normalized horizontal offset that maps to a full-strength coefficient.
    pub h_max: f64,
    /// Normalized vertical offset that maps to a full-strength coefficient.
    pub v_max: f64,
    /// Offsets below this are treated as the primary (straight) position.
    pub deadzone: f64,
}

impl Default for GazeCalibration {
    fn default() -> Self {
        GazeCalibration {
            h_max: 0.25,
            v_max: 0.15,
            deadzone: 0.05,
        }
    }
}

/// Secondary-position coefficients. At most one of left/right and one of
/// up/down is positive.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GazeCoefficients {
    pub left: f64,
    pub right: f64,
    pub up: f64,
    pub down: f64,
}

struct EyeMeasure {
    /// Horizontal offset in the face frame; positive toward the subject's left.
    h: f64,
    /// Vertical offset; positive toward the forehead (looking up).
    v: f64,
}

fn measure_eye(obs: &EyeObservation, face_left: Point2, face_up: Point2) -> Result<EyeMeasure> {
    let line = eye_line(obs)?;
    let (q, t) = iris_intersection(obs)?;
    let iris = obs.iris.expect("checked by iris_intersection");
    // orient the per-eye line coordinate by the inter-eye axis so both eyes
    // measure in the same direction
    let sign = if dot2(line.direction, face_left) >= 0.0 {
        1.0
    } else {
        -1.0
    };
    let h = sign * (t - 0.5);
    let perp = sub2(iris, q);
    let v = dot2(perp, face_up) / line.length;
    Ok(EyeMeasure { h, v })
}

/// Gaze coefficients from both eyes. Offsets are averaged across the eyes
/// that yielded a valid measurement before thresholding; a single degenerate
/// eye falls back to the other.
pub fn gaze_detect(
    left: &EyeObservation,
    right: &EyeObservation,
    cal: &GazeCalibration,
) -> Result<GazeCoefficients> {
    // face axis from the right-eye midpoint toward the left-eye midpoint;
    // points toward the subject's left
    let mid = |o: &EyeObservation| {
        [
            0.5 * (o.inner[0] + o.outer[0]),
            0.5 * (o.inner[1] + o.outer[1]),
        ]
    };
    let axis = sub2(mid(left), mid(right));
    let axis_len = norm2(axis);
    if axis_len < 1e-9 {
        return Err(Error::degenerate("eye midpoints coincide"));
    }
    let face_left = scale2(axis, 1.0 / axis_len);
    // rotate by -90 degrees: in image coordinates (y down) this points from
    // the eye line toward the forehead
    let face_up = [face_left[1], -face_left[0]];

    let measures: Vec<EyeMeasure> = [left, right]
        .iter()
        .filter_map(|obs| measure_eye(obs, face_left, face_up).ok())
        .collect();
    if measures.is_empty() {
        return Err(Error::degenerate("both eye observations are degenerate"));
    }
    let n = measures.len() as f64;
    let mean_h = measures.iter().map(|m| m.h).sum::<f64>() / n;
    let mean_v = measures.iter().map(|m| m.v).sum::<f64>() / n;

    let mut out = GazeCoefficients::default();
    if mean_h > cal.deadzone {
        out.left = (mean_h / cal.h_max).clamp(0.0, 1.0);
    } else if -mean_h > cal.deadzone {
        out.right = (-mean_h / cal.h_max).clamp(0.0, 1.0);
    }
    if mean_v > cal.deadzone {
        out.up = (mean_v / cal.v_max).clamp(0.0, 1.0);
    } else if -mean_v > cal.deadzone {
        out.down = (-mean_v / cal.v_max).clamp(0.0, 1.0);
    }
    Ok(out)
}
