//! Blink-range adaptation: a two-centroid online k-means over normalized
//! eyelid distances re-scales the raw blink signal to the individual's eye
//! geometry.

use serde::{Deserialize, Serialize};

use super::gaze::{eye_line, EyeObservation};
use crate::align::AlignmentTemplate;
use crate::error::{Error, Result};
use crate::math::{clamp01, dot2, sub2};

/// Reference geometry and the linear transform taking an adapted open-eye
/// distance to a remap threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlinkCalibration {
    /// Reference normalized open-eye gap (template geometry).
    pub d_ref: f64,
    /// Normalized gap treated as fully closed by the raw signal.
    pub ear_closed_ref: f64,
    pub a: f64,
    pub b: f64,
    pub t_max: f64,
    /// Observations required before the threshold is trusted.
    pub warmup: usize,
    /// Online k-means centroid update rate.
    pub eta: f64,
}

impl Default for BlinkCalibration {
    fn default() -> Self {
        BlinkCalibration {
            d_ref: 0.36,
            ear_closed_ref: 0.054,
            a: 1.0,
            b: 0.0,
            t_max: 0.5,
            warmup: 10,
            eta: 0.05,
        }
    }
}

impl BlinkCalibration {
    /// Calibration anchored to a template's own eye geometry: `d_ref` is the
    /// mean normalized gap of the template's two eyes.
    pub fn from_template(tmpl: &AlignmentTemplate) -> Result<Self> {
        let lms = tmpl.as_landmarks();
        let (left, right) = super::eye_observations(&lms);
        let d = 0.5 * (normalized_gap(&left)? + normalized_gap(&right)?);
        if d <= 0.0 {
            return Err(Error::degenerate("template eyes have no eyelid gap"));
        }
        Ok(BlinkCalibration {
            d_ref: d,
            ear_closed_ref: 0.15 * d,
            ..BlinkCalibration::default()
        })
    }
}

/// Eyelid gap perpendicular to the eye line, averaged over the paired
/// eyelid points and divided by the corner distance.
pub fn normalized_gap(obs: &EyeObservation) -> Result<f64> {
    if obs.upper.is_empty() || obs.lower.is_empty() {
        return Err(Error::degenerate("eyelid point lists are empty"));
    }
    let line = eye_line(obs)?;
    let normal = [-line.direction[1], line.direction[0]];
    let pairs = obs.upper.len().min(obs.lower.len());
    let mut acc = 0.0;
    for i in 0..pairs {
        acc += dot2(sub2(obs.lower[i], obs.upper[i]), normal);
    }
    Ok((acc / pairs as f64).abs() / line.length)
}

/// Two-centroid state: the adapted "opened eyes" and "closed eyes" gap
/// estimates for one eye of one stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlinkAdaptState {
    pub c_open: f64,
    pub c_closed: f64,
    pub eta: f64,
    pub observations: usize,
}

impl BlinkAdaptState {
    /// Centroids start at the reference gap and half of it.
    pub fn new(cal: &BlinkCalibration) -> Self {
        BlinkAdaptState {
            c_open: cal.d_ref,
            c_closed: 0.5 * cal.d_ref,
            eta: cal.eta,
            observations: 0,
        }
    }
}

/// One online k-means step: the observed gap moves its nearer centroid by
/// `eta` of the residual; the `c_open >= c_closed` ordering is restored by
/// swapping if an update ever violates it.
pub fn blink_adapt_update(state: &BlinkAdaptState, obs: &EyeObservation) -> Result<BlinkAdaptState> {
    let d = normalized_gap(obs)?;
    let mut next = *state;
    if (d - next.c_open).abs() <= (d - next.c_closed).abs() {
        next.c_open += next.eta * (d - next.c_open);
    } else {
        next.c_closed += next.eta * (d - next.c_closed);
    }
    if next.c_open < next.c_closed {
        std::mem::swap(&mut next.c_open, &mut next.c_closed);
    }
    next.observations += 1;
    Ok(next)
}

/// Threshold for the blink remap. Wider-than-reference eyes give 0; narrower
/// eyes raise the floor, capped at `t_max`.
pub fn blink_threshold(state: &BlinkAdaptState, cal: &BlinkCalibration) -> Result<f64> {
    if state.observations < cal.warmup {
        return Err(Error::NotWarmedUp {
            observed: state.observations,
            required: cal.warmup,
        });
    }
    Ok((cal.a * (cal.d_ref - state.c_open) / cal.d_ref + cal.b).clamp(0.0, cal.t_max))
}

/// Re-maps a raw blink value so `t` becomes the new low edge of the range.
pub fn blink_remap(raw: f64, t: f64) -> f64 {
    debug_assert!((0.0..1.0).contains(&t));
    clamp01((raw - t) / (1.0 - t))
}

/// Geometric raw blink signal: linear in the normalized eyelid gap, 0 at the
/// reference open gap, 1 at the reference closed gap.
pub fn blink_raw(obs: &EyeObservation, cal: &BlinkCalibration) -> Result<f64> {
    let ear = normalized_gap(obs)?;
    Ok(clamp01((cal.d_ref - ear) / (cal.d_ref - cal.ear_closed_ref)))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Unit-length eye whose normalized gap is exactly `d`.
    pub(crate) fn gap_obs(d: f64) -> EyeObservation {
        EyeObservation {
            inner: [0.0, 0.0],
            outer: [1.0, 0.0],
            iris: None,
            upper: vec![[0.35, -d / 2.0], [0.65, -d / 2.0]],
            lower: vec![[0.35, d / 2.0], [0.65, d / 2.0]],
        }
    }

    #[test]
    fn normalized_gap_reads_constructed_distance() {
        for d in [0.05, 0.2, 0.36] {
            assert!((normalized_gap(&gap_obs(d)).unwrap() - d).abs() < 1e-12);
        }
    }

    #[test]
    fn alternating_stream_converges_to_batch_two_means() {
        let cal = BlinkCalibration {
            d_ref: 0.3,
            ..BlinkCalibration::default()
        };
        let mut state = BlinkAdaptState::new(&cal);
        let mut stream: Vec<f64> = Vec::new();
        for i in 0..500 {
            let d = if i % 2 == 0 { 0.30 } else { 0.05 };
            stream.push(d);
            state = blink_adapt_update(&state, &gap_obs(d)).unwrap();
        }
        // batch 2-means oracle on the same stream (exact for two values)
        let lo: Vec<f64> = stream.iter().copied().filter(|d| *d < 0.175).collect();
        let hi: Vec<f64> = stream.iter().copied().filter(|d| *d >= 0.175).collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!((state.c_closed - mean(&lo)).abs() < 0.02);
        assert!((state.c_open - mean(&hi)).abs() < 0.02);
    }

    #[test]
    fn constant_stream_captures_one_centroid_only() {
        let cal = BlinkCalibration {
            d_ref: 0.3,
            ..BlinkCalibration::default()
        };
        let mut state = BlinkAdaptState::new(&cal);
        let before_closed = state.c_closed;
        for _ in 0..300 {
            state = blink_adapt_update(&state, &gap_obs(0.28)).unwrap();
        }
        assert!((state.c_open - 0.28).abs() < 0.005);
        assert_eq!(state.c_closed, before_closed);
    }

    #[test]
    fn centroids_stay_in_the_convex_hull_of_data_and_init() {
        let cal = BlinkCalibration::default();
        let mut state = BlinkAdaptState::new(&cal);
        let init = (state.c_closed, state.c_open);
        let data = [0.1, 0.4, 0.22, 0.31, 0.05, 0.38];
        let lo = data.iter().copied().fold(init.0.min(init.1), f64::min);
        let hi = data.iter().copied().fold(init.0.max(init.1), f64::max);
        for _ in 0..50 {
            for d in data {
                state = blink_adapt_update(&state, &gap_obs(d)).unwrap();
                assert!(state.c_closed >= lo - 1e-12 && state.c_open <= hi + 1e-12);
                assert!(state.c_open >= state.c_closed);
            }
        }
    }

    #[test]
    fn threshold_requires_warmup() {
        let cal = BlinkCalibration::default();
        let state = BlinkAdaptState::new(&cal);
        assert!(matches!(
            blink_threshold(&state, &cal),
            Err(Error::NotWarmedUp { .. })
        ));
    }

    #[test]
    fn threshold_formula_and_clamp() {
        let cal = BlinkCalibration {
            d_ref: 0.3,
            ..BlinkCalibration::default()
        };
        let mut state = BlinkAdaptState::new(&cal);
        state.observations = 100;
        state.c_open = cal.d_ref;
        assert_eq!(blink_threshold(&state, &cal).unwrap(), 0.0);
        state.c_open = 0.5 * cal.d_ref;
        assert_eq!(blink_threshold(&state, &cal).unwrap(), 0.5);
    }

    #[test]
    fn threshold_monotone_in_open_centroid() {
        let cal = BlinkCalibration::default();
        let mut prev = f64::INFINITY;
        for i in 0..50 {
            let mut state = BlinkAdaptState::new(&cal);
            state.observations = 100;
            state.c_open = 0.1 + 0.01 * i as f64;
            let t = blink_threshold(&state, &cal).unwrap();
            assert!(t <= prev + 1e-15);
            prev = t;
        }
    }

    #[test]
    fn remap_edges_and_midpoint() {
        assert_eq!(blink_remap(0.2, 0.2), 0.0);
        assert_eq!(blink_remap(1.0, 0.2), 1.0);
        assert!((blink_remap(0.6, 0.2) - 0.5).abs() < 1e-15);
        assert_eq!(blink_remap(0.1, 0.2), 0.0); // below the low edge clamps
    }

    #[test]
    fn remap_monotonicity() {
        let mut prev = -1.0;
        for i in 0..=20 {
            let raw = i as f64 / 20.0;
            let v = blink_remap(raw, 0.3);
            assert!(v >= prev);
            prev = v;
        }
        // non-increasing in t
        let mut prev = 2.0;
        for i in 0..20 {
            let t = i as f64 / 25.0;
            let v = blink_remap(0.5, t);
            assert!(v <= prev + 1e-15);
            prev = v;
        }
    }

    #[test]
    fn raw_signal_interpolates_reference_points() {
        let cal = BlinkCalibration {
            d_ref: 0.3,
            ear_closed_ref: 0.05,
            ..BlinkCalibration::default()
        };
        assert_eq!(blink_raw(&gap_obs(0.3), &cal).unwrap(), 0.0);
        assert_eq!(blink_raw(&gap_obs(0.05), &cal).unwrap(), 1.0);
        let mid = blink_raw(&gap_obs(0.175), &cal).unwrap();
        assert!((mid - 0.5).abs() < 1e-12);
    }

    #[test]
    fn empty_eyelids_rejected() {
        let mut obs = gap_obs(0.2);
        obs.upper.clear();
        assert!(matches!(
            normalized_gap(&obs),
            Err(Error::DegenerateInput(_))
        ));
    }
}
