//! Streaming post-processing: EMA smoothing, reasonable-combination
//! enforcement, and the geometric blink/gaze complementary modules, folded
//! over frames by a per-stream mutable state.

mod blink;
mod gaze;

pub use blink::{
    blink_adapt_update, blink_raw, blink_remap, blink_threshold, normalized_gap, BlinkAdaptState,
    BlinkCalibration,
};
pub use gaze::{
    eye_line, gaze_detect, iris_intersection, EyeLine, EyeObservation, GazeCalibration,
    GazeCoefficients,
};

use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::align::{align_to_template, AlignmentTemplate, LandmarkSet};
use crate::datagen::template_from_rig;
use crate::error::{Error, Result};
use crate::math::Point2;
use crate::net::{predict, NetworkParams, NetworkSpec};
use crate::rig::{enforce_reasonable, BlendshapeRig, WeightVector};

/// First-order exponential smoothing over weight vectors. The first frame
/// passes through unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct EmaState {
    pub prev: Option<WeightVector>,
    pub alpha: f64,
}

impl EmaState {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::invalid(format!("EMA alpha {alpha} outside (0, 1]")));
        }
        Ok(EmaState { prev: None, alpha })
    }
}

/// `s_t = alpha * w_t + (1 - alpha) * s_{t-1}`, componentwise. Evaluated in
/// the increment form `s + alpha * (w - s)` so a constant input is an exact
/// fixed point.
pub fn ema_update(state: &mut EmaState, w: &WeightVector) -> Result<WeightVector> {
    let smoothed = match &state.prev {
        None => w.clone(),
        Some(_) if state.alpha == 1.0 => w.clone(),
        Some(prev) => {
            if prev.len() != w.len() {
                return Err(Error::invalid("weight length changed mid-stream"));
            }
            WeightVector(
                w.0.iter()
                    .zip(&prev.0)
                    .map(|(cur, old)| old + state.alpha * (cur - old))
                    .collect(),
            )
        }
    };
    state.prev = Some(smoothed.clone());
    Ok(smoothed)
}

/// Which rig targets the complementary modules overwrite, plus module
/// calibrations and the EMA constant. Targets missing from a rig are
/// silently skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuntimeConfig {
    pub ema_alpha: f64,
    pub gaze: GazeCalibration,
    /// Blink calibration; `None` derives it from the rig's template geometry.
    pub blink: Option<BlinkCalibration>,
    pub blink_target_left: String,
    pub blink_target_right: String,
    pub gaze_targets_left: Vec<String>,
    pub gaze_targets_right: Vec<String>,
    pub gaze_targets_up: Vec<String>,
    pub gaze_targets_down: Vec<String>,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        let v = |a: &str, b: &str| vec![a.to_string(), b.to_string()];
        RuntimeConfig {
            ema_alpha: 0.6,
            gaze: GazeCalibration::default(),
            blink: None,
            blink_target_left: "eye_blink_l".into(),
            blink_target_right: "eye_blink_r".into(),
            gaze_targets_left: v("eye_look_left_l", "eye_look_left_r"),
            gaze_targets_right: v("eye_look_right_l", "eye_look_right_r"),
            gaze_targets_up: v("eye_look_up_l", "eye_look_up_r"),
            gaze_targets_down: v("eye_look_down_l", "eye_look_down_r"),
        }
    }
}

/// Mutable per-stream state. One value per logical video stream; never share
/// across streams.
#[derive(Debug, Clone)]
pub struct StreamState {
    pub ema: EmaState,
    pub blink_left: BlinkAdaptState,
    pub blink_right: BlinkAdaptState,
    pub frame: usize,
    /// Frames where gaze had to be skipped for lack of iris data.
    pub gaze_skipped: usize,
    pub blink_cal: BlinkCalibration,
    template: AlignmentTemplate,
}

impl StreamState {
    pub fn new(rig: &BlendshapeRig, cfg: &RuntimeConfig) -> Result<Self> {
        let template = template_from_rig(rig)?;
        let blink_cal = match cfg.blink {
            Some(c) => c,
            None => BlinkCalibration::from_template(&template)?,
        };
        Ok(StreamState {
            ema: EmaState::new(cfg.ema_alpha)?,
            blink_left: BlinkAdaptState::new(&blink_cal),
            blink_right: BlinkAdaptState::new(&blink_cal),
            frame: 0,
            gaze_skipped: 0,
            blink_cal,
            template,
        })
    }

    pub fn template(&self) -> &AlignmentTemplate {
        &self.template
    }
}

/// Optional per-frame eyelid override carried by the frames file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EyelidPoints {
    pub upper: Vec<Point2>,
    pub lower: Vec<Point2>,
}

/// One line of the frames file: raw landmarks plus the optional iris and
/// eyelid channels, all in the same (unaligned) pixel frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameInput {
    pub lm: LandmarkSet,
    #[serde(default)]
    pub iris_left: Option<Point2>,
    #[serde(default)]
    pub iris_right: Option<Point2>,
    #[serde(default)]
    pub eyelids_left: Option<EyelidPoints>,
    #[serde(default)]
    pub eyelids_right: Option<EyelidPoints>,
}

impl FrameInput {
    pub fn from_landmarks(lm: LandmarkSet) -> Self {
        FrameInput {
            lm,
            iris_left: None,
            iris_right: None,
            eyelids_left: None,
            eyelids_right: None,
        }
    }
}

/// Builds (left, right) eye observations from a 68-point landmark set.
/// Eyelid points are paired outer-to-inner along the lid.
pub fn eye_observations(lms: &LandmarkSet) -> (EyeObservation, EyeObservation) {
    let p = |i: usize| lms.points[i];
    let right = EyeObservation {
        inner: p(39),
        outer: p(36),
        iris: None,
        upper: vec![p(37), p(38)],
        lower: vec![p(41), p(40)],
    };
    let left = EyeObservation {
        inner: p(42),
        outer: p(45),
        iris: None,
        upper: vec![p(43), p(44)],
        lower: vec![p(47), p(46)],
    };
    (left, right)
}

fn frame_observations(frame: &FrameInput) -> (EyeObservation, EyeObservation) {
    let (mut left, mut right) = eye_observations(&frame.lm);
    left.iris = frame.iris_left;
    right.iris = frame.iris_right;
    if let Some(e) = &frame.eyelids_left {
        left.upper = e.upper.clone();
        left.lower = e.lower.clone();
    }
    if let Some(e) = &frame.eyelids_right {
        right.upper = e.upper.clone();
        right.lower = e.lower.clone();
    }
    (left, right)
}

fn overwrite(w: &mut WeightVector, rig: &BlendshapeRig, name: &str, value: f64) {
    if let Some(i) = rig.target_index(name) {
        w.0[i] = value.clamp(0.0, 1.0);
    }
}

/// Full per-frame pipeline: align, predict, overwrite blink and gaze targets
/// from the complementary modules, enforce reasonable combinations, smooth.
pub fn retarget_frame(
    frame: &FrameInput,
    params: &NetworkParams,
    spec: &NetworkSpec,
    rig: &BlendshapeRig,
    state: &mut StreamState,
    cfg: &RuntimeConfig,
) -> Result<WeightVector> {
    let (aligned, _) =
        align_to_template(&frame.lm, &state.template).map_err(|e| e.at_stage("align"))?;
    let mut weights = predict(params, spec, &aligned).map_err(|e| e.at_stage("predict"))?;

    // blink: adapt the per-eye range online, then remap the raw signal
    let (left_obs, right_obs) = frame_observations(frame);
    for (obs, adapt, target) in [
        (&left_obs, &mut state.blink_left, &cfg.blink_target_left),
        (&right_obs, &mut state.blink_right, &cfg.blink_target_right),
    ] {
        *adapt = blink_adapt_update(adapt, obs).map_err(|e| e.at_stage("blink"))?;
        let raw = blink_raw(obs, &state.blink_cal).map_err(|e| e.at_stage("blink"))?;
        let threshold = blink_threshold(adapt, &state.blink_cal).unwrap_or(0.0);
        overwrite(&mut weights, rig, target, blink_remap(raw, threshold));
    }

    // gaze: needs at least one iris; otherwise the coefficients stay zero
    let coeffs = if left_obs.iris.is_none() && right_obs.iris.is_none() {
        state.gaze_skipped += 1;
        GazeCoefficients::default()
    } else {
        gaze_detect(&left_obs, &right_obs, &cfg.gaze).map_err(|e| e.at_stage("gaze"))?
    };
    for (names, value) in [
        (&cfg.gaze_targets_left, coeffs.left),
        (&cfg.gaze_targets_right, coeffs.right),
        (&cfg.gaze_targets_up, coeffs.up),
        (&cfg.gaze_targets_down, coeffs.down),
    ] {
        for name in names {
            overwrite(&mut weights, rig, name, value);
        }
    }

    let reasonable = enforce_reasonable(&rig.reasonable, &weights);
    let smoothed = ema_update(&mut state.ema, &reasonable).map_err(|e| e.at_stage("ema"))?;
    state.frame += 1;
    Ok(smoothed)
}

/// Output of a sequence run: one weight vector per input frame plus the
/// per-frame errors that were skipped over.
#[derive(Debug)]
pub struct SequenceOutput {
    pub weights: Vec<WeightVector>,
    /// `(frame index, error)` for frames that failed; their output is the
    /// previous smoothed vector (or zeros at the start of the stream).
    pub errors: Vec<(usize, Error)>,
    pub gaze_skipped: usize,
}

/// Folds `retarget_frame` over a frame sequence with one stream state.
/// Failed frames emit the previous smoothed output and are reported in the
/// error list; processing continues.
pub fn retarget_sequence(
    frames: &[FrameInput],
    params: &NetworkParams,
    spec: &NetworkSpec,
    rig: &BlendshapeRig,
    cfg: &RuntimeConfig,
) -> Result<SequenceOutput> {
    if frames.is_empty() {
        return Err(Error::invalid("sequence needs at least one frame"));
    }
    let mut state = StreamState::new(rig, cfg)?;
    let mut weights = Vec::with_capacity(frames.len());
    let mut errors = Vec::new();
    for (i, frame) in frames.iter().enumerate() {
        match retarget_frame(frame, params, spec, rig, &mut state, cfg) {
            Ok(w) => weights.push(w),
            Err(e) => {
                errors.push((i, e));
                let fallback = state
                    .ema
                    .prev
                    .clone()
                    .unwrap_or_else(|| WeightVector::zeros(rig.target_count()));
                weights.push(fallback);
            }
        }
    }
    Ok(SequenceOutput {
        weights,
        errors,
        gaze_skipped: state.gaze_skipped,
    })
}

/// Reads a JSON-lines frames file. Parse errors carry the 1-based line
/// number.
pub fn load_frames(path: impl AsRef<Path>) -> Result<Vec<FrameInput>> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut frames = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let frame: FrameInput = serde_json::from_str(&line).map_err(|e| {
            Error::invalid(format!("frames file line {}: {e}", i + 1))
        })?;
        if frame.lm.points.len() != crate::align::LANDMARK_COUNT {
            return Err(Error::invalid(format!(
                "frames file line {}: expected 68 landmarks, got {}",
                i + 1,
                frame.lm.points.len()
            )));
        }
        frames.push(frame);
    }
    Ok(frames)
}

pub fn save_frames(path: impl AsRef<Path>, frames: &[FrameInput]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut out = BufWriter::new(file);
    for f in frames {
        serde_json::to_writer(&mut out, f)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Writes the weights CSV: header `frame,<target names...>`, one row per
/// frame, six decimal places.
pub fn write_weights_csv(
    path: impl AsRef<Path>,
    target_names: &[String],
    weights: &[WeightVector],
) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut out = BufWriter::new(file);
    write!(out, "frame")?;
    for name in target_names {
        write!(out, ",{name}")?;
    }
    writeln!(out)?;
    for (i, w) in weights.iter().enumerate() {
        write!(out, "{i}")?;
        for v in &w.0 {
            write!(out, ",{v:.6}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::make_procedural_rig;
    use crate::net::{init_params, Variant};
    use crate::rig::{apply_weights, is_reasonable, project_landmarks, HeadPose};

    #[test]
    fn ema_alpha_one_is_identity() {
        let mut state = EmaState::new(1.0).unwrap();
        for v in [0.3, 0.9, 0.1] {
            let w = WeightVector(vec![v]);
            assert_eq!(ema_update(&mut state, &w).unwrap(), w);
        }
    }

    #[test]
    fn ema_constant_input_is_a_fixed_point() {
        let mut state = EmaState::new(0.3).unwrap();
        let c = WeightVector(vec![0.25, 0.75]);
        for _ in 0..100 {
            assert_eq!(ema_update(&mut state, &c).unwrap(), c);
        }
    }

    #[test]
    fn ema_recurrence_hand_values() {
        let mut state = EmaState::new(0.5).unwrap();
        let outs: Vec<f64> = [1.0, 0.0, 0.0]
            .iter()
            .map(|&v| ema_update(&mut state, &WeightVector(vec![v])).unwrap().0[0])
            .collect();
        assert_eq!(outs, vec![1.0, 0.5, 0.25]);
    }

    #[test]
    fn ema_output_bounded_by_inputs() {
        let mut state = EmaState::new(0.6).unwrap();
        let mut prev = None::<f64>;
        for v in [0.9, 0.1, 0.5, 0.0, 1.0, 0.3] {
            let out = ema_update(&mut state, &WeightVector(vec![v])).unwrap().0[0];
            if let Some(p) = prev {
                assert!(out >= p.min(v) - 1e-15 && out <= p.max(v) + 1e-15);
            } else {
                assert_eq!(out, v);
            }
            prev = Some(out);
        }
    }

    #[test]
    fn ema_rejects_bad_alpha() {
        assert!(EmaState::new(0.0).is_err());
        assert!(EmaState::new(1.5).is_err());
    }

    fn pipeline_fixture() -> (
        crate::rig::BlendshapeRig,
        NetworkSpec,
        NetworkParams,
        Vec<FrameInput>,
    ) {
        let rig = make_procedural_rig(4, 700, 30).unwrap();
        let spec = NetworkSpec::for_rig(Variant::FullGrouping, &rig);
        let params = init_params(&spec, 1).unwrap();
        // synthesize raw frames by projecting expressed meshes
        let mut frames = Vec::new();
        for i in 0..6 {
            let mut w = WeightVector::zeros(rig.target_count());
            w.0[i % 5] = 0.5;
            let mesh = apply_weights(&rig, &w).unwrap();
            let lms = project_landmarks(&rig, &mesh, &HeadPose::identity()).unwrap();
            frames.push(FrameInput::from_landmarks(lms));
        }
        (rig, spec, params, frames)
    }

    #[test]
    fn frame_output_is_reasonable_and_deterministic() {
        let (rig, spec, params, frames) = pipeline_fixture();
        let cfg = RuntimeConfig::default();
        let run = || {
            let mut state = StreamState::new(&rig, &cfg).unwrap();
            retarget_frame(&frames[0], &params, &spec, &rig, &mut state, &cfg).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a, b);
        assert!(is_reasonable(&rig.reasonable, &a));
        assert!(a.0.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn missing_iris_counts_and_zeroes_gaze_targets() {
        let (rig, spec, params, frames) = pipeline_fixture();
        let cfg = RuntimeConfig::default();
        let mut state = StreamState::new(&rig, &cfg).unwrap();
        let w = retarget_frame(&frames[0], &params, &spec, &rig, &mut state, &cfg).unwrap();
        assert_eq!(state.gaze_skipped, 1);
        for name in cfg
            .gaze_targets_left
            .iter()
            .chain(&cfg.gaze_targets_right)
            .chain(&cfg.gaze_targets_up)
            .chain(&cfg.gaze_targets_down)
        {
            if let Some(i) = rig.target_index(name) {
                assert_eq!(w.0[i], 0.0, "gaze target {name} not zeroed");
            }
        }
    }

    #[test]
    fn sequence_matches_single_frame_and_keeps_length() {
        let (rig, spec, params, frames) = pipeline_fixture();
        let cfg = RuntimeConfig::default();
        let out = retarget_sequence(&frames, &params, &spec, &rig, &cfg).unwrap();
        assert_eq!(out.weights.len(), frames.len());
        assert!(out.errors.is_empty());
        let mut state = StreamState::new(&rig, &cfg).unwrap();
        let single =
            retarget_frame(&frames[0], &params, &spec, &rig, &mut state, &cfg).unwrap();
        assert_eq!(out.weights[0], single);
    }

    #[test]
    fn constant_sequence_stabilizes_after_first_frame() {
        let (rig, spec, params, frames) = pipeline_fixture();
        let cfg = RuntimeConfig::default();
        let constant: Vec<FrameInput> = vec![frames[0].clone(); 5];
        let out = retarget_sequence(&constant, &params, &spec, &rig, &cfg).unwrap();
        for w in &out.weights[1..] {
            assert_eq!(*w, out.weights[0]);
        }
    }

    #[test]
    fn frames_file_roundtrip_and_line_errors() {
        let (_, _, _, frames) = pipeline_fixture();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("frames.jsonl");
        save_frames(&path, &frames).unwrap();
        assert_eq!(load_frames(&path).unwrap(), frames);

        std::fs::write(&path, "{\"lm\": [[1,2]]}\nnot json\n").unwrap();
        let err = load_frames(&path).unwrap_err();
        assert!(err.to_string().contains("line 1"), "got: {err}");
    }

    #[test]
    fn csv_has_header_and_six_decimals() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("weights.csv");
        write_weights_csv(
            &path,
            &["a".to_string(), "b".to_string()],
            &[WeightVector(vec![0.5, 0.125])],
        )
        .unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "frame,a,b\n0,0.500000,0.125000\n");
    }
}
