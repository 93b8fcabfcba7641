//! Retargets facial-landmark sequences to blendshape weight vectors.
//!
//! The pipeline is trained entirely on synthetic data generated from a single
//! blendshape character:
//!
//! - [`rig`] — blendshape characters: weighted delta targets over a neutral
//!   mesh, landmark-vertex projection under a head pose, and the
//!   reasonable-combination rules.
//! - [`align`] — similarity-transform (sRT) alignment of 68-point landmark
//!   sets to a canonical 128x128 frontal template.
//! - [`datagen`] — constrained synthetic training corpus plus a procedural
//!   rig factory.
//! - [`net`] — the landmarks-to-weights network in three variants, with
//!   hand-derived gradients and Adam training.
//! - [`runtime`] — streaming post-processing: reasonable-combination
//!   enforcement, EMA smoothing, geometric gaze detection, and blink-range
//!   adaptation.
//! - [`eval`] — the landmark-similarity MSE metric, round-trip evaluation,
//!   and the ablation runner.

pub mod align;
pub mod datagen;
pub mod error;
pub mod eval;
pub mod math;
pub mod net;
pub mod rig;
pub mod runtime;

pub use error::{Error, Result};
