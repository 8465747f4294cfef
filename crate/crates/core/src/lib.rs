//! A-contrario small-target detection on score maps.
//!
//! A score map (the per-pixel output of a target detector) is turned into a
//! discrete 3D point cloud over `(x, y, transformed score)`. Every axis-aligned
//! box with a bounded 2D footprint is counted through an integral volume and
//! the boxes that are too dense to be explained by a Bernoulli background are
//! reported, ranked by their significance `S = -ln NFA`.
//!
//! The crate also carries the fixed-threshold baselines, object-level
//! evaluation, and a synthetic corpus generator used to check false-alarm
//! control.
//!
//! Pipeline stages:
//!
//! 1. [`transform`] – inverse score transform and z-quantization.
//! 2. [`integral`] – cumulative count volume, O(1) box counts.
//! 3. [`nfa`] – binomial tail, Hoeffding significance, number of tests.
//! 4. [`detector`] – minimal-volume table and detection selection.

pub mod baselines;
pub mod cli;
pub mod detector;
pub mod error;
pub mod eval;
pub mod integral;
pub mod nfa;
pub mod scoremap_io;
pub mod synth;
pub mod transform;

pub use detector::{detect, Box3D, Detection, DetectionRun, DetectorParams, KappaTable};
pub use error::{Error, Result};
pub use scoremap_io::{BinaryMask, ScoreFormat, ScoreMap};
pub use transform::{PointCloud3D, TransformParams};
