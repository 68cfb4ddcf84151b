//! Estimating and calibrating label distributions under annotator
//! disagreement.
//!
//! The crate covers four layers:
//!
//! * [`dataset`]: annotation/prediction records, repartitioning, vote subsampling.
//! * [`calibration`]: temperature scaling, prediction and target smoothing,
//!   entropy-matched hyperparameter search.
//! * [`metrics`]: entropy, KL, Jensen-Shannon distance, dual accuracies and
//!   the per-bin analyses.
//! * [`simulator`] and [`classifier`]: fixed-budget annotation plans, a
//!   synthetic world with known distributions, and a softmax classifier
//!   trained single-then-multi.
//!
//! [`experiment`] wires these into sweeps and budget simulations.

pub mod calibration;
pub mod classifier;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod label;
pub mod metrics;
pub mod seed;
pub mod simulator;

pub use error::{Error, Result};
pub use label::{Label, LabelCounts, LabelDistribution, NUM_LABELS};
