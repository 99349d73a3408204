//! Detection and mitigation of predictive rate parity violations for
//! score-based classifiers on clustered (repeat-user) data.
//!
//! The crate is organised bottom-up:
//!
//! * [`data`] holds the clustered observation model, CSV ingestion and the
//!   member-level split / bootstrap primitives.
//! * [`kernel`] and [`estimator`] implement the clustered Nadaraya-Watson
//!   estimator (user-level and aggregate) with a cluster delta-method
//!   standard error.
//! * [`testing`] builds score grids and runs the pointwise parity tests, the
//!   marginal-outcome test and the ordering diagnostic.
//! * [`calibration`] and [`marginal`] are the mitigation side: per-group
//!   score transformations and group-specific thresholds.
//! * [`metrics`], [`synth`] and [`harness`] support evaluation.
//!
//! Heavy loops (grid points, bootstrap and Monte-Carlo replicates) run on
//! rayon when the `parallel` feature is enabled; see [`exec::Parallelism`].

pub mod calibration;
pub mod data;
pub mod error;
pub mod estimator;
pub mod exec;
pub mod harness;
pub mod kernel;
pub mod marginal;
pub mod metrics;
pub mod synth;
pub mod testing;

mod stats;

pub use calibration::{Calibrator, Method};
pub use data::{ClusteredDataset, CompositeWeights, Member, Observation, Schema};
pub use error::{Error, Result};
pub use estimator::{Mode, PointEstimate};
pub use exec::Parallelism;
pub use kernel::{BandwidthRule, Kernel};
pub use stats::normal_quantile;
pub use testing::{ParityTestReport, ScoreGrid};
