//! Planning toolkit for randomized-benchmarking (RB) sampling strategies.
//!
//! An RB experiment is described by a [`RBConfig`]: the Clifford lengths
//! `m`, the number of random sequences `n` per length, and the number of
//! shots `k` per sequence. The crate predicts the confidence interval of
//! the decay rate estimated from such an experiment, optimizes the
//! configuration so the predicted interval is as small as possible within
//! an execution-time budget, and validates the whole chain on synthetic
//! data:
//!
//! * [`model`] — the decay model `a·p^m + b`, the survival-rate variance
//!   model, and the execution-time model.
//! * [`stats`] — Student-t quantiles, weighted residual statistics, and
//!   reproducible random substreams.
//! * [`ci`] — model-based weights and the interval scale factor `H'`,
//!   combined into the planning objective `h`.
//! * [`fit`] — weighted nonlinear least-squares estimation of the decay
//!   parameters and of the variance-model parameters.
//! * [`optimizer`] — constrained search over configurations, heuristic
//!   families, and grid sweeps.
//! * [`mc`] — a Monte Carlo harness that samples synthetic survival
//!   data, measures estimator spread and interval coverage, and computes
//!   drift-adjusted standard deviations.
//! * [`io`] — the JSON and CSV file formats used by the command-line
//!   interface.

pub mod ci;
pub mod error;
pub mod fit;
pub mod io;
pub mod mc;
pub mod model;
pub mod optimizer;
pub mod stats;

mod guide;

pub use error::{Error, Result};
pub use model::{avg_gate_fidelity, DecayParams, RBConfig, TimeParams, VarianceParams};
