//! Crowd classification aggregation engine with statistical and epistemic
//! verification tools.
//!
//! The crate is organised as a set of small, independently testable modules:
//!
//! * [`crowd`] generates synthetic annotator populations and classification
//!   logs from a declarative scenario (seeded, fully deterministic).
//! * [`quality`] runs the quality-control chain over a log: probation gate on
//!   gold subjects, agreement-based annotator weights, weighted consensus with
//!   reliability tiers, and confusion-matrix bias correction.
//! * [`condorcet`] computes exact majority-vote competence curves and their
//!   Monte-Carlo counterparts.
//! * [`veritistic`] scores credences against truth, applies Bayesian updates,
//!   and checks the structural conditions under which evidence helps.
//! * [`epistemic`] is a small Kripke-model checker with individual and
//!   distributed knowledge operators.
//! * [`stats`] provides the from-scratch statistics used elsewhere:
//!   Kolmogorov-Smirnov tests, Cohen's d, skewness, and log-log regression.
//! * [`scimetrics`] covers catalog growth, citation percentiles, h-index, and
//!   impact factor arithmetic.
//! * [`pipeline`] wires simulation and quality control into an end-to-end run
//!   that persists every intermediate artifact.
//! * [`io`] holds the CSV/JSON readers and writers shared by the pipeline and
//!   the command line interface.

pub mod condorcet;
pub mod crowd;
pub mod epistemic;
pub mod error;
pub mod io;
pub mod pipeline;
pub mod quality;
pub mod scimetrics;
pub mod stats;
pub mod veritistic;

pub use error::{Error, Result};
