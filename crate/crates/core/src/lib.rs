//! Supervised classification of spatial point patterns.
//!
//! Two consistent rules are provided:
//!
//! * a plug-in Bayes rule for Poisson classes, with class intensities
//!   estimated by an edge-corrected kernel estimator averaged over
//!   replicates ([`intensity`], [`classify::BayesClassifier`]);
//! * the k nearest neighbour rule over Hausdorff-type distances between
//!   patterns, optionally combined with a cardinality penalty ([`metrics`],
//!   [`classify::KnnClassifier`]).
//!
//! [`simulate`] draws inhomogeneous Poisson and Strauss patterns,
//! [`crossval`] selects `k` and the bandwidth, [`experiments`] runs the
//! Monte Carlo benchmarks and [`io`] holds the file formats and run
//! configuration used by the `ppclass` command line tool.

pub mod classify;
pub mod crossval;
pub mod error;
pub mod experiments;
pub mod intensity;
pub mod io;
pub mod metrics;
pub mod pattern;
pub mod quadrature;
pub mod seed;
pub mod simulate;

pub use error::{Error, Result};
pub use pattern::{LabeledPattern, Point, PointPattern, Window};
