//! Estimating bipartite common-neighbor counts under edge local differential
//! privacy.
//!
//! A query asks for the number of common neighbors of two vertices `u` and `w`
//! on the same layer. Every vertex only releases randomized versions of its own
//! adjacency row, and an untrusted curator combines the reports. Five
//! estimators are provided: `naive`, `oner`, the two-round single-source
//! estimator `ss`, the three-round double-source estimator `ds`, and a
//! central-model baseline `central`.

pub mod bench;
pub mod error;
pub mod estimators;
pub mod graph;
pub mod ledger;
pub mod mechanisms;
pub mod optimizer;
pub mod protocol;
pub mod rng;

pub use error::{Error, Result};
pub use estimators::{
    analytic_loss, chebyshev_bound, estimate, Algorithm, DegreeRound, DeviationBound,
    EstimateReport, EstimatorOptions, PairStats,
};
pub use graph::{BipartiteGraph, EdgeListFormat, Layer, QueryPair, VertexRef};
pub use mechanisms::PrivacyBudget;
pub use optimizer::BudgetPlan;
pub use rng::RandomSource;
