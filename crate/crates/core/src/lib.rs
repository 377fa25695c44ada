//! Node classification by belief propagation and its linearizations.
//!
//! The crate covers standard loopy BP, the linearized update `LinBP` (with
//! and without echo cancellation), its closed form and convergence analysis,
//! single-pass propagation (`SBP`) with incremental maintenance, synthetic
//! Kronecker inputs and tie-aware quality metrics.
//!
//! Beliefs are residuals around `1/k` unless a function says otherwise.

pub mod beliefs;
pub mod bp;
pub mod convergence;
pub mod coupling;
pub mod dense;
pub mod error;
pub mod eval;
pub mod graph;
pub mod linbp;
pub mod sbp;
pub mod synth;

pub use beliefs::{BeliefMatrix, BeliefMode, SparseBeliefs};
pub use bp::{bp_run, bp_run_residual, BpConfig, BpOutcome};
pub use convergence::{convergence_report, mooij_bp_bound, ConvergenceReport, MooijBound};
pub use coupling::{center, CouplingMatrix, NormReport, ResidualCoupling};
pub use error::{Error, Result};
pub use eval::{precision_recall, top_beliefs, QualityReport, TopBeliefAssignment};
pub use graph::{degree_vector, Adjacency, DegreeVector, DirectedGraph, Graph};
pub use linbp::{linbp_closed_form, linbp_iterate, linbp_step, IterConfig, LinearOperator, Variant};
pub use sbp::{sbp_run, standardize, GeodesicIndex, SbpState};
