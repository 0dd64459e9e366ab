//! Estimates the error rates of multiple classifiers and fuses their
//! predictions using only (or mostly) unlabeled data.
//!
//! Ensemble agreement and ontology constraints (mutual exclusion,
//! subsumption) between classification domains are compiled into weighted
//! linear hinge potentials over soft truth values; the most probable
//! assignment of the latent error rates and target labels is then found by
//! minimizing the resulting convex objective with consensus ADMM.
//!
//! The pipeline is: [`model`] vocabulary and constraints → [`ground`]
//! compilation into a [`ground::GroundProblem`] → [`solver`] inference →
//! [`estimator`] readout. [`eval`] adds ground-truth metrics, baselines,
//! and a synthetic benchmark generator.

pub mod estimator;
pub mod eval;
pub mod ground;
pub mod logic;
pub mod model;
pub mod solver;

pub use estimator::{estimate,EstimatorConfig, Estimates};
pub use ground::{ground, naive_ground, GroundProblem};
pub use logic::{Exponent, LinearHinge, RuleWeights};
pub use model::{
    ClassifierId, DomainId, GroundPredicate, InstanceId, ObservationSet, Ontology, Vocabulary,
};
pub use solver::{solve, Diagnostics, SolverMode, SolverSettings};
