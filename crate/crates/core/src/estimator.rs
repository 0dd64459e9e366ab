//! End-to-end pipeline: observations + ontology → grounding → inference →
//! error-rate estimates and fused target labels.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ground::ground;
use crate::logic::RuleWeights;
use crate::model::{
    ClassifierId, DomainId, GroundPredicate, InstanceId, ModelError, ObservationSet, Ontology,
};
use crate::solver::{solve, Diagnostics, SolverError, SolverSettings};

#[derive(Error, Debug)]
pub enum EstimateError {
    #[error("no observations to estimate from")]
    EmptyObservations,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub weights: RuleWeights,
    pub solver: SolverSettings,
    /// Soft targets at or above this become hard label 1.
    pub threshold: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            weights: RuleWeights::default(),
            solver: SolverSettings::default(),
            threshold: 0.5,
        }
    }
}

/// Inference output: the consensus soft truth values, read off directly as
/// the estimates.
#[derive(Clone, Debug)]
pub struct Estimates {
    /// Error rate per (domain, classifier); defined exactly for pairs with
    /// at least one observed output.
    pub error_rates: BTreeMap<(DomainId, ClassifierId), f64>,
    /// Fused soft label per (domain, instance); semi-supervised labels from
    /// the input are echoed verbatim.
    pub target_soft: BTreeMap<(DomainId, InstanceId), f64>,
    /// `target_soft >= threshold`, as a convenience output.
    pub target_hard: BTreeMap<(DomainId, InstanceId), bool>,
    /// Objective value at the returned assignment.
    pub objective: f64,
    pub diagnostics: Diagnostics,
}

/// Grounds the rules over `obs`, runs MPE inference, and reads the error
/// rates and target labels off the consensus vector. Deterministic for a
/// fixed seed; non-convergence surfaces in the diagnostics rather than as an
/// error.
pub fn estimate(
    obs: &ObservationSet,
    ontology: &Ontology,
    config: &EstimatorConfig,
) -> Result<Estimates, EstimateError> {
    if obs.is_empty() {
        return Err(EstimateError::EmptyObservations);
    }
    obs.validate()?;
    let problem = ground(obs, ontology, &config.weights);
    let solution = solve(&problem, &config.solver)?;

    let mut error_rates = BTreeMap::new();
    let mut target_soft = BTreeMap::new();
    for (idx, pred) in problem.latents().iter().enumerate() {
        let value = solution.assignment[idx];
        match *pred {
            GroundPredicate::ErrorRate { domain, classifier } => {
                error_rates.insert((domain, classifier), value);
            }
            GroundPredicate::TargetOutput { domain, instance } => {
                target_soft.insert((domain, instance), value);
            }
            GroundPredicate::ApproxOutput { .. } => {}
        }
    }
    for (&pred, value) in obs.iter() {
        if let GroundPredicate::TargetOutput { domain, instance } = pred {
            target_soft.insert((domain, instance), value);
        }
    }
    let target_hard = target_soft
        .iter()
        .map(|(&key, &v)| (key, v >= config.threshold))
        .collect();

    Ok(Estimates {
        error_rates,
        target_soft,
        target_hard,
        objective: solution.objective,
        diagnostics: solution.diagnostics,
    })
}

/// Weighted majority vote: combines the observed outputs on each (domain,
/// instance) with weights `max(1 - 2e, 0)`, so chance-level classifiers drop
/// out; if every weight is zero the plain mean is used.
///
/// Every classifier contributing an observation must have an error rate in
/// `error_rates`.
pub fn combine_weighted_majority(
    obs: &ObservationSet,
    error_rates: &BTreeMap<(DomainId, ClassifierId), f64>,
) -> BTreeMap<(DomainId, InstanceId), f64> {
    let mut weighted: BTreeMap<(DomainId, InstanceId), (f64, f64, f64, usize)> = BTreeMap::new();
    for (&pred, value) in obs.iter() {
        let GroundPredicate::ApproxOutput {
            domain,
            classifier,
            instance,
        } = pred
        else {
            continue;
        };
        let error = *error_rates
            .get(&(domain, classifier))
            .unwrap_or_else(|| panic!("no error rate for domain {domain}, classifier {classifier}"));
        let weight = (1.0 - 2.0 * error).max(0.0);
        let entry = weighted
            .entry((domain, instance))
            .or_insert((0.0, 0.0, 0.0, 0));
        entry.0 += weight * value;
        entry.1 += weight;
        entry.2 += value;
        entry.3 += 1;
    }
    weighted
        .into_iter()
        .map(|(key, (weighted_sum, weight_sum, plain_sum, count))| {
            let combined = if weight_sum > 0.0 {
                weighted_sum / weight_sum
            } else {
                plain_sum / count as f64
            };
            (key, combined)
        })
        .collect()
}
