//! Run configuration: the knobs of the estimate command, serializable so
//! every run can echo exactly what it resolved to.

use serde::{Deserialize, Serialize};

use lee_core::logic::{Exponent, RuleWeights};
use lee_core::solver::{SolverMode, SolverSettings, DEFAULT_STOCHASTIC_FLOOR};
use lee_core::EstimatorConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Weight of the ensemble and constraint rules.
    pub rule_weight: f64,
    /// Weight of the prior-belief rules (the regularization weight).
    pub prior_weight: f64,
    /// Hinge exponent, 1 or 2.
    pub exponent: u8,
    pub rho: f64,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_iterations: usize,
    /// Subproblems sampled per iteration; full sweeps when absent.
    pub stochastic: Option<usize>,
    pub stochastic_floor: f64,
    pub seed: u64,
    /// Hard-label threshold on the soft targets.
    pub threshold: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            rule_weight: 1.0,
            prior_weight: 0.1,
            exponent: 1,
            rho: 1.0,
            eps_abs: 1e-5,
            eps_rel: 1e-3,
            max_iterations: 25_000,
            stochastic: None,
            stochastic_floor: DEFAULT_STOCHASTIC_FLOOR,
            seed: 0,
            threshold: 0.5,
        }
    }
}

impl RunConfig {
    pub fn estimator_config(&self) -> Result<EstimatorConfig, String> {
        let exponent = match self.exponent {
            1 => Exponent::Linear,
            2 => Exponent::Squared,
            other => return Err(format!("exponent must be 1 or 2, got {other}")),
        };
        let mode = match self.stochastic {
            None => SolverMode::Full,
            Some(k) => SolverMode::Stochastic {
                subproblems: k,
                floor: self.stochastic_floor,
            },
        };
        Ok(EstimatorConfig {
            weights: RuleWeights {
                rule_weight: self.rule_weight,
                prior_weight: self.prior_weight,
                exponent,
            },
            solver: SolverSettings {
                rho: self.rho,
                eps_abs: self.eps_abs,
                eps_rel: self.eps_rel,
                max_iterations: self.max_iterations,
                mode,
                seed: self.seed,
                random_multipliers: false,
                // Keep the serialized trace to roughly a thousand entries.
                trace_every: (self.max_iterations / 1000).max(1),
            },
            threshold: self.threshold,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrips_through_json() {
        let config = RunConfig {
            prior_weight: 0.25,
            stochastic: Some(128),
            seed: 99,
            ..RunConfig::default()
        };
        let json = serde_json::to_string(&config).unwrap();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(config, back);
    }

    #[test]
    fn rejects_bad_exponent() {
        let config = RunConfig {
            exponent: 3,
            ..RunConfig::default()
        };
        assert!(config.estimator_config().is_err());
    }

    #[test]
    fn maps_to_estimator_config() {
        let config = RunConfig {
            exponent: 2,
            stochastic: Some(10),
            ..RunConfig::default()
        };
        let estimator = config.estimator_config().unwrap();
        assert_eq!(estimator.weights.exponent, Exponent::Squared);
        assert!(matches!(
            estimator.solver.mode,
            SolverMode::Stochastic { subproblems: 10, .. }
        ));
    }
}
