//! Łukasiewicz operator semantics, rule truth values, and compilation of
//! ground rule instances into weighted linear hinge potentials.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{GroundPredicate, ObservationSet};

#[derive(Error, Debug)]
pub enum LogicError {
    #[error("a rule needs at least one body literal")]
    EmptyBody,
    #[error("predicate {0:?} is neither observed nor has a latent index")]
    UnboundPredicate(GroundPredicate),
}

/// Łukasiewicz AND: max{p + q - 1, 0}.
pub fn luk_and(p: f64, q: f64) -> f64 {
    (p + q - 1.0).max(0.0)
}

/// Łukasiewicz OR: min{p + q, 1}.
pub fn luk_or(p: f64, q: f64) -> f64 {
    (p + q).min(1.0)
}

/// Łukasiewicz NOT: 1 - p.
pub fn luk_not(p: f64) -> f64 {
    1.0 - p
}

/// Łukasiewicz IMPLIES: min{1 - p + q, 1}.
pub fn luk_implies(p: f64, q: f64) -> f64 {
    (1.0 - p + q).min(1.0)
}

/// Distance to satisfiability (1 minus the truth value) of the rule
/// `B_1 ∧ … ∧ B_s → H_1 ∨ … ∨ H_t`:
/// `max{0, Σ B_i - Σ H_j + 1 - s}`.
///
/// For values in [0, 1] this closed form equals composing the Łukasiewicz
/// operators over the same rule, which the tests cross-check.
pub fn distance_to_satisfiability(bodies: &[f64], heads: &[f64]) -> Result<f64, LogicError> {
    if bodies.is_empty() {
        return Err(LogicError::EmptyBody);
    }
    let body_sum: f64 = bodies.iter().sum();
    let head_sum: f64 = heads.iter().sum();
    let raw = body_sum - head_sum + 1.0 - bodies.len() as f64;
    Ok(raw.clamp(0.0, 1.0))
}

/// The eight rule shapes the model grounds. `f̂` below denotes a classifier
/// output, `e` its error rate, `f` the target label of the same (domain,
/// instance), and `f'` the target label of a constrained partner domain.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum RuleTemplate {
    /// f̂ ∧ ¬e → f
    EnsemblePosCorrect,
    /// ¬f̂ ∧ ¬e → ¬f
    EnsembleNegCorrect,
    /// f̂ ∧ e → ¬f
    EnsemblePosError,
    /// ¬f̂ ∧ e → f
    EnsembleNegError,
    /// f̂ → f (better-than-chance prior, weighted by κ)
    PriorPos,
    /// ¬f̂ → ¬f (better-than-chance prior, weighted by κ)
    PriorNeg,
    /// ME ∧ f̂ ∧ f' → e
    MutualExclusion,
    /// SUB ∧ ¬f̂ ∧ f' → e
    Subsumption,
}

pub const ALL_TEMPLATES: [RuleTemplate; 8] = [
    RuleTemplate::EnsemblePosCorrect,
    RuleTemplate::EnsembleNegCorrect,
    RuleTemplate::EnsemblePosError,
    RuleTemplate::EnsembleNegError,
    RuleTemplate::PriorPos,
    RuleTemplate::PriorNeg,
    RuleTemplate::MutualExclusion,
    RuleTemplate::Subsumption,
];

/// One ground rule instance: a template bound to concrete predicates.
///
/// `approx` and `target` are set for every template. For the ensemble and
/// prior templates `target` is the target output of the same (domain,
/// instance) as `approx`; for the constraint templates it is the target
/// output of the partner domain. `error` is absent only for the priors.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct RuleGround {
    pub template: RuleTemplate,
    pub approx: GroundPredicate,
    pub target: GroundPredicate,
    pub error: Option<GroundPredicate>,
}

/// One literal of a ground rule body or head.
#[derive(Clone, Copy, Debug)]
pub struct Literal {
    pub pred: GroundPredicate,
    pub negated: bool,
}

impl Literal {
    fn pos(pred: GroundPredicate) -> Self {
        Literal {
            pred,
            negated: false,
        }
    }

    fn neg(pred: GroundPredicate) -> Self {
        Literal {
            pred,
            negated: true,
        }
    }
}

impl RuleGround {
    /// Body and head literals of the rule, in template order.
    ///
    /// The observed ME/SUB guard predicate is omitted: a true guard adds 1
    /// to the body sum and 1 to the body count, which cancel in the distance
    /// formula. `naive` grounding handles false guards separately.
    pub fn literals(&self) -> (Vec<Literal>, Vec<Literal>) {
        use RuleTemplate::*;
        let e = || self.error.expect("template requires an error predicate");
        match self.template {
            EnsemblePosCorrect => (
                vec![Literal::pos(self.approx), Literal::neg(e())],
                vec![Literal::pos(self.target)],
            ),
            EnsembleNegCorrect => (
                vec![Literal::neg(self.approx), Literal::neg(e())],
                vec![Literal::neg(self.target)],
            ),
            EnsemblePosError => (
                vec![Literal::pos(self.approx), Literal::pos(e())],
                vec![Literal::neg(self.target)],
            ),
            EnsembleNegError => (
                vec![Literal::neg(self.approx), Literal::pos(e())],
                vec![Literal::pos(self.target)],
            ),
            PriorPos => (
                vec![Literal::pos(self.approx)],
                vec![Literal::pos(self.target)],
            ),
            PriorNeg => (
                vec![Literal::neg(self.approx)],
                vec![Literal::neg(self.target)],
            ),
            MutualExclusion => (
                vec![Literal::pos(self.approx), Literal::pos(self.target)],
                vec![Literal::pos(e())],
            ),
            Subsumption => (
                vec![Literal::neg(self.approx), Literal::pos(self.target)],
                vec![Literal::pos(e())],
            ),
        }
    }

    /// Distance to satisfiability of this rule under `value`, evaluated by
    /// composing the Łukasiewicz operators. Used as the reference the hinge
    /// compilation is checked against.
    pub fn distance(&self, value: impl Fn(GroundPredicate) -> f64) -> f64 {
        let (bodies, heads) = self.literals();
        let lit = |l: &Literal| {
            let v = value(l.pred);
            if l.negated {
                luk_not(v)
            } else {
                v
            }
        };
        let body = bodies
            .iter()
            .map(lit)
            .reduce(luk_and)
            .expect("rules have nonempty bodies");
        let head = heads
            .iter()
            .map(lit)
            .reduce(luk_or)
            .expect("rules have nonempty heads");
        luk_not(luk_implies(body, head))
    }
}

/// Hinge exponent: linear gives piecewise-linear objectives with exact
/// subproblem solutions; squared penalizes large violations more.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum Exponent {
    Linear,
    Squared,
}

impl Exponent {
    pub fn power(self) -> u8 {
        match self {
            Exponent::Linear => 1,
            Exponent::Squared => 2,
        }
    }
}

/// One potential of the ground problem: the hinge
/// `φ(Y) = (max{ℓ(Y), 0})^p` with `ℓ(Y) = Σ coeff · Y_idx + constant`,
/// contributing `weight · φ(Y)` to the objective.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearHinge {
    /// (latent variable index, coefficient), no duplicate indices.
    pub terms: Vec<(u32, f64)>,
    pub constant: f64,
    pub weight: f64,
    pub exponent: Exponent,
}

impl LinearHinge {
    /// ℓ(Y) over the full consensus vector.
    pub fn linear_value(&self, y: &[f64]) -> f64 {
        self.terms
            .iter()
            .fold(self.constant, |acc, &(idx, c)| acc + c * y[idx as usize])
    }

    /// Unweighted potential `(max{ℓ(Y), 0})^p`.
    pub fn potential(&self, y: &[f64]) -> f64 {
        let v = self.linear_value(y).max(0.0);
        match self.exponent {
            Exponent::Linear => v,
            Exponent::Squared => v * v,
        }
    }

    /// ℓ over the hinge's own variables in `terms` order.
    pub fn linear_value_local(&self, local: &[f64]) -> f64 {
        self.terms
            .iter()
            .zip(local)
            .fold(self.constant, |acc, (&(_, c), &v)| acc + c * v)
    }

    /// True when ℓ ≤ 0 everywhere on [0, 1]^m, so the potential is
    /// identically zero and the hinge cannot influence the optimum.
    pub fn is_trivially_satisfied(&self) -> bool {
        let max_val: f64 = self
            .terms
            .iter()
            .map(|&(_, c)| c.max(0.0))
            .sum::<f64>()
            + self.constant;
        max_val <= 0.0
    }
}

/// Rule weighting: ensemble and constraint rules share `rule_weight` (λ);
/// the prior-belief rules get the smaller `prior_weight` (κ), which acts as
/// a regularization weight resolving the label-flip symmetry.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RuleWeights {
    pub rule_weight: f64,
    pub prior_weight: f64,
    pub exponent: Exponent,
}

impl Default for RuleWeights {
    fn default() -> Self {
        RuleWeights {
            rule_weight: 1.0,
            prior_weight: 0.1,
            exponent: Exponent::Linear,
        }
    }
}

impl RuleWeights {
    pub fn weight_for(&self, template: RuleTemplate) -> f64 {
        match template {
            RuleTemplate::PriorPos | RuleTemplate::PriorNeg => self.prior_weight,
            _ => self.rule_weight,
        }
    }
}

/// Compiles a ground rule into a linear hinge over the latent variables.
///
/// Observed predicates fold into the constant; negated literals enter as
/// `1 - v`. The result satisfies `max{ℓ(Y), 0} = distance(rule)` for every
/// assignment of the latent variables.
pub fn compile_hinge(
    rule: &RuleGround,
    obs: &ObservationSet,
    var_index: &HashMap<GroundPredicate, u32>,
    weight: f64,
    exponent: Exponent,
) -> Result<LinearHinge, LogicError> {
    compile_hinge_guarded(rule, true, obs, var_index, weight, exponent)
}

/// Like [`compile_hinge`] but folding an explicit guard truth value, for the
/// naive grounder which also emits constraint rules whose observed ME/SUB
/// guard is false (those hinges are identically zero).
pub fn compile_hinge_guarded(
    rule: &RuleGround,
    guard: bool,
    obs: &ObservationSet,
    var_index: &HashMap<GroundPredicate, u32>,
    weight: f64,
    exponent: Exponent,
) -> Result<LinearHinge, LogicError> {
    let (bodies, heads) = rule.literals();
    let mut terms: Vec<(u32, f64)> = Vec::with_capacity(bodies.len() + heads.len());
    let mut constant = 1.0 - bodies.len() as f64;
    if !guard {
        // A false observed guard contributes 0 to the body sum but still
        // counts as a body literal.
        constant -= 1.0;
    }

    let mut add = |lit: &Literal, sign: f64| -> Result<(), LogicError> {
        let (coeff, offset) = if lit.negated {
            (-sign, sign)
        } else {
            (sign, 0.0)
        };
        constant += offset;
        if let Some(v) = obs.get(&lit.pred) {
            constant += coeff * v;
        } else if let Some(&idx) = var_index.get(&lit.pred) {
            match terms.iter_mut().find(|(i, _)| *i == idx) {
                Some(entry) => entry.1 += coeff,
                None => terms.push((idx, coeff)),
            }
        } else {
            return Err(LogicError::UnboundPredicate(lit.pred));
        }
        Ok(())
    };

    for lit in &bodies {
        add(lit, 1.0)?;
    }
    for lit in &heads {
        add(lit, -1.0)?;
    }
    terms.retain(|&(_, c)| c != 0.0);

    Ok(LinearHinge {
        terms,
        constant,
        weight,
        exponent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ClassifierId, DomainId, InstanceId};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn approx() -> GroundPredicate {
        GroundPredicate::approx(DomainId(0), ClassifierId(0), InstanceId(0))
    }

    fn err() -> GroundPredicate {
        GroundPredicate::error_rate(DomainId(0), ClassifierId(0))
    }

    fn target() -> GroundPredicate {
        GroundPredicate::target(DomainId(0), InstanceId(0))
    }

    fn other_target() -> GroundPredicate {
        GroundPredicate::target(DomainId(1), InstanceId(0))
    }

    fn rule(template: RuleTemplate) -> RuleGround {
        let tgt = match template {
            RuleTemplate::MutualExclusion | RuleTemplate::Subsumption => other_target(),
            _ => target(),
        };
        let error = match template {
            RuleTemplate::PriorPos | RuleTemplate::PriorNeg => None,
            _ => Some(err()),
        };
        RuleGround {
            template,
            approx: approx(),
            target: tgt,
            error,
        }
    }

    #[test]
    fn operators_agree_with_boolean_logic_on_corners() {
        for p in [0.0, 1.0] {
            for q in [0.0, 1.0] {
                let (bp, bq) = (p == 1.0, q == 1.0);
                assert_eq!(luk_and(p, q) == 1.0, bp && bq);
                assert_eq!(luk_or(p, q) == 1.0, bp || bq);
                assert_eq!(luk_implies(p, q) == 1.0, !bp || bq);
            }
            assert_eq!(luk_not(p) == 1.0, p == 0.0);
        }
        assert_eq!(luk_implies(1.0, 0.0), 0.0);
    }

    #[test]
    fn operator_values() {
        assert!((luk_and(0.7, 0.6) - 0.3).abs() < 1e-15);
        assert_eq!(luk_and(0.2, 0.3), 0.0);
        assert_eq!(luk_or(0.7, 0.6), 1.0);
        assert!((luk_or(0.2, 0.3) - 0.5).abs() < 1e-15);
        assert!((luk_implies(0.8, 0.3) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn de_morgan_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let p: f64 = rng.gen();
            let q: f64 = rng.gen();
            let lhs = luk_not(luk_and(p, q));
            let rhs = luk_or(luk_not(p), luk_not(q));
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn distance_examples() {
        assert_eq!(distance_to_satisfiability(&[1.0, 1.0], &[0.0]).unwrap(), 1.0);
        assert_eq!(distance_to_satisfiability(&[1.0], &[1.0]).unwrap(), 0.0);
        let d = distance_to_satisfiability(&[0.8, 0.9], &[0.4]).unwrap();
        assert!((d - 0.3).abs() < 1e-12);
        assert!(matches!(
            distance_to_satisfiability(&[], &[0.5]),
            Err(LogicError::EmptyBody)
        ));
    }

    #[test]
    fn distance_matches_operator_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..2000 {
            let s = rng.gen_range(1..=4);
            let t = rng.gen_range(1..=3);
            let bodies: Vec<f64> = (0..s).map(|_| rng.gen()).collect();
            let heads: Vec<f64> = (0..t).map(|_| rng.gen()).collect();
            let formula = distance_to_satisfiability(&bodies, &heads).unwrap();
            let body = bodies.iter().copied().reduce(luk_and).unwrap();
            let head = heads.iter().copied().reduce(luk_or).unwrap();
            let composed = luk_not(luk_implies(body, head));
            assert!(
                (formula - composed).abs() < 1e-12,
                "bodies {bodies:?} heads {heads:?}: {formula} vs {composed}"
            );
        }
    }

    #[test]
    fn distance_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..500 {
            let mut bodies = vec![rng.gen::<f64>(), rng.gen::<f64>()];
            let heads = vec![rng.gen::<f64>()];
            let base = distance_to_satisfiability(&bodies, &heads).unwrap();
            let bump = rng.gen::<f64>() * (1.0 - bodies[0]);
            bodies[0] += bump;
            assert!(distance_to_satisfiability(&bodies, &heads).unwrap() >= base - 1e-12);

            let bodies = vec![rng.gen::<f64>()];
            let mut heads = vec![rng.gen::<f64>(), rng.gen::<f64>()];
            let base = distance_to_satisfiability(&bodies, &heads).unwrap();
            let bump = rng.gen::<f64>() * (1.0 - heads[1]);
            heads[1] += bump;
            assert!(distance_to_satisfiability(&bodies, &heads).unwrap() <= base + 1e-12);
        }
    }

    /// Observed approx output and latent (error, target) indices for the
    /// compile tests: e -> 0, f -> 1, f' -> 2.
    fn setup(approx_value: f64) -> (ObservationSet, HashMap<GroundPredicate, u32>) {
        let mut obs = ObservationSet::new();
        obs.insert(approx(), approx_value);
        let mut idx = HashMap::new();
        idx.insert(err(), 0);
        idx.insert(target(), 1);
        idx.insert(other_target(), 2);
        (obs, idx)
    }

    #[test]
    fn compiled_hinges_match_canonical_forms() {
        use RuleTemplate::*;
        let fhat = 0.85;
        let (obs, idx) = setup(fhat);
        // (template, expected terms keyed by latent index, expected constant)
        type Case = (RuleTemplate, Vec<(u32, f64)>, f64);
        let cases: Vec<Case> = vec![
            (EnsemblePosCorrect, vec![(0, -1.0), (1, -1.0)], fhat),
            (EnsembleNegCorrect, vec![(0, -1.0), (1, 1.0)], -fhat),
            (EnsemblePosError, vec![(0, 1.0), (1, 1.0)], fhat - 2.0),
            (EnsembleNegError, vec![(0, 1.0), (1, -1.0)], -fhat),
            (PriorPos, vec![(1, -1.0)], fhat),
            (PriorNeg, vec![(1, 1.0)], -fhat),
            (MutualExclusion, vec![(0, -1.0), (2, 1.0)], fhat - 1.0),
            (Subsumption, vec![(0, -1.0), (2, 1.0)], -fhat),
        ];
        for (template, mut want_terms, want_constant) in cases {
            let hinge =
                compile_hinge(&rule(template), &obs, &idx, 1.0, Exponent::Linear).unwrap();
            let mut got = hinge.terms.clone();
            got.sort_by_key(|&(i, _)| i);
            want_terms.sort_by_key(|&(i, _)| i);
            assert_eq!(got, want_terms, "{template:?}");
            assert!(
                (hinge.constant - want_constant).abs() < 1e-15,
                "{template:?}: constant {} want {}",
                hinge.constant,
                want_constant
            );
        }
    }

    #[test]
    fn compilation_is_sound_for_all_templates() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for template in ALL_TEMPLATES {
            let r = rule(template);
            for _ in 0..1000 {
                let fhat: f64 = rng.gen();
                let (obs, idx) = setup(fhat);
                let hinge = compile_hinge(&r, &obs, &idx, 1.0, Exponent::Linear).unwrap();
                let latents = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
                let value = |p: GroundPredicate| {
                    obs.get(&p)
                        .unwrap_or_else(|| latents[idx[&p] as usize])
                };
                let compiled = hinge.linear_value(&latents).max(0.0);
                let reference = r.distance(value);
                assert!(
                    (compiled - reference).abs() < 1e-12,
                    "{template:?}: {compiled} vs {reference}"
                );
            }
        }
    }

    #[test]
    fn ensemble_pos_correct_violation_example() {
        // f̂ = 1 and (e, f) = (0, 0): rule maximally violated.
        let (obs, idx) = setup(1.0);
        let hinge = compile_hinge(
            &rule(RuleTemplate::EnsemblePosCorrect),
            &obs,
            &idx,
            1.0,
            Exponent::Linear,
        )
        .unwrap();
        let point = [0.0, 0.0, 0.0];
        assert!((hinge.linear_value(&point) - 1.0).abs() < 1e-15);
        assert!((hinge.potential(&point) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mutual_exclusion_violation_example() {
        // f̂ = 1, f' = 1, e = 0: both exclusive labels asserted, no error
        // admitted.
        let (obs, idx) = setup(1.0);
        let hinge = compile_hinge(
            &rule(RuleTemplate::MutualExclusion),
            &obs,
            &idx,
            1.0,
            Exponent::Linear,
        )
        .unwrap();
        let point = [0.0, 0.0, 1.0];
        assert!((hinge.linear_value(&point) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn prior_pos_with_zero_output_is_vacuous() {
        let (obs, idx) = setup(0.0);
        let hinge = compile_hinge(
            &rule(RuleTemplate::PriorPos),
            &obs,
            &idx,
            1.0,
            Exponent::Linear,
        )
        .unwrap();
        assert!(hinge.is_trivially_satisfied());
        for f in [0.0, 0.3, 1.0] {
            assert_eq!(hinge.potential(&[0.0, f, 0.0]), 0.0);
        }
    }

    #[test]
    fn unbound_predicate_is_an_error() {
        let obs = ObservationSet::new();
        let idx = HashMap::new();
        let result = compile_hinge(
            &rule(RuleTemplate::PriorPos),
            &obs,
            &idx,
            1.0,
            Exponent::Linear,
        );
        assert!(matches!(result, Err(LogicError::UnboundPredicate(_))));
    }

    #[test]
    fn trivially_satisfied_detection_is_correct() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..500 {
            let n = rng.gen_range(1..4);
            let hinge = LinearHinge {
                terms: (0..n)
                    .map(|i| (i as u32, rng.gen_range(-2.0..2.0)))
                    .collect(),
                constant: rng.gen_range(-3.0..1.0),
                weight: 1.0,
                exponent: Exponent::Linear,
            };
            if hinge.is_trivially_satisfied() {
                for _ in 0..100 {
                    let y: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
                    assert_eq!(hinge.potential(&y), 0.0);
                }
            } else {
                // The maximizing corner must witness a positive value.
                let corner: Vec<f64> = hinge
                    .terms
                    .iter()
                    .map(|&(_, c)| if c > 0.0 { 1.0 } else { 0.0 })
                    .collect();
                let mut full = vec![0.0; n];
                for (&(i, _), v) in hinge.terms.iter().zip(corner) {
                    full[i as usize] = v;
                }
                assert!(hinge.potential(&full) > 0.0);
            }
        }
    }

    #[test]
    fn false_guard_makes_constraint_hinges_vacuous() {
        let (obs, idx) = setup(1.0);
        for template in [RuleTemplate::MutualExclusion, RuleTemplate::Subsumption] {
            let hinge =
                compile_hinge_guarded(&rule(template), false, &obs, &idx, 1.0, Exponent::Linear)
                    .unwrap();
            assert!(hinge.is_trivially_satisfied(), "{template:?}");
        }
    }

    #[test]
    fn squared_exponent_squares_the_potential() {
        let (obs, idx) = setup(1.0);
        let hinge = compile_hinge(
            &rule(RuleTemplate::EnsemblePosCorrect),
            &obs,
            &idx,
            1.0,
            Exponent::Squared,
        )
        .unwrap();
        let point = [0.25, 0.25, 0.0];
        let ell = hinge.linear_value(&point);
        assert!((hinge.potential(&point) - ell * ell).abs() < 1e-15);
    }
}
