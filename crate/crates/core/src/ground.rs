//! Grounding: turns observations plus an ontology into the concrete set of
//! latent variables and weighted hinge potentials that define the inference
//! problem.
//!
//! [`ground`] emits only the ground rules that can influence the optimum: a
//! ground rule is useful only if the classifier-output predicate in its body
//! is observed. [`naive_ground`] is the full Cartesian expansion over the
//! input universe, kept as a test oracle for equivalence checks.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use thiserror::Error;

use crate::logic::{
    compile_hinge_guarded, LinearHinge, LogicError, RuleGround, RuleTemplate, RuleWeights,
};
use crate::model::{ClassifierId, DomainId, GroundPredicate, InstanceId, ObservationSet, Ontology};

#[derive(Error, Debug)]
pub enum GroundError {
    #[error("naive grounding would exceed the {cap} ground-rule cap")]
    CapExceeded { cap: usize },
    #[error("observation references domain {0} outside the ontology's {1} domains")]
    DomainOutOfRange(DomainId, u32),
    #[error(transparent)]
    Logic(#[from] LogicError),
}

/// Default ground-rule cap for the naive grounder.
pub const DEFAULT_NAIVE_CAP: usize = 1_000_000;

/// The compiled inference problem: `m` latent variables in [0, 1], `n`
/// observed values already folded into the hinge constants, and `k` weighted
/// hinge potentials.
#[derive(Clone, Debug, Default)]
pub struct GroundProblem {
    latents: Vec<GroundPredicate>,
    latent_index: HashMap<GroundPredicate, u32>,
    observed: BTreeMap<GroundPredicate, f64>,
    hinges: Vec<LinearHinge>,
    rules: Vec<RuleGround>,
}

impl GroundProblem {
    pub fn m(&self) -> usize {
        self.latents.len()
    }

    pub fn n(&self) -> usize {
        self.observed.len()
    }

    pub fn k(&self) -> usize {
        self.hinges.len()
    }

    pub fn latents(&self) -> &[GroundPredicate] {
        &self.latents
    }

    pub fn latent(&self, idx: u32) -> GroundPredicate {
        self.latents[idx as usize]
    }

    pub fn latent_index(&self, pred: &GroundPredicate) -> Option<u32> {
        self.latent_index.get(pred).copied()
    }

    pub fn observed(&self) -> &BTreeMap<GroundPredicate, f64> {
        &self.observed
    }

    pub fn hinges(&self) -> &[LinearHinge] {
        &self.hinges
    }

    /// Ground rules aligned with [`Self::hinges`].
    pub fn rules(&self) -> &[RuleGround] {
        &self.rules
    }

    /// Weighted objective `Σ λ_j (max{ℓ_j(Y), 0})^{p_j}` at assignment `y`.
    pub fn objective(&self, y: &[f64]) -> f64 {
        self.hinges
            .iter()
            .map(|h| h.weight * h.potential(y))
            .sum()
    }

    /// Bare problem over `m` anonymous latent variables, for solver tests
    /// and benchmarks. The latent predicates are synthetic target outputs
    /// and no rule list is attached.
    pub fn from_hinges(m: usize, hinges: Vec<LinearHinge>) -> GroundProblem {
        let latents: Vec<GroundPredicate> = (0..m as u32)
            .map(|i| GroundPredicate::target(DomainId(0), InstanceId(i)))
            .collect();
        let latent_index = latents
            .iter()
            .enumerate()
            .map(|(i, &p)| (p, i as u32))
            .collect();
        GroundProblem {
            latents,
            latent_index,
            observed: BTreeMap::new(),
            hinges,
            rules: Vec::new(),
        }
    }

    /// Structural invariant check used by tests: indices in range, no
    /// duplicate latents or rules, and every latent target or error-rate
    /// variable constrained by at least one hinge.
    pub fn check_invariants(&self) -> Result<(), String> {
        let m = self.m() as u32;
        let mut touched = vec![false; self.m()];
        for hinge in &self.hinges {
            let mut seen = BTreeSet::new();
            for &(idx, _) in &hinge.terms {
                if idx >= m {
                    return Err(format!("hinge references latent {idx} >= m = {m}"));
                }
                if !seen.insert(idx) {
                    return Err(format!("hinge repeats latent {idx}"));
                }
                touched[idx as usize] = true;
            }
        }
        if self.latent_index.len() != self.latents.len() {
            return Err("latent index and latent list disagree".into());
        }
        for (i, pred) in self.latents.iter().enumerate() {
            if self.latent_index.get(pred) != Some(&(i as u32)) {
                return Err(format!("latent {pred:?} misindexed"));
            }
            let constrained = touched[i];
            if !constrained
                && matches!(
                    pred,
                    GroundPredicate::TargetOutput { .. } | GroundPredicate::ErrorRate { .. }
                )
            {
                return Err(format!("latent {pred:?} appears in no hinge"));
            }
        }
        let unique: HashSet<&RuleGround> = self.rules.iter().collect();
        if unique.len() != self.rules.len() {
            return Err("duplicate ground rules".into());
        }
        Ok(())
    }
}

/// Working state shared by both grounders.
struct Builder<'a> {
    obs: &'a ObservationSet,
    weights: &'a RuleWeights,
    problem: GroundProblem,
    seen_rules: HashSet<RuleGround>,
}

impl<'a> Builder<'a> {
    fn new(obs: &'a ObservationSet, weights: &'a RuleWeights) -> Self {
        Builder {
            obs,
            weights,
            problem: GroundProblem::default(),
            seen_rules: HashSet::new(),
        }
    }

    /// Registers `pred` as a problem variable: observed predicates go to X
    /// (target observations are clamped), everything else gets a latent
    /// index on first touch.
    fn ensure(&mut self, pred: GroundPredicate) {
        if let Some(v) = self.obs.get(&pred) {
            self.problem.observed.insert(pred, v);
            return;
        }
        let next = self.problem.latents.len() as u32;
        self.problem.latent_index.entry(pred).or_insert_with(|| {
            self.problem.latents.push(pred);
            next
        });
    }

    fn add_rule(&mut self, rule: RuleGround, guard: bool) -> Result<(), LogicError> {
        if !self.seen_rules.insert(rule) {
            return Ok(());
        }
        let hinge = compile_hinge_guarded(
            &rule,
            guard,
            self.obs,
            &self.problem.latent_index,
            self.weights.weight_for(rule.template),
            self.weights.exponent,
        )?;
        self.problem.hinges.push(hinge);
        self.problem.rules.push(rule);
        Ok(())
    }

    /// The four ensemble rules tying one classifier output to its error rate
    /// and target, plus (for observed outputs) the two prior-belief rules.
    fn add_output_rules(
        &mut self,
        approx: GroundPredicate,
        error: GroundPredicate,
        target: GroundPredicate,
        with_priors: bool,
    ) -> Result<(), LogicError> {
        use RuleTemplate::*;
        for template in [
            EnsemblePosCorrect,
            EnsembleNegCorrect,
            EnsemblePosError,
            EnsembleNegError,
        ] {
            self.add_rule(
                RuleGround {
                    template,
                    approx,
                    target,
                    error: Some(error),
                },
                true,
            )?;
        }
        if with_priors {
            for template in [PriorPos, PriorNeg] {
                self.add_rule(
                    RuleGround {
                        template,
                        approx,
                        target,
                        error: None,
                    },
                    true,
                )?;
            }
        }
        Ok(())
    }
}

/// Heuristic grounding: one pass over the observed classifier outputs,
/// emitting exactly the ground predicates and rules those outputs can
/// influence. Deterministic: observations are visited in sorted order
/// (grouped by instance) and latent indices are assigned on first touch.
pub fn ground(obs: &ObservationSet, ontology: &Ontology, weights: &RuleWeights) -> GroundProblem {
    let mut b = Builder::new(obs, weights);
    for (&pred, _value) in obs.iter() {
        let GroundPredicate::ApproxOutput {
            domain,
            classifier,
            instance,
        } = pred
        else {
            continue;
        };
        let error = GroundPredicate::error_rate(domain, classifier);
        let target = GroundPredicate::target(domain, instance);
        b.ensure(pred);
        b.ensure(error);
        b.ensure(target);
        b.add_output_rules(pred, error, target, true)
            .expect("all predicates were just registered");
        for &partner in ontology.me_partners(domain) {
            let other = GroundPredicate::target(partner, instance);
            b.ensure(other);
            b.add_rule(
                RuleGround {
                    template: RuleTemplate::MutualExclusion,
                    approx: pred,
                    target: other,
                    error: Some(error),
                },
                true,
            )
            .expect("all predicates were just registered");
        }
        for &child in ontology.sub_children(domain) {
            let other = GroundPredicate::target(child, instance);
            b.ensure(other);
            b.add_rule(
                RuleGround {
                    template: RuleTemplate::Subsumption,
                    approx: pred,
                    target: other,
                    error: Some(error),
                },
                true,
            )
            .expect("all predicates were just registered");
        }
    }
    b.problem
}

/// Full Cartesian grounding over the input universe, as a test oracle for
/// [`ground`]: ensemble rules are generated for every (domain, classifier,
/// instance) combination present in the data — unobserved classifier
/// outputs become latent variables — and constraint rules for every ordered
/// domain pair per output, with the observed ME/SUB guard value folded in
/// (a false guard makes the hinge identically zero).
///
/// Output predicates exist only where a classifier actually responded, so
/// prior and constraint rules — whose groundings are anchored on an output
/// value — attach to observed outputs only. Ensemble rules over latent
/// outputs are emitted even though a free output variable can always absorb
/// their slack; verifying that the heuristic grounder may drop them is the
/// point of this oracle.
///
/// Guards against exceeding `cap` ground rules rather than trying to scale.
pub fn naive_ground(
    obs: &ObservationSet,
    ontology: &Ontology,
    weights: &RuleWeights,
    cap: usize,
) -> Result<GroundProblem, GroundError> {
    let domain_count = ontology.domain_count();
    let mut classifiers: BTreeSet<ClassifierId> = BTreeSet::new();
    let mut instances: BTreeSet<InstanceId> = BTreeSet::new();
    let mut observed_outputs = 0usize;
    for (&pred, _) in obs.iter() {
        match pred {
            GroundPredicate::ApproxOutput {
                domain,
                classifier,
                instance,
            } => {
                if domain.0 >= domain_count {
                    return Err(GroundError::DomainOutOfRange(domain, domain_count));
                }
                classifiers.insert(classifier);
                instances.insert(instance);
                observed_outputs += 1;
            }
            GroundPredicate::TargetOutput { domain, instance } => {
                if domain.0 >= domain_count {
                    return Err(GroundError::DomainOutOfRange(domain, domain_count));
                }
                instances.insert(instance);
            }
            GroundPredicate::ErrorRate { .. } => {}
        }
    }

    let pair_rules = 2 * domain_count.saturating_sub(1) as usize;
    let upper = instances.len() * domain_count as usize * classifiers.len() * 4
        + observed_outputs * (2 + pair_rules);
    if upper > cap {
        return Err(GroundError::CapExceeded { cap });
    }

    let mut b = Builder::new(obs, weights);
    for &instance in &instances {
        for d in 0..domain_count {
            let domain = DomainId(d);
            for &classifier in &classifiers {
                let approx = GroundPredicate::approx(domain, classifier, instance);
                let error = GroundPredicate::error_rate(domain, classifier);
                let target = GroundPredicate::target(domain, instance);
                b.ensure(approx);
                b.ensure(error);
                b.ensure(target);
                let observed = obs.contains(&approx);
                b.add_output_rules(approx, error, target, observed)?;
                if !observed {
                    continue;
                }
                for d2 in 0..domain_count {
                    if d2 == d {
                        continue;
                    }
                    let partner = DomainId(d2);
                    let other = GroundPredicate::target(partner, instance);
                    b.ensure(other);
                    b.add_rule(
                        RuleGround {
                            template: RuleTemplate::MutualExclusion,
                            approx,
                            target: other,
                            error: Some(error),
                        },
                        ontology.is_me(domain, partner),
                    )?;
                    b.add_rule(
                        RuleGround {
                            template: RuleTemplate::Subsumption,
                            approx,
                            target: other,
                            error: Some(error),
                        },
                        ontology.is_sub(domain, partner),
                    )?;
                }
            }
        }
    }
    Ok(b.problem)
}
