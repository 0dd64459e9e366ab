//! Ground-truth evaluation: empirical error rates, rank/value deviations of
//! the estimates, precision-recall area for the fused labels, the
//! majority-vote baseline, and a synthetic-data generator for closed-loop
//! validation.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ClassifierId, DomainId, GroundPredicate, InstanceId, ObservationSet, Ontology};

#[derive(Error, Debug)]
pub enum EvalError {
    #[error("vectors have different lengths: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error("empty classifier vectors")]
    Empty,
    #[error("could not sample labels satisfying the ontology after {0} attempts per instance")]
    UnsatisfiableOntology(u32),
    #[error("invalid generator spec: {0}")]
    BadSpec(String),
}

/// True binary labels per (domain, instance).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TruthSet {
    labels: BTreeMap<(DomainId, InstanceId), bool>,
}

impl TruthSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, domain: DomainId, instance: InstanceId, label: bool) {
        self.labels.insert((domain, instance), label);
    }

    pub fn get(&self, domain: DomainId, instance: InstanceId) -> Option<bool> {
        self.labels.get(&(domain, instance)).copied()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((DomainId, InstanceId), bool)> + '_ {
        self.labels.iter().map(|(&k, &v)| (k, v))
    }
}

impl FromIterator<((DomainId, InstanceId), bool)> for TruthSet {
    fn from_iter<T: IntoIterator<Item = ((DomainId, InstanceId), bool)>>(iter: T) -> Self {
        TruthSet {
            labels: iter.into_iter().collect(),
        }
    }
}

/// Sample error rate of one classifier against the true labels: the mean of
/// `f̂·1[f≠1] + (1−f̂)·1[f≠0]` over instances with both an observed output
/// and a truth label. For binary outputs this is the mismatch frequency;
/// for soft outputs it is the expected probability of error. `None` when no
/// instance has both.
pub fn empirical_error_rate(
    obs: &ObservationSet,
    truth: &TruthSet,
    domain: DomainId,
    classifier: ClassifierId,
) -> Option<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for (&pred, value) in obs.iter() {
        let GroundPredicate::ApproxOutput {
            domain: d,
            classifier: c,
            instance,
        } = pred
        else {
            continue;
        };
        if d != domain || c != classifier {
            continue;
        }
        if let Some(label) = truth.get(domain, instance) {
            total += if label { 1.0 - value } else { value };
            count += 1;
        }
    }
    (count > 0).then(|| total / count as f64)
}

/// Fractional (average) ranks of `values`, 1-based; ties share the mean of
/// the ranks they span. Tie grouping uses exact equality, with positional
/// order as the deterministic secondary sort key.
pub fn fractional_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap().then(a.cmp(&b)));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// ℓ1 distance between the fractional rank vectors of the estimated and
/// sample error rates.
pub fn mad_error_rank(estimated: &[f64], sample: &[f64]) -> Result<f64, EvalError> {
    check_lengths(estimated, sample)?;
    let a = fractional_ranks(estimated);
    let b = fractional_ranks(sample);
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum())
}

/// Mean absolute deviation between the estimated and sample error rates.
/// The raw ℓ1 sum is [`l1_error`].
pub fn mad_error(estimated: &[f64], sample: &[f64]) -> Result<f64, EvalError> {
    Ok(l1_error(estimated, sample)? / estimated.len() as f64)
}

/// ℓ1 distance between the estimate and sample error-rate vectors.
pub fn l1_error(estimated: &[f64], sample: &[f64]) -> Result<f64, EvalError> {
    check_lengths(estimated, sample)?;
    Ok(estimated
        .iter()
        .zip(sample)
        .map(|(x, y)| (x - y).abs())
        .sum())
}

fn check_lengths(a: &[f64], b: &[f64]) -> Result<(), EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::SizeMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(())
}

/// Area under the precision-recall curve as step-wise average precision:
/// instances are sorted by descending score (ties broken by instance id) and
/// the precision at each positive's rank is averaged over the positives.
/// `None` when there is no positive.
pub fn auc_pr(scored: &[(InstanceId, f64, bool)]) -> Option<f64> {
    let positives = scored.iter().filter(|(_, _, label)| *label).count();
    if positives == 0 {
        return None;
    }
    let mut order: Vec<&(InstanceId, f64, bool)> = scored.iter().collect();
    order.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &&(_, _, label)) in order.iter().enumerate() {
        if label {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Some(sum / positives as f64)
}

/// Majority vote over the observed outputs on (domain, instance): outputs
/// threshold at 0.5 into votes; returns 1 when positives have the majority,
/// 0 when negatives do, and 0.5 on an exact tie. `None` without responses.
pub fn majority_vote(
    obs: &ObservationSet,
    domain: DomainId,
    instance: InstanceId,
) -> Option<f64> {
    let mut positive = 0usize;
    let mut total = 0usize;
    for (&pred, value) in obs.iter() {
        let GroundPredicate::ApproxOutput {
            domain: d,
            instance: x,
            ..
        } = pred
        else {
            continue;
        };
        if d != domain || x != instance {
            continue;
        }
        total += 1;
        if value >= 0.5 {
            positive += 1;
        }
    }
    if total == 0 {
        return None;
    }
    Some(match (2 * positive).cmp(&total) {
        std::cmp::Ordering::Greater => 1.0,
        std::cmp::Ordering::Equal => 0.5,
        std::cmp::Ordering::Less => 0.0,
    })
}

/// Per-domain metrics plus their unweighted average over domains.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct DomainMetrics {
    /// Classifiers with both an estimate and a sample error rate.
    pub classifiers: usize,
    pub mad_error_rank: Option<f64>,
    pub mad_error: Option<f64>,
    pub error_l1: Option<f64>,
    pub auc_target: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_domain: BTreeMap<u32, DomainMetrics>,
    pub mean_mad_error_rank: Option<f64>,
    pub mean_mad_error: Option<f64>,
    pub mean_auc_target: Option<f64>,
    /// |evaluated keys| / |union of estimate and truth keys| over (domain,
    /// instance) pairs.
    pub coverage: f64,
}

/// Computes the evaluation metrics of estimated error rates and fused soft
/// labels against ground truth, domain by domain, then averages over
/// domains without weighting. Key mismatches between the estimates and the
/// truth only shrink the evaluated intersection, reported as `coverage`.
pub fn compute_metrics(
    error_rates: &BTreeMap<(DomainId, ClassifierId), f64>,
    target_soft: &BTreeMap<(DomainId, InstanceId), f64>,
    obs: &ObservationSet,
    truth: &TruthSet,
) -> MetricsReport {
    let mut domains: Vec<DomainId> = error_rates.keys().map(|&(d, _)| d).collect();
    domains.extend(target_soft.keys().map(|&(d, _)| d));
    domains.sort_unstable();
    domains.dedup();

    let mut report = MetricsReport::default();
    let mut matched = 0usize;
    let mut union = truth.len();
    for &(domain, instance) in target_soft.keys() {
        if truth.get(domain, instance).is_some() {
            matched += 1;
        } else {
            union += 1;
        }
    }
    report.coverage = if union == 0 {
        0.0
    } else {
        matched as f64 / union as f64
    };

    for &domain in &domains {
        let mut estimated = Vec::new();
        let mut sample = Vec::new();
        for (&(d, classifier), &est) in error_rates {
            if d != domain {
                continue;
            }
            if let Some(emp) = empirical_error_rate(obs, truth, domain, classifier) {
                estimated.push(est);
                sample.push(emp);
            }
        }
        let scored: Vec<(InstanceId, f64, bool)> = target_soft
            .iter()
            .filter(|&(&(d, _), _)| d == domain)
            .filter_map(|(&(_, instance), &score)| {
                truth.get(domain, instance).map(|label| (instance, score, label))
            })
            .collect();
        let metrics = DomainMetrics {
            classifiers: estimated.len(),
            mad_error_rank: mad_error_rank(&estimated, &sample).ok(),
            mad_error: mad_error(&estimated, &sample).ok(),
            error_l1: l1_error(&estimated, &sample).ok(),
            auc_target: auc_pr(&scored),
        };
        report.per_domain.insert(domain.0, metrics);
    }

    let mean = |pick: fn(&DomainMetrics) -> Option<f64>| {
        let values: Vec<f64> = report.per_domain.values().filter_map(pick).collect();
        (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
    };
    report.mean_mad_error_rank = mean(|m| m.mad_error_rank);
    report.mean_mad_error = mean(|m| m.mad_error);
    report.mean_auc_target = mean(|m| m.auc_target);
    report
}

/// Synthetic benchmark spec: `error_rates` is indexed by
/// `domain * classifiers + classifier`.
#[derive(Clone, Debug)]
pub struct SynthSpec {
    pub domains: u32,
    pub classifiers: u32,
    pub instances: u32,
    pub error_rates: Vec<f64>,
    /// Soft outputs in [0, 1] instead of binary flips.
    pub soft: bool,
    /// Probability of keeping each (domain, classifier, instance) output.
    pub density: f64,
    /// Marginal probability of a positive label in the rejection sampler.
    pub positive_rate: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn uniform_rates(
        domains: u32,
        classifiers: u32,
        instances: u32,
        rate_range: (f64, f64),
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let error_rates = (0..domains * classifiers)
            .map(|_| rng.gen_range(rate_range.0..=rate_range.1))
            .collect();
        SynthSpec {
            domains,
            classifiers,
            instances,
            error_rates,
            soft: false,
            density: 1.0,
            positive_rate: 0.5,
            seed,
        }
    }

    fn rate(&self, domain: u32, classifier: u32) -> f64 {
        self.error_rates[(domain * self.classifiers + classifier) as usize]
    }
}

const MAX_SAMPLING_ATTEMPTS: u32 = 10_000;

/// Generates a benchmark: truth labels are rejection-sampled per instance to
/// satisfy every ME/SUB constraint, then classifier `j` in domain `d` emits
/// the true label flipped independently with probability `e[d][j]` (binary
/// mode) or a uniform value on the correct side of 0.5 with probability
/// `1 - e[d][j]` (soft mode), each retained with probability `density`.
pub fn synth_generate(
    spec: &SynthSpec,
    ontology: &Ontology,
) -> Result<(ObservationSet, TruthSet), EvalError> {
    if ontology.domain_count() != spec.domains {
        return Err(EvalError::BadSpec(format!(
            "ontology covers {} domains, spec has {}",
            ontology.domain_count(),
            spec.domains
        )));
    }
    if spec.error_rates.len() != (spec.domains * spec.classifiers) as usize {
        return Err(EvalError::BadSpec(format!(
            "need {} error rates, got {}",
            spec.domains * spec.classifiers,
            spec.error_rates.len()
        )));
    }
    for &e in &spec.error_rates {
        if !(0.0..=1.0).contains(&e) {
            return Err(EvalError::BadSpec(format!("error rate {e} out of [0, 1]")));
        }
    }
    for (name, v) in [("density", spec.density), ("positive_rate", spec.positive_rate)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(EvalError::BadSpec(format!("{name} {v} out of [0, 1]")));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut obs = ObservationSet::new();
    let mut truth = TruthSet::new();
    let mut labels = vec![false; spec.domains as usize];
    for instance in 0..spec.instances {
        sample_consistent_labels(&mut rng, spec.positive_rate, ontology, &mut labels)?;
        for (d, &label) in labels.iter().enumerate() {
            truth.insert(DomainId(d as u32), InstanceId(instance), label);
        }
        for d in 0..spec.domains {
            let label = labels[d as usize];
            for j in 0..spec.classifiers {
                if spec.density < 1.0 && !rng.gen_bool(spec.density) {
                    continue;
                }
                let e = spec.rate(d, j);
                let correct = !rng.gen_bool(e);
                let output = if spec.soft {
                    let u: f64 = rng.gen();
                    // Uniform on the output's side of 0.5; `correct` keeps
                    // the side matching the true label.
                    if label == correct {
                        0.5 + 0.5 * u
                    } else {
                        0.5 * u
                    }
                } else if label == correct {
                    1.0
                } else {
                    0.0
                };
                obs.insert_approx(DomainId(d), ClassifierId(j), InstanceId(instance), output);
            }
        }
    }
    Ok((obs, truth))
}

fn sample_consistent_labels(
    rng: &mut ChaCha8Rng,
    positive_rate: f64,
    ontology: &Ontology,
    labels: &mut [bool],
) -> Result<(), EvalError> {
    for _ in 0..MAX_SAMPLING_ATTEMPTS {
        for label in labels.iter_mut() {
            *label = rng.gen_bool(positive_rate);
        }
        if labels_consistent(ontology, labels) {
            return Ok(());
        }
    }
    Err(EvalError::UnsatisfiableOntology(MAX_SAMPLING_ATTEMPTS))
}

/// True when `labels` violates no ME or SUB constraint.
pub fn labels_consistent(ontology: &Ontology, labels: &[bool]) -> bool {
    for (a, b) in ontology.me_pairs() {
        if labels[a.0 as usize] && labels[b.0 as usize] {
            return false;
        }
    }
    for (parent, child) in ontology.sub_pairs() {
        if labels[child.0 as usize] && !labels[parent.0 as usize] {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(i: u32) -> DomainId {
        DomainId(i)
    }

    fn c(i: u32) -> ClassifierId {
        ClassifierId(i)
    }

    fn x(i: u32) -> InstanceId {
        InstanceId(i)
    }

    #[test]
    fn empirical_rate_on_binary_outputs_is_mismatch_frequency() {
        let mut obs = ObservationSet::new();
        let mut truth = TruthSet::new();
        for inst in 0..10 {
            let label = inst % 2 == 0;
            truth.insert(d(0), x(inst), label);
            let wrong = inst < 3;
            let value = if label != wrong { 1.0 } else { 0.0 };
            obs.insert_approx(d(0), c(0), x(inst), value);
        }
        let rate = empirical_error_rate(&obs, &truth, d(0), c(0)).unwrap();
        assert!((rate - 0.3).abs() < 1e-12);
    }

    #[test]
    fn empirical_rate_handles_soft_outputs_and_missing_support() {
        let mut obs = ObservationSet::new();
        let mut truth = TruthSet::new();
        obs.insert_approx(d(0), c(0), x(0), 0.7);
        truth.insert(d(0), x(0), true);
        let rate = empirical_error_rate(&obs, &truth, d(0), c(0)).unwrap();
        assert!((rate - 0.3).abs() < 1e-12);

        assert!(empirical_error_rate(&obs, &truth, d(0), c(1)).is_none());
        let empty = TruthSet::new();
        assert!(empirical_error_rate(&obs, &empty, d(0), c(0)).is_none());
    }

    #[test]
    fn perfect_classifier_has_zero_empirical_rate() {
        let mut obs = ObservationSet::new();
        let mut truth = TruthSet::new();
        for inst in 0..6 {
            let label = inst % 3 == 0;
            truth.insert(d(0), x(inst), label);
            obs.insert_approx(d(0), c(0), x(inst), if label { 1.0 } else { 0.0 });
        }
        assert_eq!(empirical_error_rate(&obs, &truth, d(0), c(0)), Some(0.0));
    }

    #[test]
    fn rank_mad_examples() {
        assert_eq!(
            mad_error_rank(&[0.1, 0.2, 0.3], &[0.15, 0.25, 0.35]).unwrap(),
            0.0
        );
        assert_eq!(mad_error_rank(&[0.1, 0.2], &[0.2, 0.1]).unwrap(), 2.0);
        // Tied pair gets fractional rank 1.5 each.
        let v = mad_error_rank(&[0.1, 0.1, 0.3], &[0.2, 0.1, 0.3]).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        assert!(mad_error_rank(&[0.1], &[0.1, 0.2]).is_err());
    }

    #[test]
    fn rank_mad_ignores_constant_shifts() {
        let est = [0.1, 0.4, 0.2, 0.9];
        let sample = [0.3, 0.5, 0.35, 0.7];
        let base = mad_error_rank(&est, &sample).unwrap();
        let shifted: Vec<f64> = est.iter().map(|v| v + 0.05).collect();
        let shifted_sample: Vec<f64> = sample.iter().map(|v| v + 0.05).collect();
        assert_eq!(base, mad_error_rank(&shifted, &shifted_sample).unwrap());
    }

    #[test]
    fn value_mad_examples() {
        assert_eq!(mad_error(&[0.3, 0.4], &[0.3, 0.4]).unwrap(), 0.0);
        assert!((mad_error(&[0.2], &[0.5]).unwrap() - 0.3).abs() < 1e-12);
        let v = mad_error(&[0.1, 0.4], &[0.2, 0.2]).unwrap();
        assert!((v - 0.15).abs() < 1e-12);
        let l1 = l1_error(&[0.1, 0.4], &[0.2, 0.2]).unwrap();
        assert!((l1 - 0.3).abs() < 1e-12);
    }

    #[test]
    fn average_precision_examples() {
        // Perfect separation.
        let scored = vec![
            (x(0), 0.9, true),
            (x(1), 0.8, true),
            (x(2), 0.2, false),
            (x(3), 0.1, false),
        ];
        assert_eq!(auc_pr(&scored), Some(1.0));

        // All scores equal; the tie-break by id puts the negative first.
        let scored = vec![(x(0), 0.5, false), (x(1), 0.5, true)];
        assert_eq!(auc_pr(&scored), Some(0.5));

        // Single positive ranked last among four.
        let scored = vec![
            (x(0), 0.9, false),
            (x(1), 0.8, false),
            (x(2), 0.7, false),
            (x(3), 0.1, true),
        ];
        assert_eq!(auc_pr(&scored), Some(0.25));

        // No positives.
        let scored = vec![(x(0), 0.9, false)];
        assert_eq!(auc_pr(&scored), None);
    }

    #[test]
    fn average_precision_is_invariant_under_monotone_transforms() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let scored: Vec<(InstanceId, f64, bool)> = (0..20)
                .map(|i| (x(i), rng.gen::<f64>(), rng.gen_bool(0.4)))
                .collect();
            let transformed: Vec<(InstanceId, f64, bool)> = scored
                .iter()
                .map(|&(i, s, l)| (i, s * s * 0.5 + 0.1, l))
                .collect();
            assert_eq!(auc_pr(&scored), auc_pr(&transformed));
        }
    }

    #[test]
    fn majority_vote_examples() {
        let mut obs = ObservationSet::new();
        obs.insert_approx(d(0), c(0), x(0), 1.0);
        obs.insert_approx(d(0), c(1), x(0), 1.0);
        obs.insert_approx(d(0), c(2), x(0), 0.0);
        assert_eq!(majority_vote(&obs, d(0), x(0)), Some(1.0));

        let mut obs = ObservationSet::new();
        obs.insert_approx(d(0), c(0), x(0), 1.0);
        obs.insert_approx(d(0), c(1), x(0), 0.0);
        assert_eq!(majority_vote(&obs, d(0), x(0)), Some(0.5));

        // Soft outputs threshold at 0.5 before counting.
        let mut obs = ObservationSet::new();
        obs.insert_approx(d(0), c(0), x(0), 0.6);
        obs.insert_approx(d(0), c(1), x(0), 0.4);
        obs.insert_approx(d(0), c(2), x(0), 0.1);
        assert_eq!(majority_vote(&obs, d(0), x(0)), Some(0.0));

        assert_eq!(majority_vote(&obs, d(0), x(9)), None);
    }

    #[test]
    fn zero_error_generator_reproduces_truth() {
        let spec = SynthSpec {
            domains: 2,
            classifiers: 2,
            instances: 50,
            error_rates: vec![0.0; 4],
            soft: false,
            density: 1.0,
            positive_rate: 0.5,
            seed: 7,
        };
        let ont = Ontology::unconstrained(2);
        let (obs, truth) = synth_generate(&spec, &ont).unwrap();
        for (&pred, value) in obs.iter() {
            let GroundPredicate::ApproxOutput {
                domain, instance, ..
            } = pred
            else {
                continue;
            };
            let label = truth.get(domain, instance).unwrap();
            assert_eq!(value, if label { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn unit_error_generator_flips_everything() {
        let spec = SynthSpec {
            domains: 1,
            classifiers: 1,
            instances: 50,
            error_rates: vec![1.0],
            soft: false,
            density: 1.0,
            positive_rate: 0.5,
            seed: 9,
        };
        let (obs, truth) = synth_generate(&spec, &Ontology::unconstrained(1)).unwrap();
        for (&pred, value) in obs.iter() {
            let GroundPredicate::ApproxOutput {
                domain, instance, ..
            } = pred
            else {
                continue;
            };
            let label = truth.get(domain, instance).unwrap();
            assert_eq!(value, if label { 0.0 } else { 1.0 });
        }
    }

    #[test]
    fn generated_rates_concentrate_near_the_spec() {
        let spec = SynthSpec {
            domains: 1,
            classifiers: 1,
            instances: 10_000,
            error_rates: vec![0.2],
            soft: false,
            density: 1.0,
            positive_rate: 0.5,
            seed: 11,
        };
        let (obs, truth) = synth_generate(&spec, &Ontology::unconstrained(1)).unwrap();
        let rate = empirical_error_rate(&obs, &truth, d(0), c(0)).unwrap();
        assert!((rate - 0.2).abs() < 0.02, "rate {rate}");
    }

    #[test]
    fn soft_mode_keeps_the_wrong_side_rate_near_the_spec() {
        let spec = SynthSpec {
            domains: 1,
            classifiers: 1,
            instances: 10_000,
            error_rates: vec![0.3],
            soft: true,
            density: 1.0,
            positive_rate: 0.5,
            seed: 13,
        };
        let (obs, truth) = synth_generate(&spec, &Ontology::unconstrained(1)).unwrap();
        let mut wrong = 0usize;
        let mut total = 0usize;
        for (&pred, value) in obs.iter() {
            let GroundPredicate::ApproxOutput {
                domain, instance, ..
            } = pred
            else {
                continue;
            };
            assert!((0.0..=1.0).contains(&value));
            let label = truth.get(domain, instance).unwrap();
            total += 1;
            if (value >= 0.5) != label {
                wrong += 1;
            }
        }
        let rate = wrong as f64 / total as f64;
        assert!((rate - 0.3).abs() < 0.02, "wrong-side rate {rate}");
    }

    #[test]
    fn generated_truth_satisfies_the_ontology() {
        let ont = Ontology::build(
            4,
            &[vec![d(1), d(2), d(3)]],
            &[(d(0), d(1)), (d(0), d(2))],
        )
        .unwrap();
        let spec = SynthSpec {
            domains: 4,
            classifiers: 2,
            instances: 300,
            error_rates: vec![0.2; 8],
            soft: false,
            density: 0.8,
            positive_rate: 0.5,
            seed: 17,
        };
        let (_, truth) = synth_generate(&spec, &ont).unwrap();
        for inst in 0..300 {
            let labels: Vec<bool> = (0..4)
                .map(|dm| truth.get(d(dm), x(inst)).unwrap())
                .collect();
            assert!(labels_consistent(&ont, &labels), "instance {inst}: {labels:?}");
        }
    }

    #[test]
    fn impossible_specs_fail_with_a_generation_error() {
        // Forcing every label positive contradicts any ME pair.
        let ont = Ontology::build(2, &[vec![d(0), d(1)]], &[]).unwrap();
        let spec = SynthSpec {
            domains: 2,
            classifiers: 1,
            instances: 1,
            error_rates: vec![0.1; 2],
            soft: false,
            density: 1.0,
            positive_rate: 1.0,
            seed: 19,
        };
        assert!(matches!(
            synth_generate(&spec, &ont),
            Err(EvalError::UnsatisfiableOntology(_))
        ));
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let spec = SynthSpec {
            domains: 2,
            classifiers: 2,
            instances: 40,
            error_rates: vec![0.1, 0.2, 0.3, 0.4],
            soft: true,
            density: 0.7,
            positive_rate: 0.4,
            seed: 23,
        };
        let ont = Ontology::build(2, &[vec![d(0), d(1)]], &[]).unwrap();
        let a = synth_generate(&spec, &ont).unwrap();
        let b = synth_generate(&spec, &ont).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn metrics_report_covers_the_intersection() {
        let mut obs = ObservationSet::new();
        let mut truth = TruthSet::new();
        let mut error_rates = BTreeMap::new();
        let mut target_soft = BTreeMap::new();
        for inst in 0..8 {
            let label = inst % 2 == 0;
            truth.insert(d(0), x(inst), label);
            obs.insert_approx(d(0), c(0), x(inst), if label { 1.0 } else { 0.0 });
            target_soft.insert((d(0), x(inst)), if label { 0.9 } else { 0.1 });
        }
        error_rates.insert((d(0), c(0)), 0.0);
        let report = compute_metrics(&error_rates, &target_soft, &obs, &truth);
        assert_eq!(report.coverage, 1.0);
        let dm = &report.per_domain[&0];
        assert_eq!(dm.classifiers, 1);
        assert_eq!(dm.mad_error, Some(0.0));
        assert_eq!(dm.auc_target, Some(1.0));
        assert_eq!(report.mean_auc_target, Some(1.0));

        // Disjoint keys: nothing evaluable.
        let mut other_truth = TruthSet::new();
        other_truth.insert(d(0), x(100), true);
        let report = compute_metrics(&error_rates, &target_soft, &obs, &other_truth);
        assert_eq!(report.coverage, 0.0);
        assert!(report.mean_mad_error.is_none());
        assert!(report.mean_auc_target.is_none());
    }
}
