//! Cross-checks the solver and the heuristic grounder against independent
//! oracles: brute-force grid search and an exact LP minimizer.

use lee_core::ground::{ground, naive_ground, DEFAULT_NAIVE_CAP};
use lee_core::logic::RuleWeights;
use lee_core::model::{ClassifierId, DomainId, InstanceId, ObservationSet, Ontology};
use lee_core::solver::{solve, SolverSettings};
use lee_testkit::{grid_minimum, lp_minimum, random_problem, random_problem_with};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn d(i: u32) -> DomainId {
    DomainId(i)
}

fn c(i: u32) -> ClassifierId {
    ClassifierId(i)
}

fn x(i: u32) -> InstanceId {
    InstanceId(i)
}

fn random_ontology(rng: &mut ChaCha8Rng, domains: u32) -> Ontology {
    let mut me_sets = Vec::new();
    let mut sub_pairs = Vec::new();
    if domains >= 2 {
        if rng.gen_bool(0.7) {
            let size = rng.gen_range(2..=domains);
            let mut members: Vec<DomainId> = (0..domains).map(DomainId).collect();
            for i in (1..members.len()).rev() {
                members.swap(i, rng.gen_range(0..=i));
            }
            members.truncate(size as usize);
            me_sets.push(members);
        }
        if rng.gen_bool(0.5) {
            let parent = rng.gen_range(0..domains);
            let mut child = rng.gen_range(0..domains);
            if child == parent {
                child = (child + 1) % domains;
            }
            sub_pairs.push((DomainId(parent), DomainId(child)));
        }
    }
    Ontology::build(domains, &me_sets, &sub_pairs).unwrap()
}

fn random_instance(
    rng: &mut ChaCha8Rng,
    max_domains: u32,
    max_classifiers: u32,
    max_instances: u32,
    clamp_labels: bool,
) -> (ObservationSet, Ontology) {
    let domains = rng.gen_range(1..=max_domains);
    let classifiers = rng.gen_range(1..=max_classifiers);
    let instances = rng.gen_range(2..=max_instances);
    let density = rng.gen_range(0.3..0.9);
    let ontology = random_ontology(rng, domains);
    let mut obs = ObservationSet::new();
    for dm in 0..domains {
        for cl in 0..classifiers {
            for inst in 0..instances {
                if rng.gen_bool(density) {
                    obs.insert_approx(d(dm), c(cl), x(inst), rng.gen());
                }
            }
        }
    }
    if clamp_labels {
        for inst in 0..instances {
            if rng.gen_bool(0.2) {
                let dm = rng.gen_range(0..domains);
                obs.insert_target(d(dm), x(inst), if rng.gen_bool(0.5) { 1.0 } else { 0.0 });
            }
        }
    }
    (obs, ontology)
}

/// Tolerances tight enough that the solver's own gap is negligible next to
/// the grid oracle's discretization error.
fn tight(seed: u64) -> SolverSettings {
    SolverSettings {
        seed,
        eps_abs: 1e-8,
        eps_rel: 1e-6,
        ..SolverSettings::default()
    }
}

#[test]
fn solver_matches_grid_oracle_on_small_problems() {
    let mut rng = ChaCha8Rng::seed_from_u64(211);
    for case in 0..25 {
        let problem = random_problem(&mut rng, 4, 12);
        let solution = solve(&problem, &tight(case)).unwrap();
        let grid = grid_minimum(&problem, 1e-3);
        assert!(
            (solution.objective - grid).abs() <= 1e-3,
            "case {case}: solver {} grid {}",
            solution.objective,
            grid
        );
        assert!(solution.assignment.iter().all(|y| (0.0..=1.0).contains(y)));
    }
}

#[test]
fn solver_handles_squared_hinges_against_the_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(227);
    for case in 0..10 {
        let problem = random_problem_with(&mut rng, 3, 8, 0.5);
        let solution = solve(&problem, &tight(1000 + case)).unwrap();
        let grid = grid_minimum(&problem, 1e-3);
        assert!(
            (solution.objective - grid).abs() <= 2e-3,
            "case {case}: solver {} grid {}",
            solution.objective,
            grid
        );
    }
}

#[test]
fn identical_seeds_give_identical_runs() {
    let mut rng = ChaCha8Rng::seed_from_u64(97);
    let problem = random_problem(&mut rng, 6, 20);
    let settings = SolverSettings {
        seed: 42,
        max_iterations: 500,
        ..SolverSettings::default()
    };
    let a = solve(&problem, &settings).unwrap();
    let b = solve(&problem, &settings).unwrap();
    assert_eq!(a.assignment, b.assignment);
    assert_eq!(a.objective, b.objective);
    assert_eq!(a.diagnostics.trace.len(), b.diagnostics.trace.len());
    for (ta, tb) in a.diagnostics.trace.iter().zip(&b.diagnostics.trace) {
        assert_eq!(ta.objective, tb.objective);
        assert_eq!(ta.primal_residual, tb.primal_residual);
        assert_eq!(ta.dual_residual, tb.dual_residual);
    }
}

#[test]
fn smoothed_objective_trace_trends_downward() {
    let mut rng = ChaCha8Rng::seed_from_u64(313);
    for case in 0..5 {
        let problem = random_problem(&mut rng, 5, 15);
        let solution = solve(
            &problem,
            &SolverSettings {
                seed: case,
                max_iterations: 400,
                ..SolverSettings::default()
            },
        )
        .unwrap();
        let trace: Vec<f64> = solution
            .diagnostics
            .trace
            .iter()
            .map(|t| t.objective)
            .collect();
        let window = 10;
        let smoothed: Vec<f64> = trace
            .windows(window)
            .map(|w| w.iter().sum::<f64>() / window as f64)
            .collect();
        // The consensus objective is not monotone iterate by iterate; the
        // windowed trend must still be nonincreasing up to a small relative
        // ripple.
        for i in 20..smoothed.len() {
            let slack = 1e-9 + 0.01 * smoothed[i - 1].abs();
            assert!(
                smoothed[i] <= smoothed[i - 1] + slack,
                "case {case}: smoothed trace rose at iteration {i} \
                 ({} -> {})",
                smoothed[i - 1],
                smoothed[i]
            );
        }
    }
}

#[test]
fn heuristic_and_naive_grounding_share_the_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(467);
    let weights = RuleWeights::default();
    for case in 0..15 {
        let (obs, ontology) = random_instance(&mut rng, 4, 2, 5, case % 3 == 0);
        if obs.is_empty() {
            continue;
        }
        let reduced = ground(&obs, &ontology, &weights);
        let naive = naive_ground(&obs, &ontology, &weights, DEFAULT_NAIVE_CAP).unwrap();
        assert!(reduced.k() <= naive.k());
        let reduced_opt = lp_minimum(&reduced);
        let naive_opt = lp_minimum(&naive);
        assert!(
            (reduced_opt - naive_opt).abs() < 1e-6,
            "case {case}: reduced {reduced_opt} vs naive {naive_opt} \
             (m {} vs {}, k {} vs {})",
            reduced.m(),
            naive.m(),
            reduced.k(),
            naive.k()
        );
    }
}

#[test]
fn grounding_example_case_agrees_with_the_naive_oracle() {
    // Three mutually exclusive domains, two classifiers, five instances at
    // half observation density.
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let ontology = Ontology::build(3, &[vec![d(0), d(1), d(2)]], &[]).unwrap();
    let mut obs = ObservationSet::new();
    for dm in 0..3 {
        for cl in 0..2 {
            for inst in 0..5 {
                if rng.gen_bool(0.5) {
                    obs.insert_approx(d(dm), c(cl), x(inst), rng.gen());
                }
            }
        }
    }
    let weights = RuleWeights::default();
    let reduced = ground(&obs, &ontology, &weights);
    let naive = naive_ground(&obs, &ontology, &weights, DEFAULT_NAIVE_CAP).unwrap();
    let reduced_opt = lp_minimum(&reduced);
    let naive_opt = lp_minimum(&naive);
    assert!(
        (reduced_opt - naive_opt).abs() < 1e-6,
        "reduced {reduced_opt} vs naive {naive_opt}"
    );
}

#[test]
fn flipping_all_outputs_preserves_the_optimum_objective() {
    // The ensemble rules are symmetric under flipping every output together
    // with the latent labels and error rates, so on constraint-free problems
    // the two optima coincide exactly.
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let weights = RuleWeights::default();
    for case in 0..5 {
        let mut obs = ObservationSet::new();
        let mut mirrored = ObservationSet::new();
        for inst in 0..10 {
            for cl in 0..2 {
                if rng.gen_bool(0.8) {
                    let v: f64 = rng.gen();
                    obs.insert_approx(d(0), c(cl), x(inst), v);
                    mirrored.insert_approx(d(0), c(cl), x(inst), 1.0 - v);
                }
            }
        }
        let ont = Ontology::unconstrained(1);
        let original = lp_minimum(&ground(&obs, &ont, &weights));
        let flipped = lp_minimum(&ground(&mirrored, &ont, &weights));
        assert!(
            (original - flipped).abs() < 1e-9,
            "case {case}: {original} vs {flipped}"
        );
    }
}

#[test]
fn solver_reaches_the_exact_optimum_of_a_grounded_problem() {
    let mut obs = ObservationSet::new();
    obs.insert_approx(d(0), c(0), x(0), 1.0);
    let problem = ground(&obs, &Ontology::unconstrained(1), &RuleWeights::default());
    let solution = solve(&problem, &SolverSettings::default()).unwrap();
    let exact = lp_minimum(&problem);
    assert!(
        (solution.objective - exact).abs() < 1e-4,
        "solver {} exact {exact}",
        solution.objective
    );
}
