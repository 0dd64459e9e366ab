//! Test oracles for the inference engine: brute-force grid search over the
//! unit box, an exact LP minimizer for piecewise-linear objectives, and
//! random problem generators. Everything here is deliberately independent of
//! the ADMM solve path it is used to check.

use lee_core::ground::GroundProblem;
use lee_core::logic::{Exponent, LinearHinge};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

mod simplex;

pub use simplex::solve_lp;

/// Brute-force minimum of the weighted hinge objective over [0, 1]^m.
///
/// Uses an exhaustive grid when `(1/resolution + 1)^m` is affordable and a
/// shrinking-box refinement down to `resolution` spacing otherwise; the
/// objective is convex, so refining around the best grid point converges to
/// the global minimum.
pub fn grid_minimum(problem: &GroundProblem, resolution: f64) -> f64 {
    let m = problem.m();
    if m == 0 {
        return problem.objective(&[]);
    }
    let budget = 2_000_000f64;
    let full_points = (1.0 / resolution).round() as usize + 1;
    if (full_points as f64).powi(m as i32) <= budget {
        let mut best = f64::INFINITY;
        let mut point = vec![0.0; m];
        let mut idx = vec![0usize; m];
        'grid: loop {
            for d in 0..m {
                point[d] = idx[d] as f64 * resolution;
            }
            best = best.min(problem.objective(&point));
            let mut d = 0;
            loop {
                if d == m {
                    break 'grid;
                }
                idx[d] += 1;
                if idx[d] < full_points {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
        }
        return best;
    }

    // Shrinking-box refinement.
    let points = 17usize;
    let mut lo = vec![0.0f64; m];
    let mut hi = vec![1.0f64; m];
    let mut best_value = f64::INFINITY;
    loop {
        let steps: Vec<f64> = lo
            .iter()
            .zip(&hi)
            .map(|(&l, &h)| (h - l) / (points - 1) as f64)
            .collect();
        let mut best_point = lo.clone();
        let mut idx = vec![0usize; m];
        let mut point = vec![0.0; m];
        'stage: loop {
            for d in 0..m {
                point[d] = lo[d] + idx[d] as f64 * steps[d];
            }
            let value = problem.objective(&point);
            if value < best_value {
                best_value = value;
                best_point.copy_from_slice(&point);
            }
            let mut d = 0;
            loop {
                if d == m {
                    break 'stage;
                }
                idx[d] += 1;
                if idx[d] < points {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
        }
        if steps.iter().all(|&s| s <= resolution) {
            return best_value;
        }
        for d in 0..m {
            lo[d] = (best_point[d] - 2.0 * steps[d]).max(0.0);
            hi[d] = (best_point[d] + 2.0 * steps[d]).min(1.0);
        }
    }
}

/// Exact minimum of a piecewise-linear (exponent 1) hinge objective over
/// [0, 1]^m, via the LP epigraph formulation
/// `min Σ λ_j u_j  s.t.  u_j ≥ ℓ_j(Y), u_j ≥ 0, 0 ≤ Y ≤ 1`
/// solved with a dense two-phase simplex.
pub fn lp_minimum(problem: &GroundProblem) -> f64 {
    let m = problem.m();
    let mut base = 0.0;
    let mut kept: Vec<&LinearHinge> = Vec::new();
    for hinge in problem.hinges() {
        assert!(
            hinge.exponent == Exponent::Linear,
            "lp_minimum handles exponent 1 only"
        );
        if hinge.weight == 0.0 {
            continue;
        }
        if hinge.terms.is_empty() {
            base += hinge.weight * hinge.constant.max(0.0);
        } else if !hinge.is_trivially_satisfied() {
            kept.push(hinge);
        }
    }
    if kept.is_empty() {
        return base;
    }

    let vars = m + kept.len();
    let rows = kept.len() + m;
    let mut a = vec![vec![0.0f64; vars]; rows];
    let mut b = vec![0.0f64; rows];
    let mut c = vec![0.0f64; vars];
    for (j, hinge) in kept.iter().enumerate() {
        for &(idx, coeff) in &hinge.terms {
            a[j][idx as usize] = coeff;
        }
        a[j][m + j] = -1.0;
        b[j] = -hinge.constant;
        c[m + j] = hinge.weight;
    }
    for i in 0..m {
        a[kept.len() + i][i] = 1.0;
        b[kept.len() + i] = 1.0;
    }
    base + solve_lp(&a, &b, &c).expect("hinge LPs are always feasible and bounded")
}

/// Random small problem over synthetic latents, for solver-vs-oracle tests.
pub fn random_problem(rng: &mut ChaCha8Rng, max_m: usize, max_k: usize) -> GroundProblem {
    random_problem_with(rng, max_m, max_k, 0.0)
}

/// Like [`random_problem`] with a fraction of squared-exponent hinges.
///
/// Weights are rescaled so the objective's total slope `Σ λ_j ‖a_j‖₁` stays
/// below 1.8. A grid at spacing δ can then certify the minimum to within
/// `(δ/2) · Σ λ_j ‖a_j‖₁ < δ`, which keeps a 1e-3 grid and a 1e-3 match
/// tolerance mutually consistent.
pub fn random_problem_with(
    rng: &mut ChaCha8Rng,
    max_m: usize,
    max_k: usize,
    squared_fraction: f64,
) -> GroundProblem {
    let m = rng.gen_range(1..=max_m);
    let k = rng.gen_range(1..=max_k);
    let mut hinges: Vec<LinearHinge> = (0..k)
        .map(|_| {
            let arity = rng.gen_range(1..=m.min(3));
            let mut vars: Vec<u32> = (0..m as u32).collect();
            for i in (1..vars.len()).rev() {
                vars.swap(i, rng.gen_range(0..=i));
            }
            vars.truncate(arity);
            LinearHinge {
                terms: vars
                    .into_iter()
                    .map(|v| {
                        let magnitude = rng.gen_range(0.2..1.5);
                        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                        (v, sign * magnitude)
                    })
                    .collect(),
                constant: rng.gen_range(-1.0..1.0),
                weight: rng.gen_range(0.1..2.0),
                exponent: if rng.gen_bool(squared_fraction) {
                    Exponent::Squared
                } else {
                    Exponent::Linear
                },
            }
        })
        .collect();
    let slope: f64 = hinges
        .iter()
        .map(|h| h.weight * h.terms.iter().map(|&(_, c)| c.abs()).sum::<f64>())
        .sum();
    if slope > 1.8 {
        for h in &mut hinges {
            h.weight *= 1.8 / slope;
        }
    }
    GroundProblem::from_hinges(m, hinges)
}
