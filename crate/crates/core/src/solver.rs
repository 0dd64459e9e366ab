//! MPE inference: minimizes the weighted hinge objective over [0,1]^m with
//! consensus ADMM, one subproblem per potential, plus a stochastic variant
//! that each iteration solves only the subproblems whose variable copies
//! disagree most with the consensus.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ground::GroundProblem;
use crate::logic::{Exponent, LinearHinge};

#[derive(Error, Debug)]
pub enum SolverError {
    #[error("invalid solver settings: {0}")]
    InvalidSettings(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SolverMode {
    /// Every iteration updates every subproblem.
    Full,
    /// Every iteration samples `subproblems` of the k subproblems, with
    /// probability proportional to the distance of their variable copies
    /// from the consensus plus `floor`.
    Stochastic { subproblems: usize, floor: f64 },
}

/// Distance floor keeping every subproblem at nonzero sampling probability.
pub const DEFAULT_STOCHASTIC_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SolverSettings {
    /// ADMM penalty parameter, constant across iterations.
    pub rho: f64,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_iterations: usize,
    pub mode: SolverMode,
    pub seed: u64,
    /// Also randomize multipliers and variable copies at initialization
    /// instead of the zero/consensus start.
    pub random_multipliers: bool,
    /// Record the objective trace every this many iterations.
    pub trace_every: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            rho: 1.0,
            eps_abs: 1e-5,
            eps_rel: 1e-3,
            max_iterations: 25_000,
            mode: SolverMode::Full,
            seed: 0,
            random_multipliers: false,
            trace_every: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub converged: bool,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub subproblem_solves: u64,
    /// Latent variables constrained by no hinge, pinned to 0.5.
    pub unconstrained_vars: usize,
    pub trace: Vec<TraceEntry>,
}

#[derive(Clone, Debug)]
pub struct Solution {
    /// Consensus assignment, in [0, 1]^m.
    pub assignment: Vec<f64>,
    /// Objective evaluated at `assignment`.
    pub objective: f64,
    pub diagnostics: Diagnostics,
}

/// Exact minimizer of `weight · (max{a·y + b, 0})^p + (ρ/2)‖y − z‖²`.
///
/// `z_y` holds the target z on entry and the minimizer on exit; `coeffs` is
/// the coefficient vector a aligned with `z_y`.
pub fn prox_hinge(
    coeffs: &[f64],
    constant: f64,
    weight: f64,
    exponent: Exponent,
    rho: f64,
    z_y: &mut [f64],
) {
    let norm_sq: f64 = coeffs.iter().map(|c| c * c).sum();
    if norm_sq == 0.0 {
        // Constant hinge: the prox term alone decides, so y = z.
        return;
    }
    let at_z_b = coeffs
        .iter()
        .zip(z_y.iter())
        .fold(constant, |acc, (c, z)| acc + c * z);
    if at_z_b <= 0.0 {
        // The hinge is inactive at z and moving toward the boundary only
        // pays; y = z.
        return;
    }
    match exponent {
        Exponent::Linear => {
            let step = weight / rho;
            if at_z_b >= step * norm_sq {
                // Unconstrained minimum of the active piece stays active.
                for (y, c) in z_y.iter_mut().zip(coeffs) {
                    *y -= step * c;
                }
            } else {
                // Kink case: project z onto the hyperplane a·y + b = 0.
                let scale = at_z_b / norm_sq;
                for (y, c) in z_y.iter_mut().zip(coeffs) {
                    *y -= scale * c;
                }
            }
        }
        Exponent::Squared => {
            let s = at_z_b / (1.0 + 2.0 * weight * norm_sq / rho);
            let scale = 2.0 * weight * s / rho;
            for (y, c) in z_y.iter_mut().zip(coeffs) {
                *y -= scale * c;
            }
        }
    }
}

/// [`prox_hinge`] over a stand-alone hinge: returns the minimizer of
/// `hinge.weight · φ(y) + (ρ/2)‖y − z‖²` with y aligned to `hinge.terms`.
pub fn subproblem_solve(hinge: &LinearHinge, z: &[f64], rho: f64) -> Vec<f64> {
    assert!(rho > 0.0, "rho must be positive");
    let coeffs: Vec<f64> = hinge.terms.iter().map(|&(_, c)| c).collect();
    let mut y = z.to_vec();
    prox_hinge(
        &coeffs,
        hinge.constant,
        hinge.weight,
        hinge.exponent,
        rho,
        &mut y,
    );
    y
}

/// Clamped average of one consensus entry's copies offset by the scaled
/// multipliers: `clamp(Σ (y_c + α_c/ρ) / count, 0, 1)`.
pub fn consensus_average(copies: &[f64], multipliers: &[f64], rho: f64) -> f64 {
    let sum: f64 = copies
        .iter()
        .zip(multipliers)
        .map(|(y, a)| y + a / rho)
        .sum();
    (sum / copies.len() as f64).clamp(0.0, 1.0)
}

/// Samples `k` subproblem indices without replacement with probability
/// proportional to `distances[i] + floor`, by successive draws from a
/// Fenwick tree over the remaining weights. Falls back to uniform sampling
/// when every weight is zero. Returned indices are sorted.
pub fn sample_subproblems(
    distances: &[f64],
    k: usize,
    floor: f64,
    rng: &mut impl Rng,
) -> Vec<usize> {
    let n = distances.len();
    assert!(k <= n);
    let all_zero = distances.iter().all(|&d| d + floor <= 0.0);
    let weight =
        |i: usize| -> f64 { if all_zero { 1.0 } else { (distances[i] + floor).max(0.0) } };

    // Fenwick tree over weights, built in O(n).
    let mut tree = vec![0.0f64; n + 1];
    for i in 0..n {
        tree[i + 1] += weight(i);
        let j = (i + 1) + ((i + 1) & (i + 1).wrapping_neg());
        if j <= n {
            let v = tree[i + 1];
            tree[j] += v;
        }
    }
    let mut total: f64 = {
        let mut sum = 0.0;
        let mut i = n;
        while i > 0 {
            sum += tree[i];
            i -= i & i.wrapping_neg();
        }
        sum
    };
    let mut span = 1usize;
    while span * 2 <= n {
        span *= 2;
    }

    let mut removed = vec![false; n];
    let mut picked = Vec::with_capacity(k);
    while picked.len() < k && total > 0.0 {
        let r: f64 = rng.gen::<f64>() * total;
        // Smallest index whose prefix sum exceeds r.
        let mut pos = 0usize;
        let mut rem = r;
        let mut step = span;
        while step > 0 {
            let next = pos + step;
            if next <= n && tree[next] <= rem {
                rem -= tree[next];
                pos = next;
            }
            step /= 2;
        }
        let mut idx = pos; // 0-based candidate
        // Rounding can land on an exhausted slot; advance to the next live one.
        while idx < n && (removed[idx] || weight(idx) <= 0.0) {
            idx += 1;
        }
        if idx == n {
            break;
        }
        removed[idx] = true;
        let w = weight(idx);
        total -= w;
        let mut update = idx + 1;
        while update <= n {
            tree[update] -= w;
            update += update & update.wrapping_neg();
        }
        picked.push(idx);
    }
    // If positive-weight subproblems ran out, fill uniformly from the rest.
    if picked.len() < k {
        let mut remaining: Vec<usize> = (0..n).filter(|&i| !removed[i]).collect();
        while picked.len() < k {
            let at = rng.gen_range(0..remaining.len());
            picked.push(remaining.swap_remove(at));
        }
    }
    picked.sort_unstable();
    picked
}

/// Hinges per parallel block; blocks keep copies and multipliers in
/// disjoint slices so subproblem sweeps need no synchronization.
const BLOCK: usize = 2048;
/// Elements per chunk for order-fixed parallel reductions.
const SUM_CHUNK: usize = 1 << 16;

/// Sum with a fixed association order, independent of thread scheduling.
fn stable_sum(values: impl IndexedParallelIterator<Item = f64>) -> f64 {
    values
        .chunks(SUM_CHUNK)
        .map(|c| c.into_iter().sum::<f64>())
        .collect::<Vec<f64>>()
        .into_iter()
        .sum()
}

/// Flattened solver state: consensus vector, per-subproblem variable copies
/// and Lagrange multipliers, and the copy-to-consensus index map.
pub struct ConsensusState {
    rho: f64,
    /// Y, length m.
    consensus: Vec<f64>,
    previous: Vec<f64>,
    /// Per-hinge slot ranges into the flat copy arrays (len = active + 1).
    offsets: Vec<usize>,
    /// Copy-to-consensus map, one entry per slot.
    slot_var: Vec<u32>,
    slot_coeff: Vec<f64>,
    /// y_j, flattened.
    copies: Vec<f64>,
    /// α_j, flattened.
    multipliers: Vec<f64>,
    constant: Vec<f64>,
    weight: Vec<f64>,
    exponent: Vec<Exponent>,
    /// Per-consensus-entry copy slots, fixed order (len = m + 1 offsets).
    entry_offsets: Vec<usize>,
    entry_slots: Vec<u32>,
    /// Objective contribution of hinges with no latent variables.
    constant_objective: f64,
    unconstrained: Vec<u32>,
    /// Hinge index blocks with aligned slot ranges, for parallel sweeps.
    blocks: Vec<(usize, usize)>,
}

impl ConsensusState {
    pub fn new(problem: &GroundProblem) -> Self {
        let m = problem.m();
        let mut offsets = Vec::new();
        let mut slot_var = Vec::new();
        let mut slot_coeff = Vec::new();
        let mut constant = Vec::new();
        let mut weight = Vec::new();
        let mut exponent = Vec::new();
        let mut constant_objective = 0.0;
        offsets.push(0usize);
        for hinge in problem.hinges() {
            if hinge.terms.is_empty() {
                constant_objective += hinge.weight * hinge.potential(&[]);
                continue;
            }
            for &(var, coeff) in &hinge.terms {
                slot_var.push(var);
                slot_coeff.push(coeff);
            }
            offsets.push(slot_var.len());
            constant.push(hinge.constant);
            weight.push(hinge.weight);
            exponent.push(hinge.exponent);
        }

        let mut counts = vec![0usize; m];
        for &v in &slot_var {
            counts[v as usize] += 1;
        }
        let mut entry_offsets = vec![0usize; m + 1];
        for i in 0..m {
            entry_offsets[i + 1] = entry_offsets[i] + counts[i];
        }
        let mut cursor = entry_offsets.clone();
        let mut entry_slots = vec![0u32; slot_var.len()];
        for (slot, &v) in slot_var.iter().enumerate() {
            entry_slots[cursor[v as usize]] = slot as u32;
            cursor[v as usize] += 1;
        }
        let unconstrained: Vec<u32> = (0..m as u32)
            .filter(|&i| counts[i as usize] == 0)
            .collect();

        let active = offsets.len() - 1;
        let blocks: Vec<(usize, usize)> = (0..active)
            .step_by(BLOCK)
            .map(|start| (start, (start + BLOCK).min(active)))
            .collect();

        ConsensusState {
            rho: 1.0,
            consensus: vec![0.0; m],
            previous: vec![0.0; m],
            offsets,
            slot_var,
            slot_coeff,
            copies: Vec::new(),
            multipliers: Vec::new(),
            constant,
            weight,
            exponent,
            entry_offsets,
            entry_slots,
            constant_objective,
            unconstrained,
            blocks,
        }
    }

    pub fn active_subproblems(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn consensus(&self) -> &[f64] {
        &self.consensus
    }

    fn initialize(&mut self, rho: f64, rng: &mut ChaCha8Rng, random_extras: bool) {
        self.rho = rho;
        for y in self.consensus.iter_mut() {
            *y = rng.gen();
        }
        for &i in &self.unconstrained {
            self.consensus[i as usize] = 0.5;
        }
        self.previous.copy_from_slice(&self.consensus);
        let slots = self.slot_var.len();
        if random_extras {
            self.multipliers = (0..slots).map(|_| rng.gen()).collect();
            self.copies = (0..slots).map(|_| rng.gen()).collect();
        } else {
            self.multipliers = vec![0.0; slots];
            self.copies = self
                .slot_var
                .iter()
                .map(|&v| self.consensus[v as usize])
                .collect();
        }
    }

    /// Splits `copies` and `multipliers` into disjoint per-block slices.
    fn block_slices<'a>(
        blocks: &[(usize, usize)],
        offsets: &[usize],
        copies: &'a mut [f64],
        multipliers: &'a mut [f64],
    ) -> Vec<(usize, &'a mut [f64], &'a mut [f64])> {
        let mut out = Vec::with_capacity(blocks.len());
        let mut rest_c = copies;
        let mut rest_m = multipliers;
        let mut consumed = 0usize;
        for &(start, end) in blocks {
            let len = offsets[end] - offsets[start];
            let (c, rc) = rest_c.split_at_mut(len);
            let (m, rm) = rest_m.split_at_mut(len);
            out.push((start, c, m));
            rest_c = rc;
            rest_m = rm;
            consumed += len;
        }
        debug_assert_eq!(consumed, offsets[offsets.len() - 1]);
        out
    }

    /// One multiplier update plus subproblem solve for hinge `j`, operating
    /// on slices local to the block that owns it.
    #[inline]
    fn update_subproblem(
        &self,
        j: usize,
        base: usize,
        copies: &mut [f64],
        multipliers: &mut [f64],
    ) {
        let range = self.offsets[j]..self.offsets[j + 1];
        let local = range.start - base;
        let len = range.len();
        let coeffs = &self.slot_coeff[range.clone()];
        let vars = &self.slot_var[range];
        let y = &mut copies[local..local + len];
        let a = &mut multipliers[local..local + len];
        for i in 0..len {
            let g = self.consensus[vars[i] as usize];
            a[i] += self.rho * (y[i] - g);
            y[i] = g - a[i] / self.rho;
        }
        prox_hinge(
            coeffs,
            self.constant[j],
            self.weight[j],
            self.exponent[j],
            self.rho,
            y,
        );
    }

    /// Full sweep: every subproblem updates its multipliers and copies, then
    /// every consensus entry is re-averaged.
    pub fn iterate_full(&mut self) {
        let mut copies = std::mem::take(&mut self.copies);
        let mut multipliers = std::mem::take(&mut self.multipliers);
        let parts =
            Self::block_slices(&self.blocks, &self.offsets, &mut copies, &mut multipliers);
        parts.into_par_iter().for_each(|(block_start, c, m)| {
            let end = (block_start + BLOCK).min(self.active_subproblems());
            let base = self.offsets[block_start];
            for j in block_start..end {
                self.update_subproblem(j, base, c, m);
            }
        });
        self.copies = copies;
        self.multipliers = multipliers;
        self.consensus_update_all();
    }

    /// Stochastic sweep: only `sampled` subproblems update, and only the
    /// consensus entries they touch are re-averaged (over all their copies,
    /// stale ones included).
    pub fn iterate_sampled(&mut self, sampled: &[usize]) {
        // Sampled hinges touch disjoint copy slices; updating them in index
        // order on one thread keeps this simple and deterministic.
        let mut copies = std::mem::take(&mut self.copies);
        let mut multipliers = std::mem::take(&mut self.multipliers);
        for &j in sampled {
            self.update_subproblem(j, 0, &mut copies, &mut multipliers);
        }
        self.copies = copies;
        self.multipliers = multipliers;

        let mut touched: Vec<u32> = sampled
            .iter()
            .flat_map(|&j| self.slot_var[self.offsets[j]..self.offsets[j + 1]].iter().copied())
            .collect();
        touched.sort_unstable();
        touched.dedup();
        self.previous.copy_from_slice(&self.consensus);
        let entry_offsets = &self.entry_offsets;
        let entry_slots = &self.entry_slots;
        let copies = &self.copies;
        let multipliers = &self.multipliers;
        let rho = self.rho;
        let updated: Vec<f64> = touched
            .par_iter()
            .map(|&i| {
                let slots = &entry_slots[entry_offsets[i as usize]..entry_offsets[i as usize + 1]];
                average_entry(slots, copies, multipliers, rho)
            })
            .collect();
        for (&i, &v) in touched.iter().zip(&updated) {
            self.consensus[i as usize] = v;
        }
    }

    fn consensus_update_all(&mut self) {
        std::mem::swap(&mut self.previous, &mut self.consensus);
        let entry_offsets = &self.entry_offsets;
        let entry_slots = &self.entry_slots;
        let copies = &self.copies;
        let multipliers = &self.multipliers;
        let previous = &self.previous;
        let rho = self.rho;
        self.consensus = (0..previous.len())
            .into_par_iter()
            .map(|i| {
                let slots = &entry_slots[entry_offsets[i]..entry_offsets[i + 1]];
                if slots.is_empty() {
                    previous[i]
                } else {
                    average_entry(slots, copies, multipliers, rho)
                }
            })
            .collect();
    }

    /// Per-subproblem distances `‖y_j − Y_𝒢(j,:)‖₂` driving the sampler.
    pub fn copy_distances(&self) -> Vec<f64> {
        let offsets = &self.offsets;
        (0..self.active_subproblems())
            .into_par_iter()
            .map(|j| {
                let range = offsets[j]..offsets[j + 1];
                self.copies[range.clone()]
                    .iter()
                    .zip(&self.slot_var[range])
                    .map(|(y, &v)| {
                        let d = y - self.consensus[v as usize];
                        d * d
                    })
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }

    /// Primal and dual residuals with their stopping thresholds.
    fn residuals(&self, eps_abs: f64, eps_rel: f64) -> (f64, f64, f64, f64) {
        let slots = self.slot_var.len();
        let primal_sq = stable_sum((0..slots).into_par_iter().map(|s| {
            let d = self.copies[s] - self.consensus[self.slot_var[s] as usize];
            d * d
        }));
        let copies_sq = stable_sum(self.copies.par_iter().map(|y| y * y));
        let gathered_sq = stable_sum((0..slots).into_par_iter().map(|s| {
            let g = self.consensus[self.slot_var[s] as usize];
            g * g
        }));
        let primal = primal_sq.sqrt();
        let eps_primal = (slots as f64).sqrt() * eps_abs
            + eps_rel * copies_sq.sqrt().max(gathered_sq.sqrt());

        let m = self.consensus.len();
        let dual_sq = stable_sum(
            (0..m)
                .into_par_iter()
                .map(|i| (self.consensus[i] - self.previous[i]).powi(2)),
        );
        let dual = self.rho * dual_sq.sqrt();
        let mult_norm_sq = stable_sum((0..m).into_par_iter().map(|i| {
            let slots = &self.entry_slots[self.entry_offsets[i]..self.entry_offsets[i + 1]];
            slots
                .iter()
                .map(|&s| self.multipliers[s as usize])
                .sum::<f64>()
                .powi(2)
        }));
        let eps_dual = (m as f64).sqrt() * eps_abs + eps_rel * mult_norm_sq.sqrt();
        (primal, eps_primal, dual, eps_dual)
    }

    /// Objective at the current consensus.
    pub fn objective(&self) -> f64 {
        let offsets = &self.offsets;
        let active = self.active_subproblems();
        self.constant_objective
            + stable_sum((0..active).into_par_iter().map(|j| {
                let range = offsets[j]..offsets[j + 1];
                let ell = self.slot_coeff[range.clone()]
                    .iter()
                    .zip(&self.slot_var[range])
                    .fold(self.constant[j], |acc, (c, &v)| {
                        acc + c * self.consensus[v as usize]
                    });
                let v = ell.max(0.0);
                let phi = match self.exponent[j] {
                    Exponent::Linear => v,
                    Exponent::Squared => v * v,
                };
                self.weight[j] * phi
            }))
    }
}

fn average_entry(slots: &[u32], copies: &[f64], multipliers: &[f64], rho: f64) -> f64 {
    let sum: f64 = slots
        .iter()
        .map(|&s| copies[s as usize] + multipliers[s as usize] / rho)
        .sum();
    (sum / slots.len() as f64).clamp(0.0, 1.0)
}

/// Runs consensus ADMM on `problem` until the primal and dual residuals
/// fall below their thresholds or `max_iterations` is reached. On
/// non-convergence the best traced iterate is returned and
/// `diagnostics.converged` is false.
pub fn solve(problem: &GroundProblem, settings: &SolverSettings) -> Result<Solution, SolverError> {
    if settings.rho <= 0.0 {
        return Err(SolverError::InvalidSettings("rho must be > 0".into()));
    }
    if settings.eps_abs <= 0.0 || settings.eps_rel < 0.0 {
        return Err(SolverError::InvalidSettings(
            "eps_abs must be > 0 and eps_rel >= 0".into(),
        ));
    }
    if settings.trace_every == 0 {
        return Err(SolverError::InvalidSettings(
            "trace_every must be >= 1".into(),
        ));
    }

    let mut state = ConsensusState::new(problem);
    let active = state.active_subproblems();
    let sample_size = match settings.mode {
        SolverMode::Full => None,
        SolverMode::Stochastic { subproblems, floor } => {
            if subproblems == 0 || subproblems > active {
                return Err(SolverError::InvalidSettings(format!(
                    "stochastic sample size must be in 1..={active}, got {subproblems}"
                )));
            }
            if floor < 0.0 {
                return Err(SolverError::InvalidSettings(
                    "stochastic floor must be >= 0".into(),
                ));
            }
            Some((subproblems, floor))
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    state.initialize(settings.rho, &mut rng, settings.random_multipliers);

    let mut diagnostics = Diagnostics {
        unconstrained_vars: state.unconstrained.len(),
        ..Default::default()
    };
    if active == 0 {
        let assignment = state.consensus.clone();
        let objective = state.objective();
        diagnostics.converged = true;
        diagnostics.trace.push(TraceEntry {
            iteration: 0,
            objective,
            primal_residual: 0.0,
            dual_residual: 0.0,
        });
        return Ok(Solution {
            assignment,
            objective,
            diagnostics,
        });
    }

    let mut best_objective = f64::INFINITY;
    let mut best_assignment = state.consensus.clone();
    for iteration in 1..=settings.max_iterations {
        match sample_size {
            None => state.iterate_full(),
            Some((k, floor)) => {
                let distances = state.copy_distances();
                let sampled = sample_subproblems(&distances, k, floor, &mut rng);
                state.iterate_sampled(&sampled);
            }
        }
        diagnostics.subproblem_solves += match sample_size {
            None => active as u64,
            Some((k, _)) => k as u64,
        };
        let (primal, eps_primal, dual, eps_dual) = state.residuals(settings.eps_abs, settings.eps_rel);
        diagnostics.iterations = iteration;
        diagnostics.primal_residual = primal;
        diagnostics.dual_residual = dual;
        let converged = primal <= eps_primal && dual <= eps_dual;
        if iteration % settings.trace_every == 0 || converged || iteration == settings.max_iterations
        {
            let objective = state.objective();
            if objective < best_objective {
                best_objective = objective;
                best_assignment.copy_from_slice(state.consensus());
            }
            diagnostics.trace.push(TraceEntry {
                iteration,
                objective,
                primal_residual: primal,
                dual_residual: dual,
            });
        }
        if converged {
            diagnostics.converged = true;
            let assignment = state.consensus.clone();
            let objective = state.objective();
            return Ok(Solution {
                assignment,
                objective,
                diagnostics,
            });
        }
    }

    Ok(Solution {
        assignment: best_assignment,
        objective: best_objective,
        diagnostics,
    })
}
