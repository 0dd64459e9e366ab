//! Dense two-phase primal simplex for `min cᵀx s.t. Ax ≤ b, x ≥ 0`.
//!
//! Small and only as fast as it needs to be: the tableau is dense and the
//! pivot rule is Dantzig's with a switch to Bland's rule after a pivot
//! budget, which rules out cycling.

const TOL: f64 = 1e-9;

struct Tableau {
    rows: usize,
    /// Column count excluding the rhs.
    cols: usize,
    /// rows x (cols + 1), last column is the rhs.
    data: Vec<f64>,
    /// cols + 1 objective row: reduced costs then the negated objective.
    obj: Vec<f64>,
    basis: Vec<usize>,
    /// Columns barred from entering (phase-2 artificials).
    banned: Vec<bool>,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * (self.cols + 1) + c]
    }

    fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let w = self.cols + 1;
        &mut self.data[r * w..(r + 1) * w]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.at(r, c);
        for v in self.row_mut(r) {
            *v /= p;
        }
        let pivot_row: Vec<f64> = self.row_mut(r).to_vec();
        for r2 in 0..self.rows {
            if r2 == r {
                continue;
            }
            let factor = self.at(r2, c);
            if factor != 0.0 {
                let row = self.row_mut(r2);
                for (v, p) in row.iter_mut().zip(&pivot_row) {
                    *v -= factor * p;
                }
            }
        }
        let factor = self.obj[c];
        if factor != 0.0 {
            for (v, p) in self.obj.iter_mut().zip(&pivot_row) {
                *v -= factor * p;
            }
        }
        self.basis[r] = c;
    }

    /// Runs pivots until optimality. Returns false if the problem is
    /// unbounded below.
    fn optimize(&mut self) -> bool {
        let bland_after = 10 * (self.rows + self.cols) + 100;
        let max_pivots = 100 * (self.rows + self.cols) + 1000;
        for pivot_count in 0..max_pivots {
            let bland = pivot_count >= bland_after;
            let mut entering = None;
            let mut best = -TOL;
            for c in 0..self.cols {
                if self.banned[c] {
                    continue;
                }
                let rc = self.obj[c];
                if rc < -TOL {
                    if bland {
                        entering = Some(c);
                        break;
                    }
                    if rc < best {
                        best = rc;
                        entering = Some(c);
                    }
                }
            }
            let Some(c) = entering else {
                return true;
            };
            let mut leaving: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let coeff = self.at(r, c);
                if coeff > TOL {
                    let ratio = self.at(r, self.cols) / coeff;
                    let better = match leaving {
                        None => true,
                        Some((lr, lratio)) => {
                            ratio < lratio - TOL
                                || (ratio < lratio + TOL && self.basis[r] < self.basis[lr])
                        }
                    };
                    if better {
                        leaving = Some((r, ratio));
                    }
                }
            }
            let Some((r, _)) = leaving else {
                return false;
            };
            self.pivot(r, c);
        }
        panic!("simplex failed to terminate within the pivot budget");
    }

    fn objective(&self) -> f64 {
        -self.obj[self.cols]
    }
}

/// Solves `min cᵀx s.t. Ax ≤ b, x ≥ 0`. Returns `None` when infeasible and
/// panics on unbounded problems (the callers' LPs are bounded by
/// construction).
pub fn solve_lp(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Option<f64> {
    let rows = a.len();
    let n = c.len();
    let negative_rows: Vec<usize> = (0..rows).filter(|&r| b[r] < 0.0).collect();
    let artificials = negative_rows.len();
    let cols = n + rows + artificials;

    let mut t = Tableau {
        rows,
        cols,
        data: vec![0.0; rows * (cols + 1)],
        obj: vec![0.0; cols + 1],
        basis: vec![0; rows],
        banned: vec![false; cols],
    };

    let mut artificial_col = n + rows;
    for r in 0..rows {
        let flip = if b[r] < 0.0 { -1.0 } else { 1.0 };
        let row = t.row_mut(r);
        for (j, &v) in a[r].iter().enumerate() {
            row[j] = flip * v;
        }
        row[n + r] = flip; // slack
        row[cols] = flip * b[r];
        if flip < 0.0 {
            row[artificial_col] = 1.0;
            t.basis[r] = artificial_col;
            artificial_col += 1;
        } else {
            t.basis[r] = n + r;
        }
    }

    if artificials > 0 {
        // Phase 1: minimize the artificial sum.
        for col in n + rows..cols {
            t.obj[col] = 1.0;
        }
        let w = cols + 1;
        for r in 0..rows {
            if t.basis[r] >= n + rows {
                let row: Vec<f64> = t.data[r * w..(r + 1) * w].to_vec();
                for (v, p) in t.obj.iter_mut().zip(&row) {
                    *v -= p;
                }
            }
        }
        assert!(t.optimize(), "phase-1 LP cannot be unbounded");
        if t.objective() > 1e-7 {
            return None;
        }
        // Drive any degenerate artificial out of the basis.
        for r in 0..rows {
            if t.basis[r] >= n + rows {
                if let Some(c) = (0..n + rows).find(|&c| t.at(r, c).abs() > TOL) {
                    t.pivot(r, c);
                }
            }
        }
        for col in n + rows..cols {
            t.banned[col] = true;
        }
    }

    // Phase 2 objective row.
    t.obj = vec![0.0; cols + 1];
    for (j, &cost) in c.iter().enumerate() {
        t.obj[j] = cost;
    }
    let w = cols + 1;
    for r in 0..rows {
        let cost = if t.basis[r] < n { c[t.basis[r]] } else { 0.0 };
        if cost != 0.0 {
            let row: Vec<f64> = t.data[r * w..(r + 1) * w].to_vec();
            for (v, p) in t.obj.iter_mut().zip(&row) {
                *v -= cost * p;
            }
        }
    }
    assert!(t.optimize(), "objective is bounded by construction");
    Some(t.objective())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_a_textbook_lp() {
        // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18 -> 36 at (2, 6).
        let a = vec![
            vec![1.0, 0.0],
            vec![0.0, 2.0],
            vec![3.0, 2.0],
        ];
        let b = vec![4.0, 12.0, 18.0];
        let c = vec![-3.0, -5.0];
        let z = solve_lp(&a, &b, &c).unwrap();
        assert!((z + 36.0).abs() < 1e-9);
    }

    #[test]
    fn handles_negative_rhs_via_phase_one() {
        // min x s.t. -x <= -3 (x >= 3) -> 3.
        let a = vec![vec![-1.0]];
        let b = vec![-3.0];
        let c = vec![1.0];
        let z = solve_lp(&a, &b, &c).unwrap();
        assert!((z - 3.0).abs() < 1e-9);
    }

    #[test]
    fn reports_infeasibility() {
        // x <= 1 and x >= 2.
        let a = vec![vec![1.0], vec![-1.0]];
        let b = vec![1.0, -2.0];
        let c = vec![1.0];
        assert!(solve_lp(&a, &b, &c).is_none());
    }

    #[test]
    fn degenerate_and_tied_pivots_terminate() {
        let a = vec![
            vec![1.0, 1.0, 0.0],
            vec![1.0, 0.0, 1.0],
            vec![0.0, 1.0, 1.0],
            vec![-1.0, -1.0, -1.0],
        ];
        let b = vec![1.0, 1.0, 1.0, -1.0];
        let c = vec![1.0, 1.0, 2.0];
        let z = solve_lp(&a, &b, &c).unwrap();
        assert!((z - 1.0).abs() < 1e-7);
    }
}
