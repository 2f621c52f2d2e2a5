//! Dense two-phase tableau simplex for equality-form LPs
//! (min c·x s.t. Ax = b, x ≥ 0).
//!
//! Deliberately a plain dense tableau — this backs the slow hierarchical
//! baseline, so there is no revised simplex, no sparsity, no presolve. One
//! artificial variable per row gives the phase-1 start; artificial columns
//! are kept (barred from re-entering) because at optimality the objective
//! row under them is -y, which is how the duals are read off. The entering
//! rule is Dantzig with a Bland fallback after a run of degenerate pivots,
//! so the method cannot cycle.

use crate::error::{Error, Result};

use super::{LpProblem, LpSolution};

const PIVOT_TOL: f64 = 1e-9;
const DEGENERATE_STREAK_LIMIT: usize = 64;

pub(super) fn solve(problem: &LpProblem, max_iter: usize) -> Result<LpSolution> {
    let n_vars = problem.objective.len();
    let n_rows = problem.constraints.len();
    if n_rows == 0 {
        return Ok(LpSolution {
            value: 0.0,
            x: vec![0.0; n_vars],
            duals: Vec::new(),
            iterations: 0,
        });
    }

    let mut t = Tableau::new(problem, n_vars, n_rows);
    let mut iterations = 0usize;

    // Phase 1: minimize the artificial mass.
    t.load_phase1_objective();
    t.pivot_until_optimal(&mut iterations, max_iter)?;
    let rhs_scale: f64 = 1.0 + problem.constraints.iter().map(|c| c.rhs.abs()).sum::<f64>();
    if t.objective_value() > 1e-8 * rhs_scale {
        return Err(Error::Infeasible);
    }
    t.drive_out_artificials();

    // Phase 2: the real objective.
    t.load_phase2_objective(&problem.objective);
    t.pivot_until_optimal(&mut iterations, max_iter)?;

    let x = t.primal_solution();
    let value: f64 = problem
        .objective
        .iter()
        .zip(&x)
        .map(|(c, xi)| c * xi)
        .sum();
    let duals = t.duals();
    Ok(LpSolution {
        value,
        x,
        duals,
        iterations,
    })
}

struct Tableau {
    n_vars: usize,
    n_rows: usize,
    width: usize,     // n_vars + n_rows artificials + 1 rhs column
    rows: Vec<f64>,   // n_rows * width
    obj: Vec<f64>,    // reduced-cost row, same width
    basis: Vec<usize>,
    row_sign: Vec<f64>, // original constraint orientation (rhs normalized >= 0)
    entering_tol: f64,
}

impl Tableau {
    fn new(problem: &LpProblem, n_vars: usize, n_rows: usize) -> Tableau {
        let width = n_vars + n_rows + 1;
        let mut rows = vec![0.0f64; n_rows * width];
        let mut row_sign = vec![1.0f64; n_rows];
        for (i, constraint) in problem.constraints.iter().enumerate() {
            let sign = if constraint.rhs < 0.0 { -1.0 } else { 1.0 };
            row_sign[i] = sign;
            let row = &mut rows[i * width..(i + 1) * width];
            for &(var, coeff) in &constraint.coeffs {
                row[var] += sign * coeff;
            }
            row[n_vars + i] = 1.0;
            row[width - 1] = sign * constraint.rhs;
        }
        Tableau {
            n_vars,
            n_rows,
            width,
            rows,
            obj: vec![0.0; width],
            basis: (n_vars..n_vars + n_rows).collect(),
            row_sign,
            entering_tol: 0.0,
        }
    }

    fn rhs(&self, i: usize) -> f64 {
        self.rows[i * self.width + self.width - 1]
    }

    fn objective_value(&self) -> f64 {
        -self.obj[self.width - 1]
    }

    /// Builds the reduced-cost row for given variable costs by subtracting
    /// each basic row scaled by its basic cost.
    fn load_objective(&mut self, costs: &[f64]) {
        self.obj.fill(0.0);
        self.obj[..costs.len()].copy_from_slice(costs);
        for i in 0..self.n_rows {
            let cb = if self.basis[i] < costs.len() {
                costs[self.basis[i]]
            } else {
                0.0
            };
            if cb != 0.0 {
                let row = self.rows[i * self.width..(i + 1) * self.width].to_vec();
                for (o, r) in self.obj.iter_mut().zip(&row) {
                    *o -= cb * r;
                }
            }
        }
        let max_cost = costs.iter().fold(0.0f64, |a, c| a.max(c.abs()));
        self.entering_tol = 1e-9 * (1.0 + max_cost);
    }

    fn load_phase1_objective(&mut self) {
        let mut costs = vec![0.0; self.n_vars + self.n_rows];
        for c in costs.iter_mut().skip(self.n_vars) {
            *c = 1.0;
        }
        self.load_objective(&costs);
    }

    fn load_phase2_objective(&mut self, objective: &[f64]) {
        self.load_objective(objective);
    }

    /// Entering candidates are structural columns only; artificials never
    /// re-enter the basis.
    fn entering(&self, bland: bool) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.n_vars {
            let z = self.obj[j];
            if z < -self.entering_tol {
                if bland {
                    return Some(j);
                }
                if best.is_none_or(|(_, bz)| z < bz) {
                    best = Some((j, z));
                }
            }
        }
        best.map(|(j, _)| j)
    }

    /// Minimum-ratio rule; ties go to the row whose basic variable has the
    /// smallest index, which is what Bland's rule needs.
    fn leaving(&self, enter: usize) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.n_rows {
            let coeff = self.rows[i * self.width + enter];
            if coeff > PIVOT_TOL {
                let ratio = self.rhs(i) / coeff;
                let better = match best {
                    None => true,
                    Some((bi, br)) => {
                        ratio < br - 1e-12
                            || (ratio < br + 1e-12 && self.basis[i] < self.basis[bi])
                    }
                };
                if better {
                    best = Some((i, ratio));
                }
            }
        }
        best.map(|(i, _)| i)
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let width = self.width;
        let pivot = self.rows[row * width + col];
        let inv = 1.0 / pivot;
        for v in &mut self.rows[row * width..(row + 1) * width] {
            *v *= inv;
        }
        self.rows[row * width + col] = 1.0;

        let pivot_row = self.rows[row * width..(row + 1) * width].to_vec();
        for r in 0..self.n_rows {
            if r == row {
                continue;
            }
            let factor = self.rows[r * width + col];
            if factor != 0.0 {
                let dst = &mut self.rows[r * width..(r + 1) * width];
                for (d, p) in dst.iter_mut().zip(&pivot_row) {
                    *d -= factor * p;
                }
                dst[col] = 0.0;
                // keep the basis column clean and rhs nonnegative dust-free
                if dst[width - 1].abs() < 1e-13 {
                    dst[width - 1] = dst[width - 1].max(0.0);
                }
            }
        }
        let factor = self.obj[col];
        if factor != 0.0 {
            for (o, p) in self.obj.iter_mut().zip(&pivot_row) {
                *o -= factor * p;
            }
            self.obj[col] = 0.0;
        }
        self.basis[row] = col;
    }

    fn pivot_until_optimal(&mut self, iterations: &mut usize, max_iter: usize) -> Result<()> {
        let mut degenerate_streak = 0usize;
        let mut bland = false;
        while let Some(enter) = self.entering(bland) {
            if *iterations >= max_iter {
                return Err(Error::IterationLimit(max_iter));
            }
            *iterations += 1;
            let Some(leave) = self.leaving(enter) else {
                return Err(Error::Unbounded);
            };
            let theta = self.rhs(leave);
            self.pivot(leave, enter);
            if theta.abs() <= 1e-12 {
                degenerate_streak += 1;
                if degenerate_streak >= DEGENERATE_STREAK_LIMIT {
                    bland = true;
                }
            } else {
                degenerate_streak = 0;
                bland = false;
            }
        }
        Ok(())
    }

    /// Replaces basic artificials by structural variables where the row has
    /// any usable coefficient; rows without one are redundant constraints
    /// and keep their zero-level artificial.
    fn drive_out_artificials(&mut self) {
        for i in 0..self.n_rows {
            if self.basis[i] < self.n_vars {
                continue;
            }
            let row_off = i * self.width;
            let mut candidate = None;
            for j in 0..self.n_vars {
                if self.rows[row_off + j].abs() > 1e-7 {
                    candidate = Some(j);
                    break;
                }
            }
            if let Some(j) = candidate {
                self.pivot(i, j);
            }
        }
    }

    fn primal_solution(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.n_vars];
        for i in 0..self.n_rows {
            if self.basis[i] < self.n_vars {
                x[self.basis[i]] = self.rhs(i).max(0.0);
            }
        }
        x
    }

    /// y_i = -(objective row under artificial i), undone for any row-sign
    /// normalization applied at load time.
    fn duals(&self) -> Vec<f64> {
        (0..self.n_rows)
            .map(|i| -self.obj[self.n_vars + i] * self.row_sign[i])
            .collect()
    }
}
