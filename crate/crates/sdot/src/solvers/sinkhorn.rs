//! Entropic OT via Sinkhorn scaling, log-domain by default.
//!
//! The plan is parameterized as `P[i][j] = exp((f_i + g_j - C[i][j]) / ε)`
//! and the potentials are updated alternately until the L1 violation of the
//! prescribed marginals drops below the tolerance. Rows and columns with zero
//! mass are excluded from the scaling and forced to zero in the plan. With
//! annealing enabled, ε starts at half the largest cost and is halved down to
//! the target, warm-starting the potentials at each stage.

use super::{check_balance, Marginals, OtSolution, SolverKind};
use crate::compose::assert_finite;
use crate::error::{Error, Result};
use crate::tropical::{CostMatrix, Plan};

#[derive(Clone, Debug)]
pub struct SinkhornOptions {
    /// Regularization strength; `None` picks `1e-3 * max(C)`.
    pub epsilon: Option<f64>,
    /// L1 marginal-violation stopping threshold.
    pub tol: f64,
    /// Total iteration budget (across annealing stages).
    pub max_iter: usize,
    /// Halve ε from `max(C)/2` down to the target, warm-started.
    pub anneal: bool,
    /// Log-sum-exp updates; the plain scaling loop is faster per iteration
    /// but underflows once costs are large against ε.
    pub log_domain: bool,
    /// Round the returned plan to exact marginal feasibility. Off by
    /// default: the reported value is the pairing of the unrounded plan.
    pub round_plan: bool,
}

impl Default for SinkhornOptions {
    fn default() -> Self {
        SinkhornOptions {
            epsilon: None,
            tol: 1e-9,
            max_iter: 100_000,
            anneal: false,
            log_domain: true,
            round_plan: false,
        }
    }
}

/// Per-run diagnostics: the L1 marginal violation after every full sweep,
/// the (ε, sweeps) schedule actually executed, and the final source
/// potential in cost units (zero-mass rows hold 0). The potential is
/// entropic, not dual-feasible; a c-transform turns it into a certificate.
#[derive(Clone, Debug, Default)]
pub struct SinkhornReport {
    pub violations: Vec<f64>,
    pub stages: Vec<(f64, usize)>,
    pub final_potentials: Option<Vec<f64>>,
}

pub fn solve_sinkhorn(
    c: &CostMatrix,
    a: &Marginals,
    b: &Marginals,
    opts: &SinkhornOptions,
) -> Result<OtSolution> {
    solve_sinkhorn_with_report(c, a, b, opts).map(|(sol, _)| sol)
}

pub fn solve_sinkhorn_with_report(
    c: &CostMatrix,
    a: &Marginals,
    b: &Marginals,
    opts: &SinkhornOptions,
) -> Result<(OtSolution, SinkhornReport)> {
    assert_finite(c)?;
    if a.len() != c.rows() || b.len() != c.cols() {
        return Err(Error::InvalidMarginals(format!(
            "marginal lengths {} and {} do not match the {}x{} cost matrix",
            a.len(),
            b.len(),
            c.rows(),
            c.cols()
        )));
    }
    check_balance(a, b)?;
    if let Some((i, j)) = first_negative(c) {
        return Err(Error::InvalidMatrix(format!(
            "Sinkhorn requires nonnegative costs; entry at row {}, column {} is negative",
            i + 1,
            j + 1
        )));
    }
    if opts.tol <= 0.0 || opts.epsilon.is_some_and(|e| e <= 0.0) {
        return Err(Error::InvalidMatrix(
            "Sinkhorn tolerance and epsilon must be positive".into(),
        ));
    }

    // Strip zero-mass rows/columns; their plan entries are zero by mass
    // conservation.
    let rows: Vec<usize> = (0..a.len()).filter(|&i| a.get(i) > 0.0).collect();
    let cols: Vec<usize> = (0..b.len()).filter(|&j| b.get(j) > 0.0).collect();
    let ra: Vec<f64> = rows.iter().map(|&i| a.get(i)).collect();
    let rb: Vec<f64> = cols.iter().map(|&j| b.get(j)).collect();
    let (mm, nn) = (rows.len(), cols.len());
    let mut sub = vec![0.0f64; mm * nn];
    for (ii, &i) in rows.iter().enumerate() {
        for (jj, &j) in cols.iter().enumerate() {
            sub[ii * nn + jj] = c.get(i, j).as_f64();
        }
    }

    let max_cost = sub.iter().fold(0.0f64, |acc, &v| acc.max(v));
    let target_eps = opts
        .epsilon
        .unwrap_or_else(|| if max_cost > 0.0 { 1e-3 * max_cost } else { 1.0 });

    let mut report = SinkhornReport::default();
    let mut state = Scaling::new(mm, nn);
    let mut used = 0usize;

    let schedule: Vec<f64> = if opts.anneal && max_cost > 0.0 {
        let mut stages = Vec::new();
        let mut eps = max_cost / 2.0;
        while eps > target_eps * (1.0 + 1e-12) {
            stages.push(eps);
            eps /= 2.0;
        }
        stages.push(target_eps);
        stages
    } else {
        vec![target_eps]
    };

    let last_stage = schedule.len() - 1;
    for (stage, &eps) in schedule.iter().enumerate() {
        let stage_tol = if stage == last_stage {
            opts.tol
        } else {
            opts.tol.max(1e-6)
        };
        let budget = opts.max_iter.saturating_sub(used);
        let sweeps = if opts.log_domain {
            state.run_log_domain(&sub, &ra, &rb, eps, stage_tol, budget, &mut report.violations)
        } else {
            state.run_scaling(&sub, &ra, &rb, eps, stage_tol, budget, &mut report.violations)?
        };
        used += sweeps;
        report.stages.push((eps, sweeps));
        let violation = report.violations.last().copied().unwrap_or(f64::INFINITY);
        if stage == last_stage && violation > opts.tol {
            return Err(Error::NonConvergence {
                iterations: used,
                violation,
                tolerance: opts.tol,
            });
        }
    }

    let eps = *schedule.last().expect("nonempty schedule");
    let mut plan = Plan::zeros(a.len(), b.len());
    for (ii, &i) in rows.iter().enumerate() {
        for (jj, &j) in cols.iter().enumerate() {
            plan.set(i, j, state.plan_entry(&sub, eps, ii, jj));
        }
    }
    let mut full_f = vec![0.0f64; a.len()];
    for (ii, &i) in rows.iter().enumerate() {
        full_f[i] = state.source_potential(eps, ii);
    }
    report.final_potentials = Some(full_f);
    if opts.round_plan {
        plan = round_to_feasible(&plan, a, b);
    }
    let value = c.pairing(&plan)?;
    Ok((
        OtSolution {
            value,
            plan,
            potentials: None,
            iterations: used,
            solver: SolverKind::Sinkhorn,
        },
        report,
    ))
}

fn first_negative(c: &CostMatrix) -> Option<(usize, usize)> {
    for i in 0..c.rows() {
        for (j, &v) in c.row(i).iter().enumerate() {
            if v < 0.0 {
                return Some((i, j));
            }
        }
    }
    None
}

/// Scaling state shared across annealing stages. In log-domain mode `f`/`g`
/// are potentials in cost units; in plain mode they hold the scaling vectors
/// `u`/`v` directly.
struct Scaling {
    m: usize,
    n: usize,
    f: Vec<f64>,
    g: Vec<f64>,
    log_mode: bool,
}

impl Scaling {
    fn new(m: usize, n: usize) -> Scaling {
        Scaling {
            m,
            n,
            f: vec![0.0; m],
            g: vec![0.0; n],
            log_mode: true,
        }
    }

    fn plan_entry(&self, cost: &[f64], eps: f64, i: usize, j: usize) -> f64 {
        if self.log_mode {
            ((self.f[i] + self.g[j] - cost[i * self.n + j]) / eps).exp()
        } else {
            self.f[i] * (-cost[i * self.n + j] / eps).exp() * self.g[j]
        }
    }

    fn source_potential(&self, eps: f64, i: usize) -> f64 {
        if self.log_mode {
            self.f[i]
        } else {
            eps * self.f[i].ln()
        }
    }

    /// One ε stage of log-sum-exp updates. Returns the number of sweeps run;
    /// appends the violation after each sweep.
    #[allow(clippy::too_many_arguments)]
    fn run_log_domain(
        &mut self,
        cost: &[f64],
        a: &[f64],
        b: &[f64],
        eps: f64,
        tol: f64,
        budget: usize,
        violations: &mut Vec<f64>,
    ) -> usize {
        self.log_mode = true;
        let (m, n) = (self.m, self.n);
        let log_a: Vec<f64> = a.iter().map(|&x| x.ln()).collect();
        let log_b: Vec<f64> = b.iter().map(|&x| x.ln()).collect();
        let mut scratch = vec![0.0f64; m.max(n)];
        for sweep in 0..budget {
            for i in 0..m {
                let row = &cost[i * n..(i + 1) * n];
                for j in 0..n {
                    scratch[j] = (self.g[j] - row[j]) / eps;
                }
                self.f[i] = eps * (log_a[i] - log_sum_exp(&scratch[..n]));
            }
            for j in 0..n {
                for i in 0..m {
                    scratch[i] = (self.f[i] - cost[i * n + j]) / eps;
                }
                self.g[j] = eps * (log_b[j] - log_sum_exp(&scratch[..m]));
            }
            let violation = self.violation(cost, a, b, eps);
            violations.push(violation);
            if violation <= tol {
                return sweep + 1;
            }
        }
        budget
    }

    /// Plain scaling (u = a ./ Kv, v = b ./ Kᵀu). Errors on underflow or
    /// overflow instead of silently producing NaNs.
    #[allow(clippy::too_many_arguments)]
    fn run_scaling(
        &mut self,
        cost: &[f64],
        a: &[f64],
        b: &[f64],
        eps: f64,
        tol: f64,
        budget: usize,
        violations: &mut Vec<f64>,
    ) -> Result<usize> {
        let (m, n) = (self.m, self.n);
        let kernel: Vec<f64> = cost.iter().map(|&c| (-c / eps).exp()).collect();
        self.log_mode = false;
        self.f = vec![1.0; m];
        self.g = vec![1.0; n];
        for sweep in 0..budget {
            for i in 0..m {
                let kv: f64 = (0..n).map(|j| kernel[i * n + j] * self.g[j]).sum();
                self.f[i] = a[i] / kv;
                if !self.f[i].is_finite() || self.f[i] == 0.0 {
                    return Err(Error::NumericalUnderflow);
                }
            }
            for j in 0..n {
                let ku: f64 = (0..m).map(|i| kernel[i * n + j] * self.f[i]).sum();
                self.g[j] = b[j] / ku;
                if !self.g[j].is_finite() || self.g[j] == 0.0 {
                    return Err(Error::NumericalUnderflow);
                }
            }
            let violation = self.plain_violation(&kernel, a, b);
            violations.push(violation);
            if violation <= tol {
                return Ok(sweep + 1);
            }
        }
        Ok(budget)
    }

    /// L1 distance of the current plan's marginals from the targets.
    fn violation(&self, cost: &[f64], a: &[f64], b: &[f64], eps: f64) -> f64 {
        let (m, n) = (self.m, self.n);
        let mut row_err = 0.0;
        let mut col_sums = vec![0.0f64; n];
        for i in 0..m {
            let mut row_sum = 0.0;
            for j in 0..n {
                let p = ((self.f[i] + self.g[j] - cost[i * n + j]) / eps).exp();
                row_sum += p;
                col_sums[j] += p;
            }
            row_err += (row_sum - a[i]).abs();
        }
        let col_err: f64 = col_sums
            .iter()
            .zip(b)
            .map(|(s, want)| (s - want).abs())
            .sum();
        row_err + col_err
    }

    fn plain_violation(&self, kernel: &[f64], a: &[f64], b: &[f64]) -> f64 {
        let (m, n) = (self.m, self.n);
        let mut row_err = 0.0;
        let mut col_sums = vec![0.0f64; n];
        for i in 0..m {
            let mut row_sum = 0.0;
            for j in 0..n {
                let p = self.f[i] * kernel[i * n + j] * self.g[j];
                row_sum += p;
                col_sums[j] += p;
            }
            row_err += (row_sum - a[i]).abs();
        }
        let col_err: f64 = col_sums
            .iter()
            .zip(b)
            .map(|(s, want)| (s - want).abs())
            .sum();
        row_err + col_err
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Rescales rows then columns to at most their targets, then spreads the
/// leftover mass as a rank-one correction. The result meets both marginals
/// exactly up to float rounding.
fn round_to_feasible(plan: &Plan, a: &Marginals, b: &Marginals) -> Plan {
    let (m, n) = (plan.rows(), plan.cols());
    let mut out = plan.clone();

    let row_sums = out.row_sums();
    for i in 0..m {
        if row_sums[i] > a.get(i) && row_sums[i] > 0.0 {
            let scale = a.get(i) / row_sums[i];
            for j in 0..n {
                out.set(i, j, out.get(i, j) * scale);
            }
        }
    }
    let col_sums = out.col_sums();
    for j in 0..n {
        if col_sums[j] > b.get(j) && col_sums[j] > 0.0 {
            let scale = b.get(j) / col_sums[j];
            for i in 0..m {
                out.set(i, j, out.get(i, j) * scale);
            }
        }
    }

    let row_sums = out.row_sums();
    let col_sums = out.col_sums();
    let err_a: Vec<f64> = (0..m).map(|i| (a.get(i) - row_sums[i]).max(0.0)).collect();
    let err_b: Vec<f64> = (0..n).map(|j| (b.get(j) - col_sums[j]).max(0.0)).collect();
    let total: f64 = err_a.iter().sum();
    if total > 0.0 {
        for i in 0..m {
            if err_a[i] == 0.0 {
                continue;
            }
            for j in 0..n {
                out.set(i, j, out.get(i, j) + err_a[i] * err_b[j] / total);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::{check_plan_feasibility, solve_exact};

    fn mat(rows: &[&[f64]]) -> CostMatrix {
        CostMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn marg(w: &[f64]) -> Marginals {
        Marginals::new(w.to_vec()).unwrap()
    }

    #[test]
    fn near_exact_on_diagonal_instance() {
        let c = mat(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let a = marg(&[0.5, 0.5]);
        let b = marg(&[0.5, 0.5]);
        let opts = SinkhornOptions {
            epsilon: Some(0.01),
            ..Default::default()
        };
        let sol = solve_sinkhorn(&c, &a, &b, &opts).unwrap();
        assert!(sol.value.as_f64().abs() < 1e-3);
        assert!(sol.potentials.is_none());
    }

    #[test]
    fn value_approaches_exact_as_epsilon_shrinks() {
        let c = mat(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let a = marg(&[0.5, 0.5]);
        let b = marg(&[0.5, 0.5]);
        let exact = solve_exact(&c, &a, &b).unwrap().value.as_f64();
        let mut errors = Vec::new();
        for eps in [1.0, 0.1, 0.01] {
            let opts = SinkhornOptions {
                epsilon: Some(eps),
                ..Default::default()
            };
            let sol = solve_sinkhorn(&c, &a, &b, &opts).unwrap();
            errors.push((sol.value.as_f64() - exact).abs());
        }
        assert!(errors[0] >= errors[1] && errors[1] >= errors[2]);
        assert!(errors[2] < 1e-2);
    }

    #[test]
    fn zero_marginals_zero_rows() {
        let c = mat(&[&[1.0, 2.0], &[3.0, 4.0], &[0.5, 0.25]]);
        let a = marg(&[0.5, 0.0, 0.5]);
        let b = marg(&[0.5, 0.5]);
        let sol = solve_sinkhorn(&c, &a, &b, &SinkhornOptions::default()).unwrap();
        assert_eq!(sol.plan.get(1, 0), 0.0);
        assert_eq!(sol.plan.get(1, 1), 0.0);
    }

    #[test]
    fn rejects_negative_costs() {
        let c = mat(&[&[1.0, -0.5], &[3.0, 4.0]]);
        let a = marg(&[0.5, 0.5]);
        let b = marg(&[0.5, 0.5]);
        assert!(solve_sinkhorn(&c, &a, &b, &SinkhornOptions::default()).is_err());
    }

    #[test]
    fn plain_mode_underflows_on_large_costs() {
        // exp(-1e6 / 1e-2) underflows to 0 in plain scaling; the log-domain
        // loop handles the same instance.
        let c = mat(&[&[0.0, 1e6], &[1e6, 0.0]]);
        let a = marg(&[0.5, 0.5]);
        let b = marg(&[0.5, 0.5]);
        let plain = SinkhornOptions {
            epsilon: Some(0.01),
            log_domain: false,
            ..Default::default()
        };
        assert!(matches!(
            solve_sinkhorn(&c, &a, &b, &plain),
            Err(Error::NumericalUnderflow)
        ));

        let log = SinkhornOptions {
            epsilon: Some(0.01),
            ..Default::default()
        };
        let sol = solve_sinkhorn(&c, &a, &b, &log).unwrap();
        assert!(sol.value.as_f64().abs() < 1e-6);
    }

    #[test]
    fn non_convergence_is_reported() {
        let c = mat(&[&[0.0, 7.0], &[3.0, 1.0]]);
        let a = marg(&[0.3, 0.7]);
        let b = marg(&[0.6, 0.4]);
        let opts = SinkhornOptions {
            epsilon: Some(0.001),
            max_iter: 2,
            ..Default::default()
        };
        match solve_sinkhorn(&c, &a, &b, &opts) {
            Err(Error::NonConvergence { iterations, .. }) => assert_eq!(iterations, 2),
            other => panic!("expected NonConvergence, got {other:?}"),
        }
    }

    #[test]
    fn rounded_plan_is_exactly_feasible() {
        let c = mat(&[&[1.0, 2.0, 3.0], &[2.0, 1.0, 5.0]]);
        let a = marg(&[0.6, 0.4]);
        let b = marg(&[0.3, 0.3, 0.4]);
        let opts = SinkhornOptions {
            epsilon: Some(0.5),
            tol: 1e-4,
            round_plan: true,
            ..Default::default()
        };
        let sol = solve_sinkhorn(&c, &a, &b, &opts).unwrap();
        check_plan_feasibility(&sol.plan, &a, &b).unwrap();
    }

    #[test]
    fn annealing_reaches_tight_epsilon() {
        let c = mat(&[
            &[5.0e5, 1.0e5, 9.0e5],
            &[2.0e5, 8.0e5, 3.0e5],
            &[7.0e5, 4.0e5, 6.0e5],
        ]);
        let a = marg(&[0.3, 0.4, 0.3]);
        let b = marg(&[0.2, 0.5, 0.3]);
        let exact = solve_exact(&c, &a, &b).unwrap().value.as_f64();
        let opts = SinkhornOptions {
            epsilon: Some(1e-4 * 9.0e5),
            anneal: true,
            ..Default::default()
        };
        let (sol, report) = solve_sinkhorn_with_report(&c, &a, &b, &opts).unwrap();
        assert!(report.stages.len() > 5);
        let rel_err = (sol.value.as_f64() - exact).abs() / exact.abs();
        assert!(rel_err < 1e-3, "relative error {rel_err}");
    }
}
