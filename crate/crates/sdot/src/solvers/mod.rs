//! Monolithic OT solvers and the primal/dual vocabulary they share.

mod exact;
mod sinkhorn;

pub use exact::{solve_exact, solve_exact_extended};
pub use sinkhorn::{solve_sinkhorn, solve_sinkhorn_with_report, SinkhornOptions, SinkhornReport};

pub(crate) use exact::solve_transport;

use std::fmt;

use crate::error::{Error, Result};
use crate::tropical::{CostMatrix, ExtReal, Plan};

/// Absolute tolerance for feasibility checks: marginal balance, plan
/// marginals, and dual constraint violations.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// A probability vector on a diagram boundary.
#[derive(Clone, Debug, PartialEq)]
pub struct Marginals {
    weights: Vec<f64>,
}

impl Marginals {
    /// Validates nonnegativity and unit total mass (within [`FEASIBILITY_TOL`]).
    pub fn new(weights: Vec<f64>) -> Result<Marginals> {
        if weights.is_empty() {
            return Err(Error::InvalidMarginals("empty marginal vector".into()));
        }
        if let Some(&bad) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidMarginals(format!(
                "entries must be finite and nonnegative, got {bad}"
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > FEASIBILITY_TOL {
            return Err(Error::InvalidMarginals(format!(
                "entries must sum to 1, got {total}"
            )));
        }
        Ok(Marginals { weights })
    }

    /// The uniform distribution on `n` points. The last entry absorbs the
    /// rounding drift so the left-to-right float sum is exactly 1.
    pub fn uniform(n: usize) -> Result<Marginals> {
        if n == 0 {
            return Err(Error::InvalidMarginals("empty marginal vector".into()));
        }
        let w = 1.0 / n as f64;
        let mut weights = vec![w; n];
        let head: f64 = weights[..n - 1].iter().sum();
        weights[n - 1] = 1.0 - head;
        Marginals::new(weights)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// One value per line, full round-trip precision.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for w in &self.weights {
            out.push_str(&w.to_string());
            out.push('\n');
        }
        out
    }

    pub fn parse_text(text: &str) -> Result<Marginals> {
        let mut weights = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let w: f64 = line
                .parse()
                .map_err(|_| Error::InvalidMarginals(format!("cannot parse entry '{line}'")))?;
            weights.push(w);
        }
        Marginals::new(weights)
    }
}

/// Feasible dual variables for an OT: `source[i] + target[j] <= C[i][j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DualPotentials {
    pub source: Vec<f64>,
    pub target: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverKind {
    Exact,
    Sinkhorn,
    ComposedLp,
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolverKind::Exact => write!(f, "exact"),
            SolverKind::Sinkhorn => write!(f, "sinkhorn"),
            SolverKind::ComposedLp => write!(f, "composed-lp"),
        }
    }
}

/// Result of a monolithic OT solve.
#[derive(Clone, Debug)]
pub struct OtSolution {
    pub value: ExtReal,
    pub plan: Plan,
    /// Dual potentials from the final basis; only the exact solver fills
    /// this in.
    pub potentials: Option<DualPotentials>,
    pub iterations: usize,
    pub solver: SolverKind,
}

/// The dual objective `Σ f_i a_i + Σ g_j b_j`.
pub fn dual_value(potentials: &DualPotentials, a: &Marginals, b: &Marginals) -> Result<f64> {
    if potentials.source.len() != a.len() || potentials.target.len() != b.len() {
        return Err(Error::InvalidMarginals(format!(
            "dual/marginal length mismatch: f has {} entries for {} source weights, g has {} for {}",
            potentials.source.len(),
            a.len(),
            potentials.target.len(),
            b.len()
        )));
    }
    let fa: f64 = potentials
        .source
        .iter()
        .zip(a.as_slice())
        .map(|(f, w)| f * w)
        .sum();
    let gb: f64 = potentials
        .target
        .iter()
        .zip(b.as_slice())
        .map(|(g, w)| g * w)
        .sum();
    Ok(fa + gb)
}

/// Outcome of a dual feasibility check. `worst_violation` is the largest
/// `f_i + g_j - C[i][j]` over finite cells (negative means slack everywhere);
/// ∞ cells can never be violated.
#[derive(Clone, Copy, Debug)]
pub struct DualFeasibility {
    pub feasible: bool,
    pub worst_violation: f64,
}

pub fn dual_feasible(c: &CostMatrix, potentials: &DualPotentials) -> Result<DualFeasibility> {
    if potentials.source.len() != c.rows() || potentials.target.len() != c.cols() {
        return Err(Error::ShapeMismatch {
            op: "dual feasibility",
            left_rows: c.rows(),
            left_cols: c.cols(),
            right_rows: potentials.source.len(),
            right_cols: potentials.target.len(),
        });
    }
    let mut worst = f64::NEG_INFINITY;
    for i in 0..c.rows() {
        let f = potentials.source[i];
        for (j, &cost) in c.row(i).iter().enumerate() {
            if cost.is_finite() {
                let violation = f + potentials.target[j] - cost;
                if violation > worst {
                    worst = violation;
                }
            }
        }
    }
    Ok(DualFeasibility {
        feasible: worst <= FEASIBILITY_TOL,
        worst_violation: worst,
    })
}

/// Checks that a plan has the prescribed marginals within [`FEASIBILITY_TOL`].
pub fn check_plan_feasibility(plan: &Plan, a: &Marginals, b: &Marginals) -> Result<()> {
    if plan.rows() != a.len() || plan.cols() != b.len() {
        return Err(Error::InfeasiblePlan(format!(
            "plan is {}x{} but marginals have lengths {} and {}",
            plan.rows(),
            plan.cols(),
            a.len(),
            b.len()
        )));
    }
    for (i, (sum, want)) in plan.row_sums().iter().zip(a.as_slice()).enumerate() {
        if (sum - want).abs() > FEASIBILITY_TOL {
            return Err(Error::InfeasiblePlan(format!(
                "row {} sums to {sum}, marginal requires {want}",
                i + 1
            )));
        }
    }
    for (j, (sum, want)) in plan.col_sums().iter().zip(b.as_slice()).enumerate() {
        if (sum - want).abs() > FEASIBILITY_TOL {
            return Err(Error::InfeasiblePlan(format!(
                "column {} sums to {sum}, marginal requires {want}",
                j + 1
            )));
        }
    }
    Ok(())
}

pub(crate) fn check_balance(a: &Marginals, b: &Marginals) -> Result<()> {
    let sa = a.total();
    let sb = b.total();
    if (sa - sb).abs() > FEASIBILITY_TOL {
        return Err(Error::UnbalancedMarginals {
            source_mass: sa,
            target_mass: sb,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn marginals_validate() {
        assert!(Marginals::new(vec![0.5, 0.5]).is_ok());
        assert!(Marginals::new(vec![0.5, 0.6]).is_err());
        assert!(Marginals::new(vec![-0.1, 1.1]).is_err());
        assert!(Marginals::new(vec![]).is_err());
        assert!(Marginals::new(vec![1.0, 0.0]).is_ok());
    }

    #[test]
    fn uniform_sums_to_one_exactly() {
        for n in [1, 3, 7, 10, 100, 997] {
            let m = Marginals::uniform(n).unwrap();
            let total: f64 = m.as_slice().iter().sum();
            assert_eq!(total, 1.0, "n={n}");
        }
    }

    #[test]
    fn marginals_text_round_trip() {
        let m = Marginals::new(vec![0.25, 0.125, 0.625]).unwrap();
        let back = Marginals::parse_text(&m.to_text()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn dual_value_cases() {
        let a = Marginals::uniform(2).unwrap();
        let b = Marginals::uniform(2).unwrap();
        let zero = DualPotentials {
            source: vec![0.0; 2],
            target: vec![0.0; 2],
        };
        assert_eq!(dual_value(&zero, &a, &b).unwrap(), 0.0);

        let p = DualPotentials {
            source: vec![1.0, 1.0],
            target: vec![2.0, 2.0],
        };
        assert_eq!(dual_value(&p, &a, &b).unwrap(), 3.0);

        let short = DualPotentials {
            source: vec![1.0],
            target: vec![2.0, 2.0],
        };
        assert!(dual_value(&short, &a, &b).is_err());
    }

    #[test]
    fn dual_feasibility_cases() {
        let c = CostMatrix::from_rows(&[vec![1.0]]).unwrap();
        let zero = DualPotentials {
            source: vec![0.0],
            target: vec![0.0],
        };
        assert!(dual_feasible(&c, &zero).unwrap().feasible);

        let bad = DualPotentials {
            source: vec![10.0],
            target: vec![10.0],
        };
        let check = dual_feasible(&c, &bad).unwrap();
        assert!(!check.feasible);
        assert_eq!(check.worst_violation, 19.0);
    }

    #[test]
    fn infinite_cells_never_violated() {
        let c = CostMatrix::from_rows(&[vec![f64::INFINITY, 1.0]]).unwrap();
        let p = DualPotentials {
            source: vec![100.0],
            target: vec![100.0, -99.0],
        };
        let check = dual_feasible(&c, &p).unwrap();
        assert!(check.feasible);
    }
}
