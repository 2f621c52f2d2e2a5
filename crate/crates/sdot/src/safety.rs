//! The threshold safety problem: prove or disprove `λ ≤ OT(D, a, b)` with a
//! certificate that re-verifies independently of the solver.
//!
//! A Safe verdict carries feasible dual potentials whose objective reaches λ;
//! by weak duality they lower-bound every hierarchical transportation plan's
//! cost, so a verified certificate is sound even if the solver were buggy.
//! An Unsafe verdict carries a feasible plan for the composed matrix whose
//! cost is below λ. Witnesses are monolithic plans: the reduction preserves
//! values, not plans, so no hierarchical plan tuple is reconstructed.

use crate::compose::compose_aligned;
use crate::composed_lp;
use crate::diagram::{to_sequential_normal_form, Diagram};
use crate::error::{Error, Result};
use crate::solvers::{
    check_plan_feasibility, dual_feasible, dual_value, solve_exact, solve_sinkhorn_with_report,
    DualPotentials, Marginals, OtSolution, SinkhornOptions, SolverKind,
};
use crate::tropical::{CostMatrix, ExtReal, Plan};

/// Absolute tolerance for the threshold comparison and certificate checks.
pub const SAFETY_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SafetyDecision {
    Safe,
    Unsafe,
}

impl std::fmt::Display for SafetyDecision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SafetyDecision::Safe => write!(f, "Safe"),
            SafetyDecision::Unsafe => write!(f, "Unsafe"),
        }
    }
}

/// Evidence attached to a verdict.
#[derive(Clone, Debug)]
pub enum Certificate {
    /// Feasible dual potentials with objective ≥ λ (Safe).
    Dual(DualPotentials),
    /// A feasible plan for the composed matrix with cost < λ (Unsafe).
    Witness { plan: Plan, cost: f64 },
}

#[derive(Clone, Debug)]
pub struct SafetyVerdict {
    pub decision: SafetyDecision,
    pub lambda: f64,
    pub ot_value: f64,
    pub certificate: Certificate,
    /// Whether the certificate passed its independent re-check.
    pub certified: bool,
    /// |λ - value| within tolerance: the verdict sits on the boundary.
    pub near_boundary: bool,
    pub solver: SolverKind,
}

/// Which solver answers the underlying monolithic OT.
#[derive(Clone, Debug)]
pub enum SafetySolver {
    Exact,
    Sinkhorn(SinkhornOptions),
    ComposedLp,
}

/// Decides `λ ≤ OT(D, a, b)` by normalizing the diagram, composing its cost
/// matrix, and solving the monolithic OT. The boundary case λ = value counts
/// as Safe, compared with absolute tolerance [`SAFETY_TOL`].
pub fn check_safety(
    d: &Diagram,
    a: &Marginals,
    b: &Marginals,
    lambda: f64,
    solver: &SafetySolver,
) -> Result<SafetyVerdict> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::Validation(format!(
            "threshold must be a nonnegative real, got {lambda}"
        )));
    }
    let aligned = to_sequential_normal_form(d)?;
    aligned.validate().into_result()?;
    let composed = compose_aligned(&aligned)?;

    let (value, exact_solution, lp_potentials, sinkhorn_solution) = match solver {
        SafetySolver::Exact => {
            let sol = solve_exact(&composed, a, b)?;
            (sol.value.as_f64(), Some(sol), None, None)
        }
        SafetySolver::ComposedLp => {
            let (lp, potentials) = composed_lp::solve_aligned(&aligned, a, b)?;
            (lp.value, None, Some(potentials), None)
        }
        SafetySolver::Sinkhorn(opts) => {
            let (sol, report) = solve_sinkhorn_with_report(&composed, a, b, opts)?;
            let f = report.final_potentials.unwrap_or_default();
            (sol.value.as_f64(), None, None, Some((sol, f)))
        }
    };

    let decision = if lambda <= value + SAFETY_TOL {
        SafetyDecision::Safe
    } else {
        SafetyDecision::Unsafe
    };
    let near_boundary = (lambda - value).abs() <= SAFETY_TOL;

    let (certificate, certified) = match decision {
        SafetyDecision::Safe => {
            let potentials = match solver {
                SafetySolver::Exact => exact_solution
                    .as_ref()
                    .and_then(|s| s.potentials.clone())
                    .expect("exact solver returns potentials"),
                SafetySolver::ComposedLp => lp_potentials.expect("hierarchical duals"),
                SafetySolver::Sinkhorn(_) => {
                    let entropic_f = sinkhorn_solution
                        .as_ref()
                        .map(|(_, f)| f.clone())
                        .unwrap_or_default();
                    feasible_potentials_from(&composed, &entropic_f)
                }
            };
            let ok = verify_certificate(&composed, &potentials, a, b, lambda)?;
            (Certificate::Dual(potentials), ok)
        }
        SafetyDecision::Unsafe => {
            let plan = match solver {
                SafetySolver::Exact => exact_solution.expect("exact solution").plan,
                // Neither route yields a feasible monolithic plan directly:
                // the hierarchical plan lives on per-leaf blocks and the
                // entropic plan misses the marginals by the tolerance. One
                // exact monolithic solve provides the witness.
                SafetySolver::ComposedLp | SafetySolver::Sinkhorn(_) => {
                    solve_exact(&composed, a, b)?.plan
                }
            };
            let cost = composed.pairing(&plan)?.as_f64();
            let feasible = check_plan_feasibility(&plan, a, b).is_ok();
            let ok = feasible && cost < lambda;
            (Certificate::Witness { plan, cost }, ok)
        }
    };

    Ok(SafetyVerdict {
        decision,
        lambda,
        ot_value: value,
        certificate,
        certified,
        near_boundary,
        solver: match solver {
            SafetySolver::Exact => SolverKind::Exact,
            SafetySolver::Sinkhorn(_) => SolverKind::Sinkhorn,
            SafetySolver::ComposedLp => SolverKind::ComposedLp,
        },
    })
}

/// Turns an arbitrary source potential into a feasible pair by c-transform:
/// `g_j = min_i (C[i][j] - f_i)`, then `f'_i = min_j (C[i][j] - g_j)`. The
/// pair is feasible by construction whatever `f0` was.
fn feasible_potentials_from(c: &CostMatrix, f0: &[f64]) -> DualPotentials {
    let m = c.rows();
    let n = c.cols();
    let f_seed: Vec<f64> = (0..m)
        .map(|i| f0.get(i).copied().filter(|v| v.is_finite()).unwrap_or(0.0))
        .collect();
    let mut g = vec![f64::INFINITY; n];
    for i in 0..m {
        for (j, &cost) in c.row(i).iter().enumerate() {
            if cost.is_finite() {
                g[j] = g[j].min(cost - f_seed[i]);
            }
        }
    }
    for v in &mut g {
        if !v.is_finite() {
            *v = 0.0;
        }
    }
    let mut f = vec![f64::INFINITY; m];
    for i in 0..m {
        for (j, &cost) in c.row(i).iter().enumerate() {
            if cost.is_finite() {
                f[i] = f[i].min(cost - g[j]);
            }
        }
    }
    for v in &mut f {
        if !v.is_finite() {
            *v = 0.0;
        }
    }
    DualPotentials {
        source: f,
        target: g,
    }
}

/// Re-checks a Safe certificate independently of any solver: the potentials
/// must be dual feasible for C and reach λ on the marginals.
pub fn verify_certificate(
    c: &CostMatrix,
    certificate: &DualPotentials,
    a: &Marginals,
    b: &Marginals,
    lambda: f64,
) -> Result<bool> {
    let feasibility = dual_feasible(c, certificate)?;
    if !feasibility.feasible {
        return Ok(false);
    }
    let bound = dual_value(certificate, a, b)?;
    Ok(bound >= lambda - SAFETY_TOL)
}

/// Cost of a would-be Unsafe witness: checks the plan against the marginals
/// and prices it on the composed matrix. An Unsafe verdict is certified
/// exactly when this is below λ.
pub fn witness_cost(
    d: &Diagram,
    a: &Marginals,
    b: &Marginals,
    plan: &Plan,
) -> Result<ExtReal> {
    check_plan_feasibility(plan, a, b)?;
    let composed = crate::compose::compose_cost(d)?;
    composed.pairing(plan)
}

/// Convenience wrapper: the monolithic OT value of a diagram by the chosen
/// solver, together with the solution object when the route produces one.
pub fn solve_diagram(
    d: &Diagram,
    a: &Marginals,
    b: &Marginals,
    solver: &SafetySolver,
) -> Result<(f64, Option<OtSolution>)> {
    let aligned = to_sequential_normal_form(d)?;
    aligned.validate().into_result()?;
    match solver {
        SafetySolver::Exact => {
            let composed = compose_aligned(&aligned)?;
            let sol = solve_exact(&composed, a, b)?;
            Ok((sol.value.as_f64(), Some(sol)))
        }
        SafetySolver::Sinkhorn(opts) => {
            let composed = compose_aligned(&aligned)?;
            let (sol, _) = solve_sinkhorn_with_report(&composed, a, b, opts)?;
            Ok((sol.value.as_f64(), Some(sol)))
        }
        SafetySolver::ComposedLp => {
            let (lp, _) = composed_lp::solve_aligned(&aligned, a, b)?;
            Ok((lp.value, None))
        }
    }
}
