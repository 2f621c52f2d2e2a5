//! Exact OT via the primal network simplex on the bipartite transportation
//! graph.
//!
//! The basis is a spanning tree over the m row nodes and n column nodes
//! (m + n - 1 basic cells). Each iteration rebuilds the tree and the node
//! potentials from scratch — O(m + n), so the per-iteration cost is dominated
//! by the entering-arc scan anyway, and potential roundoff cannot accumulate
//! across pivots. The entering rule is Dantzig (most negative reduced cost,
//! smallest index on ties); after a run of consecutive degenerate pivots it
//! falls back to Bland's smallest-index rule until a pivot makes progress,
//! which rules out cycling while keeping the fast rule on the common path.
//!
//! ∞ costs are treated as forbidden cells using exact two-level costs
//! `(m_part, finite_part)` compared lexicographically, where the m_part
//! counts forbidden cells. This avoids picking a concrete big-M constant
//! whose magnitude would poison the floating-point reduced costs. A problem
//! whose optimum must ship mass across a forbidden cell is reported
//! infeasible.

use super::{
    check_balance, DualPotentials, Marginals, OtSolution, SolverKind, FEASIBILITY_TOL,
};
use crate::compose::assert_finite;
use crate::error::{Error, Result};
use crate::tropical::{CostMatrix, Plan};

/// Exact solve for a finite cost matrix. Returns the optimal basic plan, the
/// dual potentials read off the final basis, and the optimal value.
pub fn solve_exact(c: &CostMatrix, a: &Marginals, b: &Marginals) -> Result<OtSolution> {
    assert_finite(c)?;
    solve_exact_extended(c, a, b)
}

/// Like [`solve_exact`] but accepts ∞ entries, which act as forbidden cells.
/// Errors with [`Error::Infeasible`] if every feasible plan must put mass on
/// a forbidden cell.
pub fn solve_exact_extended(c: &CostMatrix, a: &Marginals, b: &Marginals) -> Result<OtSolution> {
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
    let ts = solve_transport(c.as_slice(), c.rows(), c.cols(), a.as_slice(), b.as_slice())?;
    let plan = Plan::new(c.rows(), c.cols(), ts.flow)?;
    let value = c.pairing(&plan)?;
    Ok(OtSolution {
        value,
        plan,
        potentials: Some(DualPotentials {
            source: ts.u,
            target: ts.v,
        }),
        iterations: ts.iterations,
        solver: SolverKind::Exact,
    })
}

pub(crate) struct TransportSolution {
    pub flow: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub iterations: usize,
}

/// Solves the transportation problem with raw supplies/demands (any balanced
/// total mass, not necessarily 1). `cost` entries may be `f64::INFINITY`.
pub(crate) fn solve_transport(
    cost: &[f64],
    m: usize,
    n: usize,
    supply: &[f64],
    demand: &[f64],
) -> Result<TransportSolution> {
    assert_eq!(cost.len(), m * n);
    assert_eq!(supply.len(), m);
    assert_eq!(demand.len(), n);
    assert!(m >= 1 && n >= 1);

    let mut s = Simplex::new(cost, m, n);
    s.init_northwest(supply, demand);
    s.rebuild();

    let cap = 1_000 + 20 * (m + n) * (m + n);
    let mut iterations = 0usize;
    let mut degenerate_streak = 0usize;
    let mut bland = false;
    while let Some((ei, ej)) = s.entering(bland) {
        if iterations >= cap {
            return Err(Error::IterationLimit(cap));
        }
        iterations += 1;
        let theta = s.pivot(ei, ej);
        if theta <= 0.0 {
            degenerate_streak += 1;
            if degenerate_streak >= 64 {
                bland = true;
            }
        } else {
            degenerate_streak = 0;
            bland = false;
        }
        s.rebuild();
    }

    s.finish(iterations)
}

/// Relative threshold below which a reduced cost counts as negative; scaled
/// by the largest absolute finite cost.
const ENTERING_REL_TOL: f64 = 1e-12;

struct Simplex {
    m: usize,
    n: usize,
    /// Forbidden-cell indicator: the exact "big-M" component of each cost.
    cost_m: Vec<f64>,
    /// Finite component (0 for forbidden cells).
    cost_f: Vec<f64>,
    forbidden: Vec<bool>,
    max_abs_cost: f64,
    tol_f: f64,

    basic: Vec<bool>,
    basis_cells: Vec<(usize, usize)>,
    flow: Vec<f64>,

    // Spanning tree over nodes 0..m (rows) and m..m+n (columns), rebuilt
    // after every pivot. Node 0 is the root.
    parent: Vec<usize>,
    parent_cell: Vec<(usize, usize)>,
    depth: Vec<usize>,
    order: Vec<usize>,

    // Two-level node potentials.
    um: Vec<f64>,
    uf: Vec<f64>,
    vm: Vec<f64>,
    vf: Vec<f64>,
}

const NO_PARENT: usize = usize::MAX;

impl Simplex {
    fn new(cost: &[f64], m: usize, n: usize) -> Simplex {
        let forbidden: Vec<bool> = cost.iter().map(|c| !c.is_finite()).collect();
        let cost_m: Vec<f64> = forbidden.iter().map(|&f| if f { 1.0 } else { 0.0 }).collect();
        let cost_f: Vec<f64> = cost
            .iter()
            .map(|&c| if c.is_finite() { c } else { 0.0 })
            .collect();
        let max_abs_cost = cost_f.iter().fold(0.0f64, |acc, c| acc.max(c.abs()));
        let nodes = m + n;
        Simplex {
            m,
            n,
            cost_m,
            cost_f,
            forbidden,
            max_abs_cost,
            tol_f: ENTERING_REL_TOL * (1.0 + max_abs_cost),
            basic: vec![false; m * n],
            basis_cells: Vec::with_capacity(m + n - 1),
            flow: vec![0.0; m * n],
            parent: vec![NO_PARENT; nodes],
            parent_cell: vec![(0, 0); nodes],
            depth: vec![0; nodes],
            order: Vec::with_capacity(nodes),
            um: vec![0.0; m],
            uf: vec![0.0; m],
            vm: vec![0.0; n],
            vf: vec![0.0; n],
        }
    }

    /// Northwest-corner starting basis: a staircase of m + n - 1 cells.
    fn init_northwest(&mut self, supply: &[f64], demand: &[f64]) {
        let (m, n) = (self.m, self.n);
        let mut remaining_supply = supply.to_vec();
        let mut remaining_demand = demand.to_vec();
        let (mut i, mut j) = (0usize, 0usize);
        loop {
            let t = remaining_supply[i].min(remaining_demand[j]).max(0.0);
            self.flow[i * n + j] = t;
            self.basic[i * n + j] = true;
            self.basis_cells.push((i, j));
            remaining_supply[i] -= t;
            remaining_demand[j] -= t;
            if i == m - 1 && j == n - 1 {
                break;
            }
            if i < m - 1 && (remaining_supply[i] <= remaining_demand[j] || j == n - 1) {
                i += 1;
            } else {
                j += 1;
            }
        }
        debug_assert_eq!(self.basis_cells.len(), m + n - 1);
    }

    /// BFS from node 0 over the basis tree; then node potentials in
    /// parent-before-child order so each is fixed by one basic cell.
    fn rebuild(&mut self) {
        let (m, n) = (self.m, self.n);
        let nodes = m + n;
        let mut adjacency: Vec<Vec<(usize, (usize, usize))>> = vec![Vec::new(); nodes];
        for &(i, j) in &self.basis_cells {
            adjacency[i].push((m + j, (i, j)));
            adjacency[m + j].push((i, (i, j)));
        }

        self.order.clear();
        self.parent.fill(NO_PARENT);
        let mut seen = vec![false; nodes];
        seen[0] = true;
        self.depth[0] = 0;
        self.order.push(0);
        let mut head = 0;
        while head < self.order.len() {
            let node = self.order[head];
            head += 1;
            for &(next, cell) in &adjacency[node] {
                if !seen[next] {
                    seen[next] = true;
                    self.parent[next] = node;
                    self.parent_cell[next] = cell;
                    self.depth[next] = self.depth[node] + 1;
                    self.order.push(next);
                }
            }
        }
        debug_assert_eq!(self.order.len(), nodes, "basis lost connectivity");

        self.um[0] = 0.0;
        self.uf[0] = 0.0;
        for idx in 1..self.order.len() {
            let node = self.order[idx];
            let (i, j) = self.parent_cell[node];
            let cell = i * n + j;
            if node >= m {
                self.vm[node - m] = self.cost_m[cell] - self.um[i];
                self.vf[node - m] = self.cost_f[cell] - self.uf[i];
            } else {
                self.um[node] = self.cost_m[cell] - self.vm[j];
                self.uf[node] = self.cost_f[cell] - self.vf[j];
            }
        }
    }

    /// Finds an entering cell with lexicographically negative reduced cost
    /// `(r_m, r_f)`, or None at optimality. In Bland mode takes the first
    /// (smallest row-major index); otherwise the most negative.
    fn entering(&self, bland: bool) -> Option<(usize, usize)> {
        let n = self.n;
        let mut best: Option<(f64, f64, usize)> = None;
        for idx in 0..self.m * n {
            if self.basic[idx] {
                continue;
            }
            let (i, j) = (idx / n, idx % n);
            let rm = self.cost_m[idx] - self.um[i] - self.vm[j];
            let rf = self.cost_f[idx] - self.uf[i] - self.vf[j];
            let negative = rm < -0.5 || (rm.abs() < 0.5 && rf < -self.tol_f);
            if !negative {
                continue;
            }
            if bland {
                return Some((i, j));
            }
            let better = match best {
                None => true,
                Some((bm, bf, _)) => rm < bm - 0.5 || (rm < bm + 0.5 && rf < bf),
            };
            if better {
                best = Some((rm, rf, idx));
            }
        }
        best.map(|(_, _, idx)| (idx / n, idx % n))
    }

    /// Performs the pivot for entering cell (ei, ej) and returns θ, the mass
    /// shifted around the cycle.
    fn pivot(&mut self, ei: usize, ej: usize) -> f64 {
        let (m, n) = (self.m, self.n);

        // Tree path between the entering cell's endpoints, collected from
        // both sides up to the lowest common ancestor.
        let mut from_row: Vec<(usize, usize)> = Vec::new();
        let mut from_col: Vec<(usize, usize)> = Vec::new();
        let mut pa = ei;
        let mut pb = m + ej;
        while self.depth[pa] > self.depth[pb] {
            from_row.push(self.parent_cell[pa]);
            pa = self.parent[pa];
        }
        while self.depth[pb] > self.depth[pa] {
            from_col.push(self.parent_cell[pb]);
            pb = self.parent[pb];
        }
        while pa != pb {
            from_row.push(self.parent_cell[pa]);
            pa = self.parent[pa];
            from_col.push(self.parent_cell[pb]);
            pb = self.parent[pb];
        }

        // Closed walk: entering cell, up from the column side, down to the
        // row side. Consecutive cells share a node, so signs alternate.
        let mut walk = Vec::with_capacity(1 + from_row.len() + from_col.len());
        walk.push((ei, ej));
        walk.extend(from_col.iter().copied());
        walk.extend(from_row.iter().rev().copied());
        debug_assert!(walk.len() % 2 == 0);

        let mut theta = f64::INFINITY;
        let mut leaving = walk[1];
        for pos in (1..walk.len()).step_by(2) {
            let cell = walk[pos];
            let f = self.flow[cell.0 * n + cell.1];
            if f < theta || (f == theta && cell < leaving) {
                theta = f;
                leaving = cell;
            }
        }

        for (pos, &(i, j)) in walk.iter().enumerate() {
            let idx = i * n + j;
            if pos % 2 == 0 {
                self.flow[idx] += theta;
            } else {
                self.flow[idx] = (self.flow[idx] - theta).max(0.0);
            }
        }
        self.flow[leaving.0 * n + leaving.1] = 0.0;

        self.basic[ei * n + ej] = true;
        self.basic[leaving.0 * n + leaving.1] = false;
        let pos = self
            .basis_cells
            .iter()
            .position(|&cell| cell == leaving)
            .expect("leaving cell is basic");
        self.basis_cells.swap_remove(pos);
        self.basis_cells.push((ei, ej));
        theta
    }

    /// Checks forbidden cells carry no mass and materializes concrete duals.
    fn finish(self, iterations: usize) -> Result<TransportSolution> {
        let (m, n) = (self.m, self.n);
        let total_mass: f64 = self.flow.iter().sum();
        let mass_tol = FEASIBILITY_TOL * (1.0 + total_mass);
        let mut flow = self.flow;
        for idx in 0..m * n {
            if self.forbidden[idx] {
                if flow[idx] > mass_tol {
                    return Err(Error::Infeasible);
                }
                flow[idx] = 0.0;
            }
        }

        // Concrete potentials: large enough that a unit of the M-part
        // dominates any accumulated finite part.
        let m_concrete = 4.0 * (self.max_abs_cost + 1.0) * ((m + n) as f64 + 1.0);
        let u = (0..m)
            .map(|i| self.uf[i] + m_concrete * self.um[i])
            .collect();
        let v = (0..n)
            .map(|j| self.vf[j] + m_concrete * self.vm[j])
            .collect();
        Ok(TransportSolution {
            flow,
            u,
            v,
            iterations,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::{dual_feasible, dual_value};
    use crate::tropical::ExtReal;

    fn mat(rows: &[&[f64]]) -> CostMatrix {
        CostMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn marg(w: &[f64]) -> Marginals {
        Marginals::new(w.to_vec()).unwrap()
    }

    #[test]
    fn zero_cost_diagonal() {
        let c = mat(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let a = marg(&[0.5, 0.5]);
        let b = marg(&[0.5, 0.5]);
        let sol = solve_exact(&c, &a, &b).unwrap();
        assert_eq!(sol.value, ExtReal::Finite(0.0));
        assert_eq!(sol.plan.get(0, 0), 0.5);
        assert_eq!(sol.plan.get(1, 1), 0.5);
        assert_eq!(sol.plan.get(0, 1), 0.0);
    }

    #[test]
    fn forced_plan() {
        let c = mat(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let a = marg(&[1.0, 0.0]);
        let b = marg(&[0.0, 1.0]);
        let sol = solve_exact(&c, &a, &b).unwrap();
        assert_eq!(sol.value, ExtReal::Finite(1.0));
    }

    #[test]
    fn degenerate_objective_value() {
        // Every feasible plan for this instance costs exactly 2.5.
        let c = mat(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let a = marg(&[0.5, 0.5]);
        let b = marg(&[0.5, 0.5]);
        let sol = solve_exact(&c, &a, &b).unwrap();
        assert!((sol.value.as_f64() - 2.5).abs() < 1e-12);

        let duals = sol.potentials.as_ref().unwrap();
        assert!(dual_feasible(&c, duals).unwrap().feasible);
        let dv = dual_value(duals, &a, &b).unwrap();
        assert!((dv - 2.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_infinite_costs() {
        let c = mat(&[&[1.0, f64::INFINITY], &[0.0, 2.0]]);
        let a = marg(&[0.5, 0.5]);
        let b = marg(&[0.5, 0.5]);
        assert!(matches!(
            solve_exact(&c, &a, &b),
            Err(Error::InfiniteEntries { .. })
        ));
    }

    #[test]
    fn extended_solver_avoids_forbidden_cells() {
        let c = mat(&[&[1.0, f64::INFINITY], &[f64::INFINITY, 2.0]]);
        let a = marg(&[0.25, 0.75]);
        let b = marg(&[0.25, 0.75]);
        let sol = solve_exact_extended(&c, &a, &b).unwrap();
        assert!((sol.value.as_f64() - (0.25 + 1.5)).abs() < 1e-12);
        assert_eq!(sol.plan.get(0, 1), 0.0);
        assert_eq!(sol.plan.get(1, 0), 0.0);
    }

    #[test]
    fn extended_solver_detects_forced_forbidden_mass() {
        // All of column 2's demand can only come through forbidden cells.
        let c = mat(&[&[1.0, f64::INFINITY], &[1.0, f64::INFINITY]]);
        let a = marg(&[0.5, 0.5]);
        let b = marg(&[0.5, 0.5]);
        assert!(matches!(
            solve_exact_extended(&c, &a, &b),
            Err(Error::Infeasible)
        ));
    }

    #[test]
    fn value_is_positively_homogeneous() {
        let c = mat(&[&[3.0, 1.0, 4.0], &[1.0, 5.0, 9.0], &[2.0, 6.0, 5.0]]);
        let a = marg(&[0.2, 0.3, 0.5]);
        let b = marg(&[0.4, 0.4, 0.2]);
        let v1 = solve_exact(&c, &a, &b).unwrap().value.as_f64();

        let scaled = mat(&[&[21.0, 7.0, 28.0], &[7.0, 35.0, 63.0], &[14.0, 42.0, 35.0]]);
        let v7 = solve_exact(&scaled, &a, &b).unwrap().value.as_f64();
        assert!((v7 - 7.0 * v1).abs() < 1e-9 * (1.0 + v7.abs()));
    }

    #[test]
    fn plan_matches_marginals() {
        let c = mat(&[&[3.0, 1.0], &[1.0, 5.0], &[2.0, 6.0]]);
        let a = marg(&[0.2, 0.3, 0.5]);
        let b = marg(&[0.65, 0.35]);
        let sol = solve_exact(&c, &a, &b).unwrap();
        crate::solvers::check_plan_feasibility(&sol.plan, &a, &b).unwrap();
        let paired = c.pairing(&sol.plan).unwrap().as_f64();
        assert!((sol.value.as_f64() - paired).abs() < 1e-12);
    }

    #[test]
    fn single_row_and_column() {
        let c = mat(&[&[2.0, 3.0, 5.0]]);
        let a = marg(&[1.0]);
        let b = marg(&[0.2, 0.3, 0.5]);
        let sol = solve_exact(&c, &a, &b).unwrap();
        let expected = 0.2 * 2.0 + 0.3 * 3.0 + 0.5 * 5.0;
        assert!((sol.value.as_f64() - expected).abs() < 1e-12);

        let c = mat(&[&[2.0], &[3.0]]);
        let a = marg(&[0.5, 0.5]);
        let b = marg(&[1.0]);
        let sol = solve_exact(&c, &a, &b).unwrap();
        assert!((sol.value.as_f64() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn marginal_length_mismatch() {
        let c = mat(&[&[1.0, 2.0]]);
        let a = marg(&[0.5, 0.5]);
        let b = marg(&[0.5, 0.5]);
        assert!(solve_exact(&c, &a, &b).is_err());
    }
}
