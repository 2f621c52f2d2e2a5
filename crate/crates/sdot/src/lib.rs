//! Hierarchical ("string diagram") optimal transport.
//!
//! A string diagram of OTs wires small transport problems (open OTs) together
//! with two compositions: a sequential composition `;` that connects boundaries
//! and a parallel composition `#` that stacks components side by side. On cost
//! matrices these become the min-plus matrix product and the ∞-padded block
//! sum, so a whole diagram folds into one monolithic cost matrix that can be
//! handed to an ordinary OT solver.
//!
//! The crate provides:
//!
//! - [`tropical`]: extended-real scalars and cost-matrix algebra over the
//!   min-tropical semiring,
//! - [`diagram`]: the diagram AST, its textual DSL, typing, and reduction to
//!   the layered (aligned) normal form,
//! - [`compose`]: folding a diagram into its monolithic cost matrix,
//! - [`solvers`]: an exact transportation network simplex with dual
//!   potentials, and a log-domain Sinkhorn solver,
//! - [`composed_lp`]: the direct hierarchical LP (the slow baseline, used as
//!   the verification oracle),
//! - [`safety`]: threshold queries `λ ≤ OT(D, a, b)` with machine-checkable
//!   certificates,
//! - [`bench`]: seeded generators for the four benchmark families,
//! - [`bundle`]: on-disk instance bundles (DSL text + CSV matrices/marginals),
//! - [`experiment`]: the timing/error table runner behind the CLI.

pub mod bench;
pub mod bundle;
pub mod compose;
pub mod composed_lp;
pub mod diagram;
pub mod error;
pub mod experiment;
pub mod safety;
pub mod solvers;
pub mod tropical;

pub use error::{Error, ErrorKind, Result};
pub use tropical::{CostMatrix, ExtReal, Plan};
