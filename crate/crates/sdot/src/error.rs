//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used by callers (e.g. the CLI exit codes) to tell
/// bad input apart from solver breakdowns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// The input is malformed or inconsistent (parse errors, shape errors,
    /// unbalanced marginals, failed diagram validation, I/O on bundles).
    Validation,
    /// A solver failed on a well-formed problem (infeasible, unbounded,
    /// non-convergence, iteration limits, numerical breakdown).
    Solver,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: left is {left_rows}x{left_cols}, right is {right_rows}x{right_cols}")]
    ShapeMismatch {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("invalid marginals: {0}")]
    InvalidMarginals(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unknown cost matrix '{0}'")]
    UnknownLeaf(String),

    #[error("cannot sequentially compose {left} : {left_from}->{left_to} with {right} : {right_from}->{right_to}: boundary sizes {left_to} and {right_from} differ")]
    CompositionMismatch {
        left: String,
        left_from: usize,
        left_to: usize,
        right: String,
        right_from: usize,
        right_to: usize,
    },

    #[error("diagram is not left-rooted: leftmost factor is {0}, expected a single open OT")]
    NotLeftRooted(String),

    #[error("diagram failed validation:\n{0}")]
    Validation(String),

    #[error("cost matrix has {} infinite entries, first at row {}, column {} (1-based)",
            .entries.len(), .entries[0].0 + 1, .entries[0].1 + 1)]
    InfiniteEntries { entries: Vec<(usize, usize)> },

    #[error("marginals are unbalanced: source mass {source_mass} differs from target mass {target_mass} by {}",
            (source_mass - target_mass).abs())]
    UnbalancedMarginals { source_mass: f64, target_mass: f64 },

    #[error("parallel composition is essentially unbalanced: {block} block has source mass {source_mass} but target mass {target_mass}")]
    EssentiallyUnbalanced {
        block: &'static str,
        source_mass: f64,
        target_mass: f64,
    },

    #[error("plan is infeasible for the given marginals: {0}")]
    InfeasiblePlan(String),

    #[error("Sinkhorn did not converge after {iterations} iterations: marginal violation {violation:e} exceeds tolerance {tolerance:e}")]
    NonConvergence {
        iterations: usize,
        violation: f64,
        tolerance: f64,
    },

    #[error("numerical underflow in Sinkhorn scaling; re-run in log-domain mode")]
    NumericalUnderflow,

    #[error("linear program is infeasible")]
    Infeasible,

    #[error("linear program is unbounded")]
    Unbounded,

    #[error("iteration limit of {0} exceeded")]
    IterationLimit(usize),

    #[error("invalid benchmark: {0}")]
    InvalidBenchmark(String),

    #[error("unknown preset '{0}'")]
    UnknownPreset(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::NonConvergence { .. }
            | Error::NumericalUnderflow
            | Error::Infeasible
            | Error::Unbounded
            | Error::IterationLimit(_) => ErrorKind::Solver,
            _ => ErrorKind::Validation,
        }
    }
}
