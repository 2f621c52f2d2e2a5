//! Folding a diagram into its monolithic cost matrix.

use crate::diagram::{AlignedDiagram, Diagram, Factor};
use crate::error::{Error, Result};
use crate::tropical::CostMatrix;

/// Structural recursion over the diagram: a leaf contributes its matrix, an
/// identity its identity cost matrix, `;` the min-plus product and `#` the
/// block sum. The result's shape equals the diagram's type.
pub fn compose_cost(d: &Diagram) -> Result<CostMatrix> {
    match d {
        Diagram::Leaf(l) => Ok((*l.cost).clone()),
        Diagram::Id(n) => CostMatrix::identity(*n),
        Diagram::Seq(a, b) => compose_cost(a)?.seq_compose(&compose_cost(b)?),
        Diagram::Par(a, b) => Ok(compose_cost(a)?.par_compose(&compose_cost(b)?)),
    }
}

/// Composes an aligned diagram layer by layer: within each layer the factors
/// are block-summed left to right, then the layers are folded into the head
/// left to right. This is the order the timing column of the experiment
/// runner measures.
pub fn compose_aligned(d: &AlignedDiagram) -> Result<CostMatrix> {
    let mut acc = (*d.head.cost).clone();
    for layer in &d.layers {
        let block = compose_layer(layer)?;
        acc = acc.seq_compose(&block)?;
    }
    Ok(acc)
}

fn compose_layer(layer: &[Factor]) -> Result<CostMatrix> {
    let mut factors = layer.iter();
    let first = factors
        .next()
        .ok_or_else(|| Error::Validation("empty layer in aligned diagram".into()))?;
    let mut acc = factor_cost(first)?;
    for f in factors {
        acc = acc.par_compose(&factor_cost(f)?);
    }
    Ok(acc)
}

fn factor_cost(f: &Factor) -> Result<CostMatrix> {
    match f {
        Factor::Leaf(l) => Ok((*l.cost).clone()),
        Factor::Id(n) => CostMatrix::identity(*n),
    }
}

/// Errors with the full list of ∞ positions unless the matrix is finite
/// everywhere. Composed matrices of aligned diagrams with finite leaves
/// always pass.
pub fn assert_finite(c: &CostMatrix) -> Result<()> {
    let entries = c.infinite_entries();
    if entries.is_empty() {
        Ok(())
    } else {
        Err(Error::InfiniteEntries { entries })
    }
}
