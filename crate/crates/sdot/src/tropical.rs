//! Extended-real scalars and cost-matrix algebra over the min-tropical
//! semiring (R ∪ {∞}, min, +).
//!
//! Two compositions are defined on cost matrices: the sequential composition
//! (the min-plus matrix product, which collects cheapest paths through a
//! shared boundary) and the parallel composition (the block matrix with ∞ in
//! the off-blocks, which forbids jumping between the two components). The
//! pairing of a cost matrix with a mass matrix uses the convention ∞ · 0 = 0,
//! so forbidden cells carrying no mass contribute nothing.

use std::fmt;
use std::iter::Sum;
use std::ops::Add;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// A cost: a finite real or positive infinity.
///
/// NaN and -∞ are rejected at construction, so tropical arithmetic never has
/// to consider IEEE special cases; the one place where IEEE semantics would
/// give the wrong answer (∞ · 0 in [`CostMatrix::pairing`]) is handled by
/// explicit case analysis.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub enum ExtReal {
    Finite(f64),
    Infinity,
}

impl ExtReal {
    pub const INFINITY: ExtReal = ExtReal::Infinity;

    /// Wraps a float, mapping `f64::INFINITY` to [`ExtReal::Infinity`].
    ///
    /// Panics on NaN and -∞, which are not elements of the semiring.
    pub fn from_f64(value: f64) -> ExtReal {
        assert!(!value.is_nan(), "NaN is not a valid cost");
        assert!(value != f64::NEG_INFINITY, "-inf is not a valid cost");
        if value == f64::INFINITY {
            ExtReal::Infinity
        } else {
            ExtReal::Finite(value)
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn finite_value(self) -> Option<f64> {
        match self {
            ExtReal::Finite(v) => Some(v),
            ExtReal::Infinity => None,
        }
    }

    /// The raw float, with ∞ mapped to `f64::INFINITY`.
    pub fn as_f64(self) -> f64 {
        match self {
            ExtReal::Finite(v) => v,
            ExtReal::Infinity => f64::INFINITY,
        }
    }

    /// Tropical addition: the smaller of the two; ∞ is the neutral element.
    pub fn min(self, other: ExtReal) -> ExtReal {
        if self <= other {
            self
        } else {
            other
        }
    }
}

/// Tropical multiplication: real addition with ∞ absorbing.
impl Add for ExtReal {
    type Output = ExtReal;

    fn add(self, other: ExtReal) -> ExtReal {
        match (self, other) {
            (ExtReal::Finite(x), ExtReal::Finite(y)) => ExtReal::Finite(x + y),
            _ => ExtReal::Infinity,
        }
    }
}

impl Sum for ExtReal {
    fn sum<I: Iterator<Item = ExtReal>>(iter: I) -> ExtReal {
        iter.fold(ExtReal::Finite(0.0), Add::add)
    }
}

/// Formats as the file-format token: `inf` for ∞, otherwise the shortest
/// decimal string that parses back to the same bits.
impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::Finite(v) => write!(f, "{v}"),
            ExtReal::Infinity => write!(f, "inf"),
        }
    }
}

impl FromStr for ExtReal {
    type Err = Error;

    fn from_str(s: &str) -> Result<ExtReal> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("inf") {
            return Ok(ExtReal::Infinity);
        }
        let v: f64 = s
            .parse()
            .map_err(|_| Error::InvalidMatrix(format!("cannot parse entry '{s}'")))?;
        if v.is_nan() || v == f64::NEG_INFINITY {
            return Err(Error::InvalidMatrix(format!(
                "entry '{s}' is not a finite real or inf"
            )));
        }
        Ok(ExtReal::from_f64(v))
    }
}

/// Work threshold (in min-plus terms m·l·n) above which the sequential
/// composition kernel parallelizes across output rows.
const PAR_WORK_THRESHOLD: usize = 1 << 20;

/// A dense m×n matrix of extended-real costs with an immutable shape.
///
/// Entries are stored as raw `f64` (finite or `f64::INFINITY`, never NaN and
/// never -∞); with -∞ excluded, IEEE `+` and `min` coincide with the tropical
/// case analysis, so the composition kernels run branch-free on the raw
/// representation.
#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    /// Builds an m×n matrix from row-major entries. Both dimensions must be
    /// at least 1 (a zero-sized boundary is a deadend).
    pub fn new(rows: usize, cols: usize, entries: Vec<ExtReal>) -> Result<CostMatrix> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidMatrix(format!(
                "matrix shape {rows}x{cols} has an empty boundary (deadend)"
            )));
        }
        if entries.len() != rows * cols {
            return Err(Error::InvalidMatrix(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                entries.len()
            )));
        }
        Ok(CostMatrix {
            rows,
            cols,
            data: entries.iter().map(|e| e.as_f64()).collect(),
        })
    }

    /// Builds from rows of raw floats; `f64::INFINITY` denotes ∞.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<CostMatrix> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::InvalidMatrix(
                "matrix must have at least one row and one column".into(),
            ));
        }
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::InvalidMatrix(format!(
                    "row {} has {} entries, expected {cols}",
                    i + 1,
                    row.len()
                )));
            }
            for &v in row {
                if v.is_nan() || v == f64::NEG_INFINITY {
                    return Err(Error::InvalidMatrix(
                        "entries must be finite reals or inf".into(),
                    ));
                }
                data.push(v);
            }
        }
        Ok(CostMatrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// The 0×0 matrix: the unit of the parallel composition.
    pub fn unit() -> CostMatrix {
        CostMatrix {
            rows: 0,
            cols: 0,
            data: Vec::new(),
        }
    }

    /// The identity cost matrix: 0 on the diagonal, ∞ elsewhere. Composing
    /// with it sequentially is a no-op. Size 0 is rejected (deadend).
    pub fn identity(n: usize) -> Result<CostMatrix> {
        if n == 0 {
            return Err(Error::InvalidMatrix(
                "identity of size 0 has an empty boundary (deadend)".into(),
            ));
        }
        let mut data = vec![f64::INFINITY; n * n];
        for i in 0..n {
            data[i * n + i] = 0.0;
        }
        Ok(CostMatrix {
            rows: n,
            cols: n,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> ExtReal {
        ExtReal::from_f64(self.data[row * self.cols + col])
    }

    /// Row-major raw entries (finite or `f64::INFINITY`).
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// The largest finite entry, if any.
    pub fn max_finite(&self) -> Option<f64> {
        self.data
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .fold(None, |acc, v| Some(acc.map_or(v, |m: f64| m.max(v))))
    }

    pub fn has_infinite(&self) -> bool {
        self.data.iter().any(|v| !v.is_finite())
    }

    /// Every (row, col) with an ∞ entry, in row-major order (0-based).
    pub fn infinite_entries(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.rows {
            for j in 0..self.cols {
                if !self.data[i * self.cols + j].is_finite() {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Sequential composition: the min-plus matrix product
    /// `(self ; rhs)[i][j] = min_k self[i][k] + rhs[k][j]`.
    ///
    /// Requires `self.cols == rhs.rows`. The right operand is transposed once
    /// so the innermost k-loop reads both operands contiguously; rows of the
    /// output are computed in parallel when the instance is large enough,
    /// which leaves the result bit-identical to the sequential order.
    pub fn seq_compose(&self, rhs: &CostMatrix) -> Result<CostMatrix> {
        if self.cols != rhs.rows {
            return Err(Error::ShapeMismatch {
                op: "sequential composition",
                left_rows: self.rows,
                left_cols: self.cols,
                right_rows: rhs.rows,
                right_cols: rhs.cols,
            });
        }
        let (m, l, n) = (self.rows, self.cols, rhs.cols);

        let mut rhs_t = vec![0.0f64; n * l];
        for k in 0..l {
            for j in 0..n {
                rhs_t[j * l + k] = rhs.data[k * n + j];
            }
        }

        let fill_row = |i: usize, out_row: &mut [f64]| {
            let lhs_row = &self.data[i * l..(i + 1) * l];
            for (j, out) in out_row.iter_mut().enumerate() {
                let rhs_col = &rhs_t[j * l..(j + 1) * l];
                let mut best = f64::INFINITY;
                for k in 0..l {
                    let s = lhs_row[k] + rhs_col[k];
                    if s < best {
                        best = s;
                    }
                }
                *out = best;
            }
        };

        let mut data = vec![f64::INFINITY; m * n];
        let work = m.saturating_mul(l).saturating_mul(n);
        if work >= PAR_WORK_THRESHOLD && m > 1 {
            data.par_chunks_mut(n)
                .enumerate()
                .for_each(|(i, row)| fill_row(i, row));
        } else {
            for (i, row) in data.chunks_mut(n).enumerate() {
                fill_row(i, row);
            }
        }
        Ok(CostMatrix {
            rows: m,
            cols: n,
            data,
        })
    }

    /// Parallel composition: the block matrix `[[self, ∞], [∞, rhs]]`.
    pub fn par_compose(&self, rhs: &CostMatrix) -> CostMatrix {
        let (m, n) = (self.rows, self.cols);
        let (k, l) = (rhs.rows, rhs.cols);
        let (out_rows, out_cols) = (m + k, n + l);
        let mut data = vec![f64::INFINITY; out_rows * out_cols];
        for i in 0..m {
            data[i * out_cols..i * out_cols + n].copy_from_slice(&self.data[i * n..(i + 1) * n]);
        }
        for i in 0..k {
            let start = (m + i) * out_cols + n;
            data[start..start + l].copy_from_slice(&rhs.data[i * l..(i + 1) * l]);
        }
        CostMatrix {
            rows: out_rows,
            cols: out_cols,
            data,
        }
    }

    /// The pairing `Σ_{ij} C[i][j] · P[i][j]` with the convention ∞ · 0 = 0:
    /// the result is ∞ exactly when some positive mass sits on an ∞ cost.
    pub fn pairing(&self, plan: &Plan) -> Result<ExtReal> {
        if self.rows != plan.rows || self.cols != plan.cols {
            return Err(Error::ShapeMismatch {
                op: "pairing",
                left_rows: self.rows,
                left_cols: self.cols,
                right_rows: plan.rows,
                right_cols: plan.cols,
            });
        }
        let mut total = 0.0;
        for (&c, &w) in self.data.iter().zip(plan.data.iter()) {
            debug_assert!(w >= 0.0);
            if w == 0.0 {
                continue;
            }
            if !c.is_finite() {
                return Ok(ExtReal::Infinity);
            }
            total += c * w;
        }
        Ok(ExtReal::Finite(total))
    }

    /// Parses the plain-text matrix format: one row per line, comma-separated
    /// entries, the token `inf` for ∞. Blank lines are ignored.
    pub fn parse_csv(text: &str) -> Result<CostMatrix> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|tok| tok.parse::<ExtReal>().map(ExtReal::as_f64))
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        CostMatrix::from_rows(&rows)
    }

    /// Writes the plain-text matrix format. Finite entries round-trip
    /// bit-exactly through `parse_csv`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.rows {
            for j in 0..self.cols {
                if j > 0 {
                    out.push(',');
                }
                out.push_str(&self.get(i, j).to_string());
            }
            out.push('\n');
        }
        out
    }
}

/// A transportation plan: a dense m×n matrix of nonnegative finite mass.
#[derive(Clone, Debug, PartialEq)]
pub struct Plan {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Plan {
    pub fn new(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Plan> {
        if entries.len() != rows * cols {
            return Err(Error::InvalidMatrix(format!(
                "expected {} entries for a {rows}x{cols} plan, got {}",
                rows * cols,
                entries.len()
            )));
        }
        if let Some(&bad) = entries.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidMatrix(format!(
                "plan entries must be finite and nonnegative, got {bad}"
            )));
        }
        Ok(Plan {
            rows,
            cols,
            data: entries,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Plan {
        Plan {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Plan> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::InvalidMatrix("ragged plan rows".into()));
            }
            data.extend_from_slice(row);
        }
        Plan::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub(crate) fn set(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(value >= 0.0 && value.is_finite());
        self.data[row * self.cols + col] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows)
            .map(|i| self.data[i * self.cols..(i + 1) * self.cols].iter().sum())
            .collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (j, s) in sums.iter_mut().enumerate() {
                *s += self.data[i * self.cols + j];
            }
        }
        sums
    }

    pub fn total_mass(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Same plain-text format as cost matrices (without `inf` tokens).
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.rows {
            for j in 0..self.cols {
                if j > 0 {
                    out.push(',');
                }
                out.push_str(&self.get(i, j).to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<Plan> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|tok| {
                    tok.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::InvalidMatrix(format!("cannot parse entry '{tok}'")))
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::InvalidMatrix("empty plan file".into()));
        }
        Plan::from_rows(&rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[&[f64]]) -> CostMatrix {
        CostMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    const INF: f64 = f64::INFINITY;

    #[test]
    fn ext_add_cases() {
        assert_eq!(
            ExtReal::Finite(2.0) + ExtReal::Finite(3.0),
            ExtReal::Finite(5.0)
        );
        assert_eq!(ExtReal::Infinity + ExtReal::Finite(5.0), ExtReal::Infinity);
        assert_eq!(ExtReal::Finite(0.0) + ExtReal::Infinity, ExtReal::Infinity);
    }

    #[test]
    fn ext_min_cases() {
        assert_eq!(
            ExtReal::Finite(2.0).min(ExtReal::Finite(3.0)),
            ExtReal::Finite(2.0)
        );
        assert_eq!(
            ExtReal::Infinity.min(ExtReal::Finite(5.0)),
            ExtReal::Finite(5.0)
        );
        assert_eq!(ExtReal::Infinity.min(ExtReal::Infinity), ExtReal::Infinity);
    }

    #[test]
    fn ext_real_ordering() {
        assert!(ExtReal::Finite(1e300) < ExtReal::Infinity);
        assert!(ExtReal::Finite(-5.0) < ExtReal::Finite(0.0));
    }

    #[test]
    #[should_panic]
    fn ext_real_rejects_nan() {
        let _ = ExtReal::from_f64(f64::NAN);
    }

    #[test]
    fn seq_compose_small() {
        let c = mat(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let d = mat(&[&[5.0, 6.0], &[7.0, 8.0]]);
        let e = c.seq_compose(&d).unwrap();
        assert_eq!(e, mat(&[&[6.0, 7.0], &[8.0, 9.0]]));
    }

    #[test]
    fn seq_compose_identity_is_noop() {
        let c = mat(&[&[1.5, -2.0, 7.0], &[0.0, 3.25, 9.0]]);
        let id3 = CostMatrix::identity(3).unwrap();
        let id2 = CostMatrix::identity(2).unwrap();
        assert_eq!(c.seq_compose(&id3).unwrap(), c);
        assert_eq!(id2.seq_compose(&c).unwrap(), c);
    }

    #[test]
    fn seq_compose_infinite_paths() {
        let c = mat(&[&[0.0, INF]]);
        let d = mat(&[&[INF], &[0.0]]);
        let e = c.seq_compose(&d).unwrap();
        assert_eq!(e.get(0, 0), ExtReal::Infinity);
    }

    #[test]
    fn seq_compose_shape_mismatch() {
        let c = mat(&[&[1.0, 2.0]]);
        let d = mat(&[&[1.0]]);
        assert!(matches!(
            c.seq_compose(&d),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn par_compose_blocks() {
        let c = mat(&[&[1.0]]);
        let d = mat(&[&[2.0]]);
        assert_eq!(c.par_compose(&d), mat(&[&[1.0, INF], &[INF, 2.0]]));

        let c = mat(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let d = mat(&[&[7.0]]);
        assert_eq!(
            c.par_compose(&d),
            mat(&[
                &[1.0, 2.0, INF],
                &[3.0, 4.0, INF],
                &[INF, INF, 7.0]
            ])
        );
    }

    #[test]
    fn par_compose_shape_arithmetic() {
        let c = mat(&[&[0.0; 3], &[0.0; 3]]);
        let d = mat(&[&[0.0; 2]]);
        let e = c.par_compose(&d);
        assert_eq!((e.rows(), e.cols()), (3, 5));
    }

    #[test]
    fn par_compose_unit_is_identity() {
        let c = mat(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(CostMatrix::unit().par_compose(&c), c);
        assert_eq!(c.par_compose(&CostMatrix::unit()), c);
    }

    #[test]
    fn identity_matrix_entries() {
        assert_eq!(CostMatrix::identity(1).unwrap(), mat(&[&[0.0]]));
        assert_eq!(
            CostMatrix::identity(2).unwrap(),
            mat(&[&[0.0, INF], &[INF, 0.0]])
        );
        assert!(CostMatrix::identity(0).is_err());
    }

    #[test]
    fn pairing_infinity_convention() {
        let c = mat(&[&[INF]]);
        let zero = Plan::from_rows(&[vec![0.0]]).unwrap();
        assert_eq!(c.pairing(&zero).unwrap(), ExtReal::Finite(0.0));

        let positive = Plan::from_rows(&[vec![0.1]]).unwrap();
        assert_eq!(c.pairing(&positive).unwrap(), ExtReal::Infinity);
    }

    #[test]
    fn pairing_direct_sum() {
        let c = mat(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let p = Plan::from_rows(&[vec![0.5, 0.0], vec![0.0, 0.5]]).unwrap();
        assert_eq!(c.pairing(&p).unwrap(), ExtReal::Finite(2.5));
    }

    #[test]
    fn pairing_shape_mismatch() {
        let c = mat(&[&[1.0, 2.0]]);
        let p = Plan::from_rows(&[vec![1.0]]).unwrap();
        assert!(matches!(c.pairing(&p), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn infinite_entries_listing() {
        let c = mat(&[&[1.0, INF]]);
        assert_eq!(c.infinite_entries(), vec![(0, 1)]);
        let id = CostMatrix::identity(2).unwrap();
        assert_eq!(id.infinite_entries(), vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn csv_round_trip_bit_exact() {
        let c = mat(&[
            &[0.1, 1.0 / 3.0, INF],
            &[1e-300, 123456789.123456789, -2.5],
        ]);
        let text = c.to_csv();
        let back = CostMatrix::parse_csv(&text).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn csv_rejects_bad_entries() {
        assert!(CostMatrix::parse_csv("1,2\n3").is_err());
        assert!(CostMatrix::parse_csv("nan").is_err());
        assert!(CostMatrix::parse_csv("-inf").is_err());
        assert!(CostMatrix::parse_csv("").is_err());
        assert!(CostMatrix::parse_csv("1,abc").is_err());
    }

    #[test]
    fn csv_accepts_inf_token() {
        let c = CostMatrix::parse_csv("1, inf\ninf, 2\n").unwrap();
        assert_eq!(c, mat(&[&[1.0, INF], &[INF, 2.0]]));
    }

    #[test]
    fn plan_rejects_negative_mass() {
        assert!(Plan::from_rows(&[vec![0.5, -0.1]]).is_err());
    }

    #[test]
    fn big_seq_compose_matches_small_kernel() {
        // Past the parallel threshold the rayon path must agree with the
        // sequential one entry for entry.
        let m = 140;
        let lhs_rows: Vec<Vec<f64>> = (0..m)
            .map(|i| (0..m).map(|k| ((i * 31 + k * 17) % 97) as f64).collect())
            .collect();
        let rhs_rows: Vec<Vec<f64>> = (0..m)
            .map(|k| (0..m).map(|j| ((k * 13 + j * 7) % 89) as f64).collect())
            .collect();
        let a = CostMatrix::from_rows(&lhs_rows).unwrap();
        let b = CostMatrix::from_rows(&rhs_rows).unwrap();
        let fast = a.seq_compose(&b).unwrap();
        // reference: direct definition
        for i in 0..m {
            for j in (0..m).step_by(23) {
                let mut best = f64::INFINITY;
                for k in 0..m {
                    best = best.min(lhs_rows[i][k] + rhs_rows[k][j]);
                }
                assert_eq!(fast.get(i, j).as_f64(), best);
            }
        }
    }
}
