//! Diagram AST, textual DSL, typing, and the layered (aligned) normal form.
//!
//! The DSL follows the grammar
//!
//! ```text
//! diagram := seqterm
//! seqterm := parterm { ";" parterm }
//! parterm := atom { "#" atom }
//! atom    := IDENT | "id" "(" INT ")" | "(" seqterm ")"
//! ```
//!
//! `#` (parallel) binds tighter than `;` (sequential), both are
//! left-associative, and whitespace is insignificant. Identifiers name cost
//! matrices resolved through a loader callback; `id` is reserved.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tropical::CostMatrix;

/// A named open OT: a cost matrix with declared left/right boundary sizes and
/// no attached marginals.
#[derive(Clone, Debug, PartialEq)]
pub struct Leaf {
    pub name: String,
    pub cost: Arc<CostMatrix>,
}

impl Leaf {
    pub fn new(name: impl Into<String>, cost: Arc<CostMatrix>) -> Leaf {
        Leaf {
            name: name.into(),
            cost,
        }
    }

    pub fn left(&self) -> usize {
        self.cost.rows()
    }

    pub fn right(&self) -> usize {
        self.cost.cols()
    }
}

/// A string diagram of open OTs.
#[derive(Clone, Debug, PartialEq)]
pub enum Diagram {
    Leaf(Leaf),
    Id(usize),
    Seq(Box<Diagram>, Box<Diagram>),
    Par(Box<Diagram>, Box<Diagram>),
}

impl Diagram {
    pub fn leaf(name: impl Into<String>, cost: Arc<CostMatrix>) -> Diagram {
        Diagram::Leaf(Leaf::new(name, cost))
    }

    pub fn id(n: usize) -> Diagram {
        Diagram::Id(n)
    }

    pub fn seq(left: Diagram, right: Diagram) -> Diagram {
        Diagram::Seq(Box::new(left), Box::new(right))
    }

    pub fn par(top: Diagram, bottom: Diagram) -> Diagram {
        Diagram::Par(Box::new(top), Box::new(bottom))
    }

    /// Sequentially composes a nonempty list of diagrams, left to right.
    pub fn seq_chain(terms: Vec<Diagram>) -> Diagram {
        let mut it = terms.into_iter();
        let first = it.next().expect("seq_chain needs at least one term");
        it.fold(first, Diagram::seq)
    }

    /// Parallel-composes a nonempty list of diagrams, left to right.
    pub fn par_chain(terms: Vec<Diagram>) -> Diagram {
        let mut it = terms.into_iter();
        let first = it.next().expect("par_chain needs at least one term");
        it.fold(first, Diagram::par)
    }

    /// Names of all non-identity leaves, in left-to-right order.
    pub fn leaf_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_leaf_names(&mut out);
        out
    }

    fn collect_leaf_names(&self, out: &mut Vec<String>) {
        match self {
            Diagram::Leaf(l) => out.push(l.name.clone()),
            Diagram::Id(_) => {}
            Diagram::Seq(a, b) | Diagram::Par(a, b) => {
                a.collect_leaf_names(out);
                b.collect_leaf_names(out);
            }
        }
    }

    /// Distinct leaf matrices keyed by name. Errors if one name is bound to
    /// two different matrices.
    pub fn matrices(&self) -> Result<BTreeMap<String, Arc<CostMatrix>>> {
        let mut map = BTreeMap::new();
        self.collect_matrices(&mut map)?;
        Ok(map)
    }

    fn collect_matrices(&self, map: &mut BTreeMap<String, Arc<CostMatrix>>) -> Result<()> {
        match self {
            Diagram::Leaf(l) => {
                if let Some(existing) = map.get(&l.name) {
                    if **existing != *l.cost {
                        return Err(Error::Validation(format!(
                            "leaf name '{}' is bound to two different matrices",
                            l.name
                        )));
                    }
                } else {
                    map.insert(l.name.clone(), Arc::clone(&l.cost));
                }
                Ok(())
            }
            Diagram::Id(_) => Ok(()),
            Diagram::Seq(a, b) | Diagram::Par(a, b) => {
                a.collect_matrices(map)?;
                b.collect_matrices(map)
            }
        }
    }

    fn node_kind(&self) -> &'static str {
        match self {
            Diagram::Leaf(_) => "an open OT",
            Diagram::Id(_) => "an identity",
            Diagram::Seq(..) => "a sequential composition",
            Diagram::Par(..) => "a parallel composition",
        }
    }
}

/// The boundary sizes `left -> right` assigned by the typing rules.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DiagramType {
    pub left: usize,
    pub right: usize,
}

impl fmt::Display for DiagramType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -> {}", self.left, self.right)
    }
}

/// Infers the boundary type of a diagram, or reports the first ill-typed
/// sequential composition (the parallel rule and the axioms cannot fail).
pub fn type_check(d: &Diagram) -> Result<DiagramType> {
    match d {
        Diagram::Leaf(l) => Ok(DiagramType {
            left: l.left(),
            right: l.right(),
        }),
        Diagram::Id(n) => {
            if *n == 0 {
                return Err(Error::Validation(
                    "identity of size 0 has an empty boundary (deadend)".into(),
                ));
            }
            Ok(DiagramType {
                left: *n,
                right: *n,
            })
        }
        Diagram::Seq(a, b) => {
            let ta = type_check(a)?;
            let tb = type_check(b)?;
            if ta.right != tb.left {
                return Err(Error::CompositionMismatch {
                    left: summarize(a),
                    left_from: ta.left,
                    left_to: ta.right,
                    right: summarize(b),
                    right_from: tb.left,
                    right_to: tb.right,
                });
            }
            Ok(DiagramType {
                left: ta.left,
                right: tb.right,
            })
        }
        Diagram::Par(a, b) => {
            let ta = type_check(a)?;
            let tb = type_check(b)?;
            Ok(DiagramType {
                left: ta.left + tb.left,
                right: ta.right + tb.right,
            })
        }
    }
}

/// Truncated pretty-print for error messages.
fn summarize(d: &Diagram) -> String {
    let full = d.to_string();
    if full.len() > 48 {
        format!("{}...", &full[..45])
    } else {
        full
    }
}

// Pretty printer. Parentheses are inserted exactly where reparsing would
// otherwise regroup: right-nested operands of the same operator, and
// sequential terms under a parallel composition.
impl fmt::Display for Diagram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagram::Leaf(l) => write!(f, "{}", l.name),
            Diagram::Id(n) => write!(f, "id({n})"),
            Diagram::Seq(a, b) => {
                write!(f, "{a} ; ")?;
                if matches!(**b, Diagram::Seq(..)) {
                    write!(f, "({b})")
                } else {
                    write!(f, "{b}")
                }
            }
            Diagram::Par(a, b) => {
                if matches!(**a, Diagram::Seq(..)) {
                    write!(f, "({a})")?;
                } else {
                    write!(f, "{a}")?;
                }
                write!(f, " # ")?;
                if matches!(**b, Diagram::Seq(..) | Diagram::Par(..)) {
                    write!(f, "({b})")
                } else {
                    write!(f, "{b}")
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// DSL parser
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(usize),
    Semi,
    Hash,
    LParen,
    RParen,
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

fn tokenize(text: &str) -> Result<Vec<Spanned>> {
    let mut toks = Vec::new();
    let mut line = 1usize;
    let mut column = 1usize;
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        let (tline, tcol) = (line, column);
        let bump = |c: char, line: &mut usize, column: &mut usize| {
            if c == '\n' {
                *line += 1;
                *column = 1;
            } else {
                *column += 1;
            }
        };
        match c {
            c if c.is_whitespace() => {
                chars.next();
                bump(c, &mut line, &mut column);
            }
            ';' | '#' | '(' | ')' => {
                chars.next();
                bump(c, &mut line, &mut column);
                let tok = match c {
                    ';' => Tok::Semi,
                    '#' => Tok::Hash,
                    '(' => Tok::LParen,
                    _ => Tok::RParen,
                };
                toks.push(Spanned {
                    tok,
                    line: tline,
                    column: tcol,
                });
            }
            c if c.is_ascii_digit() => {
                let mut s = String::new();
                while let Some(&d) = chars.peek() {
                    if d.is_ascii_digit() {
                        s.push(d);
                        chars.next();
                        bump(d, &mut line, &mut column);
                    } else {
                        break;
                    }
                }
                let n: usize = s.parse().map_err(|_| Error::Parse {
                    line: tline,
                    column: tcol,
                    message: format!("integer '{s}' is out of range"),
                })?;
                toks.push(Spanned {
                    tok: Tok::Int(n),
                    line: tline,
                    column: tcol,
                });
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut s = String::new();
                while let Some(&d) = chars.peek() {
                    if d.is_ascii_alphanumeric() || d == '_' {
                        s.push(d);
                        chars.next();
                        bump(d, &mut line, &mut column);
                    } else {
                        break;
                    }
                }
                toks.push(Spanned {
                    tok: Tok::Ident(s),
                    line: tline,
                    column: tcol,
                });
            }
            other => {
                return Err(Error::Parse {
                    line: tline,
                    column: tcol,
                    message: format!("unexpected character '{other}'"),
                });
            }
        }
    }
    Ok(toks)
}

/// Resolves a leaf name to its cost matrix while parsing.
pub type MatrixLoader<'a> = dyn FnMut(&str) -> Result<Arc<CostMatrix>> + 'a;

struct Parser<'a, 'b> {
    toks: Vec<Spanned>,
    pos: usize,
    end_line: usize,
    end_column: usize,
    loader: &'b mut MatrixLoader<'a>,
}

impl<'a, 'b> Parser<'a, 'b> {
    fn peek(&self) -> Option<&Spanned> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Spanned> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn err_here(&self, message: String) -> Error {
        let (line, column) = match self.peek() {
            Some(t) => (t.line, t.column),
            None => (self.end_line, self.end_column),
        };
        Error::Parse {
            line,
            column,
            message,
        }
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<()> {
        match self.next() {
            Some(t) if t.tok == want => Ok(()),
            Some(t) => Err(Error::Parse {
                line: t.line,
                column: t.column,
                message: format!("expected {what}, found {}", describe_tok(&t.tok)),
            }),
            None => Err(Error::Parse {
                line: self.end_line,
                column: self.end_column,
                message: format!("expected {what}, found end of input"),
            }),
        }
    }

    fn seqterm(&mut self) -> Result<Diagram> {
        let mut acc = self.parterm()?;
        while matches!(self.peek().map(|t| &t.tok), Some(Tok::Semi)) {
            self.next();
            let rhs = self.parterm()?;
            acc = Diagram::seq(acc, rhs);
        }
        Ok(acc)
    }

    fn parterm(&mut self) -> Result<Diagram> {
        let mut acc = self.atom()?;
        while matches!(self.peek().map(|t| &t.tok), Some(Tok::Hash)) {
            self.next();
            let rhs = self.atom()?;
            acc = Diagram::par(acc, rhs);
        }
        Ok(acc)
    }

    fn atom(&mut self) -> Result<Diagram> {
        match self.next() {
            Some(Spanned {
                tok: Tok::Ident(name),
                line,
                column,
            }) => {
                if name == "id" {
                    self.expect(Tok::LParen, "'(' after 'id'")?;
                    let n = match self.next() {
                        Some(Spanned {
                            tok: Tok::Int(n), ..
                        }) => n,
                        _ => {
                            return Err(Error::Parse {
                                line,
                                column,
                                message: "expected a positive integer in id(...)".into(),
                            })
                        }
                    };
                    self.expect(Tok::RParen, "')' closing id(...)")?;
                    if n == 0 {
                        return Err(Error::Parse {
                            line,
                            column,
                            message: "id(0) has an empty boundary (deadend)".into(),
                        });
                    }
                    Ok(Diagram::Id(n))
                } else {
                    let cost = (self.loader)(&name)?;
                    Ok(Diagram::Leaf(Leaf { name, cost }))
                }
            }
            Some(Spanned {
                tok: Tok::LParen, ..
            }) => {
                let inner = self.seqterm()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(inner)
            }
            Some(t) => Err(Error::Parse {
                line: t.line,
                column: t.column,
                message: format!(
                    "expected an identifier, id(n) or '(', found {}",
                    describe_tok(&t.tok)
                ),
            }),
            None => Err(self.err_here("unexpected end of input".into())),
        }
    }
}

fn describe_tok(tok: &Tok) -> String {
    match tok {
        Tok::Ident(s) => format!("identifier '{s}'"),
        Tok::Int(n) => format!("integer '{n}'"),
        Tok::Semi => "';'".into(),
        Tok::Hash => "'#'".into(),
        Tok::LParen => "'('".into(),
        Tok::RParen => "')'".into(),
    }
}

/// Parses DSL text into a diagram, resolving every leaf name through the
/// loader. The parse is deterministic and whitespace-insensitive.
pub fn parse_diagram(text: &str, loader: &mut MatrixLoader<'_>) -> Result<Diagram> {
    let toks = tokenize(text)?;
    let end_line = text.lines().count().max(1);
    let end_column = text.lines().last().map_or(1, |l| l.chars().count() + 1);
    let mut parser = Parser {
        toks,
        pos: 0,
        end_line,
        end_column,
        loader,
    };
    if parser.peek().is_none() {
        return Err(parser.err_here("empty diagram".into()));
    }
    let d = parser.seqterm()?;
    if let Some(t) = parser.peek() {
        return Err(Error::Parse {
            line: t.line,
            column: t.column,
            message: format!("unexpected {} after diagram", describe_tok(&t.tok)),
        });
    }
    Ok(d)
}

// ---------------------------------------------------------------------------
// Aligned form
// ---------------------------------------------------------------------------

/// One factor of an aligned layer: an open OT or an identity wire bundle.
#[derive(Clone, Debug, PartialEq)]
pub enum Factor {
    Leaf(Leaf),
    Id(usize),
}

impl Factor {
    pub fn left(&self) -> usize {
        match self {
            Factor::Leaf(l) => l.left(),
            Factor::Id(n) => *n,
        }
    }

    pub fn right(&self) -> usize {
        match self {
            Factor::Leaf(l) => l.right(),
            Factor::Id(n) => *n,
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, Factor::Id(_))
    }
}

/// The layered normal form: a head open OT followed by layers of parallel
/// factors, with consecutive boundary sums agreeing.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignedDiagram {
    pub head: Leaf,
    pub layers: Vec<Vec<Factor>>,
}

pub fn layer_left_sum(layer: &[Factor]) -> usize {
    layer.iter().map(Factor::left).sum()
}

pub fn layer_right_sum(layer: &[Factor]) -> usize {
    layer.iter().map(Factor::right).sum()
}

impl AlignedDiagram {
    pub fn source_size(&self) -> usize {
        self.head.left()
    }

    pub fn target_size(&self) -> usize {
        match self.layers.last() {
            Some(layer) => layer_right_sum(layer),
            None => self.head.right(),
        }
    }

    pub fn type_of(&self) -> DiagramType {
        DiagramType {
            left: self.source_size(),
            right: self.target_size(),
        }
    }

    /// Number of open OTs (the head plus all non-identity factors).
    pub fn oot_count(&self) -> usize {
        1 + self
            .layers
            .iter()
            .flatten()
            .filter(|f| !f.is_identity())
            .count()
    }

    /// Names of all non-identity leaves, head first.
    pub fn leaf_names(&self) -> Vec<String> {
        let mut names = vec![self.head.name.clone()];
        for layer in &self.layers {
            for factor in layer {
                if let Factor::Leaf(l) = factor {
                    names.push(l.name.clone());
                }
            }
        }
        names
    }

    /// Rebuilds the equivalent diagram term.
    pub fn to_diagram(&self) -> Diagram {
        let mut d = Diagram::Leaf(self.head.clone());
        for layer in &self.layers {
            let factors = layer
                .iter()
                .map(|f| match f {
                    Factor::Leaf(l) => Diagram::Leaf(l.clone()),
                    Factor::Id(n) => Diagram::Id(*n),
                })
                .collect();
            d = Diagram::seq(d, Diagram::par_chain(factors));
        }
        d
    }

    pub fn validate(&self) -> ValidationReport {
        validate_aligned(self)
    }
}

/// Reduces a well-typed, left-rooted diagram to its layered normal form.
///
/// Sequential compositions concatenate layer lists; for a parallel
/// composition the shorter operand is padded on the right with identity
/// layers sized to its right boundary, and layers are then merged pairwise.
/// Non-identity leaves are preserved one for one, and the composed cost
/// matrix of the result equals that of the input.
pub fn to_sequential_normal_form(d: &Diagram) -> Result<AlignedDiagram> {
    type_check(d)?;
    let mut terms = Vec::new();
    flatten_seq(d, &mut terms);
    let head = match terms[0] {
        Diagram::Leaf(l) => l.clone(),
        other => return Err(Error::NotLeftRooted(other.node_kind().into())),
    };
    let mut layers = Vec::new();
    for term in &terms[1..] {
        layers.extend(normal_layers(term));
    }
    Ok(AlignedDiagram { head, layers })
}

fn flatten_seq<'d>(d: &'d Diagram, out: &mut Vec<&'d Diagram>) {
    match d {
        Diagram::Seq(a, b) => {
            flatten_seq(a, out);
            flatten_seq(b, out);
        }
        other => out.push(other),
    }
}

fn normal_layers(d: &Diagram) -> Vec<Vec<Factor>> {
    match d {
        Diagram::Leaf(l) => vec![vec![Factor::Leaf(l.clone())]],
        Diagram::Id(n) => vec![vec![Factor::Id(*n)]],
        Diagram::Seq(a, b) => {
            let mut layers = normal_layers(a);
            layers.extend(normal_layers(b));
            layers
        }
        Diagram::Par(a, b) => {
            let mut top = normal_layers(a);
            let mut bottom = normal_layers(b);
            let top_right = layer_right_sum(top.last().expect("nonempty"));
            let bottom_right = layer_right_sum(bottom.last().expect("nonempty"));
            while top.len() < bottom.len() {
                top.push(vec![Factor::Id(top_right)]);
            }
            while bottom.len() < top.len() {
                bottom.push(vec![Factor::Id(bottom_right)]);
            }
            top.into_iter()
                .zip(bottom)
                .map(|(mut t, b)| {
                    t.extend(b);
                    t
                })
                .collect()
        }
    }
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// Outcome of aligned-form validation: violations are fatal, warnings are
/// advisory (currently only ∞ entries inside leaf cost matrices, which the
/// reduction tolerates but downstream solvers may not).
#[derive(Clone, Debug, Default)]
pub struct ValidationReport {
    pub violations: Vec<String>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<ValidationReport> {
        if self.is_ok() {
            Ok(self)
        } else {
            Err(Error::Validation(self.violations.join("\n")))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            write!(f, "ok")?;
        } else {
            for v in &self.violations {
                writeln!(f, "violation: {v}")?;
            }
        }
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        Ok(())
    }
}

/// Checks the aligned-form side conditions: no zero-sized factors (deadends)
/// and boundary sums that agree between consecutive layers.
pub fn validate_aligned(d: &AlignedDiagram) -> ValidationReport {
    let mut report = ValidationReport::default();

    if d.head.left() == 0 || d.head.right() == 0 {
        report.violations.push(format!(
            "head '{}' has a zero-sized boundary (deadend)",
            d.head.name
        ));
    }
    if d.head.cost.has_infinite() {
        report.warnings.push(format!(
            "leaf '{}' contains inf entries",
            d.head.name
        ));
    }

    let mut expected = d.head.right();
    for (layer_idx, layer) in d.layers.iter().enumerate() {
        for (factor_idx, factor) in layer.iter().enumerate() {
            if factor.left() == 0 || factor.right() == 0 {
                report.violations.push(format!(
                    "factor {} of layer {} has a zero-sized boundary (deadend)",
                    factor_idx + 1,
                    layer_idx + 1
                ));
            }
            if let Factor::Leaf(l) = factor {
                if l.cost.has_infinite() {
                    report
                        .warnings
                        .push(format!("leaf '{}' contains inf entries", l.name));
                }
            }
        }
        let found = layer_left_sum(layer);
        if found != expected {
            report.violations.push(format!(
                "boundary mismatch at layer {}: {expected} != {found}",
                layer_idx + 1
            ));
        }
        expected = layer_right_sum(layer);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: usize, cols: usize) -> Arc<CostMatrix> {
        Arc::new(
            CostMatrix::from_rows(
                &(0..rows)
                    .map(|i| (0..cols).map(|j| (i * cols + j) as f64).collect())
                    .collect::<Vec<_>>(),
            )
            .unwrap(),
        )
    }

    fn loader_with(shapes: &[(&str, usize, usize)]) -> impl FnMut(&str) -> Result<Arc<CostMatrix>> {
        let table: BTreeMap<String, Arc<CostMatrix>> = shapes
            .iter()
            .map(|(name, m, n)| (name.to_string(), matrix(*m, *n)))
            .collect();
        move |name: &str| {
            table
                .get(name)
                .cloned()
                .ok_or_else(|| Error::UnknownLeaf(name.to_string()))
        }
    }

    #[test]
    fn parse_basic_shape() {
        let mut loader = loader_with(&[("A", 2, 4), ("B", 1, 2)]);
        let d = parse_diagram("A ; (B # id(3))", &mut loader).unwrap();
        match &d {
            Diagram::Seq(a, rest) => {
                assert!(matches!(**a, Diagram::Leaf(ref l) if l.name == "A"));
                match &**rest {
                    Diagram::Par(b, i) => {
                        assert!(matches!(**b, Diagram::Leaf(ref l) if l.name == "B"));
                        assert_eq!(**i, Diagram::Id(3));
                    }
                    other => panic!("expected Par, got {other:?}"),
                }
            }
            other => panic!("expected Seq, got {other:?}"),
        }
        assert_eq!(type_check(&d).unwrap(), DiagramType { left: 2, right: 5 });
    }

    #[test]
    fn hash_binds_tighter_than_semi() {
        let mut loader = loader_with(&[("A", 2, 3), ("B", 2, 2), ("C", 1, 1)]);
        let d = parse_diagram("A ; B # C", &mut loader).unwrap();
        assert!(matches!(&d, Diagram::Seq(_, rhs) if matches!(**rhs, Diagram::Par(..))));
    }

    #[test]
    fn parse_four_region_example() {
        // A ; (B # id(3)) ; (C # D)  with A : 2 -> 4, B : 1 -> 2, so the
        // middle boundary is 2 + 3 = 5 and the tail splits it as 2 + 3.
        let mut loader = loader_with(&[("A", 2, 4), ("B", 1, 2), ("C", 2, 2), ("D", 3, 1)]);
        let d = parse_diagram("A ; (B # id(3)) ; (C # D)", &mut loader).unwrap();
        assert_eq!(type_check(&d).unwrap(), DiagramType { left: 2, right: 3 });
    }

    #[test]
    fn parse_errors_carry_position() {
        let mut loader = loader_with(&[("A", 2, 2)]);
        match parse_diagram("A ;", &mut loader) {
            Err(Error::Parse { line, column, .. }) => {
                assert_eq!(line, 1);
                assert_eq!(column, 4);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(matches!(
            parse_diagram("A $ B", &mut loader),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            parse_diagram("", &mut loader),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            parse_diagram("A B", &mut loader),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            parse_diagram("id(0)", &mut loader),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn parse_unknown_leaf() {
        let mut loader = loader_with(&[("A", 2, 2)]);
        assert!(matches!(
            parse_diagram("A ; Z", &mut loader),
            Err(Error::UnknownLeaf(name)) if name == "Z"
        ));
    }

    #[test]
    fn type_check_leaf_and_mismatch() {
        let a = Diagram::leaf("A", matrix(2, 4));
        assert_eq!(type_check(&a).unwrap(), DiagramType { left: 2, right: 4 });

        let bad = Diagram::seq(
            Diagram::leaf("A", matrix(2, 4)),
            Diagram::leaf("B", matrix(3, 1)),
        );
        match type_check(&bad) {
            Err(Error::CompositionMismatch {
                left_to, right_from, ..
            }) => {
                assert_eq!((left_to, right_from), (4, 3));
            }
            other => panic!("expected mismatch, got {other:?}"),
        }
    }

    #[test]
    fn pretty_print_round_trip() {
        let mut loader = loader_with(&[("A", 2, 4), ("B", 1, 2), ("C", 2, 2), ("D", 3, 1)]);
        let src = "A ; (B # id(3)) ; (C # D)";
        let d = parse_diagram(src, &mut loader).unwrap();
        let printed = d.to_string();
        let reparsed = parse_diagram(&printed, &mut loader).unwrap();
        assert_eq!(d, reparsed);
    }

    #[test]
    fn pretty_print_parenthesizes_right_nesting() {
        let m = matrix(2, 2);
        let right_nested = Diagram::seq(
            Diagram::leaf("A", Arc::clone(&m)),
            Diagram::seq(
                Diagram::leaf("B", Arc::clone(&m)),
                Diagram::leaf("C", Arc::clone(&m)),
            ),
        );
        assert_eq!(right_nested.to_string(), "A ; (B ; C)");

        let seq_in_par = Diagram::par(
            Diagram::seq(
                Diagram::leaf("A", Arc::clone(&m)),
                Diagram::leaf("B", Arc::clone(&m)),
            ),
            Diagram::leaf("C", m),
        );
        assert_eq!(seq_in_par.to_string(), "(A ; B) # C");
    }

    #[test]
    fn normal_form_fixpoint_on_aligned_input() {
        let mut loader = loader_with(&[("A", 2, 4), ("B", 1, 2)]);
        let d = parse_diagram("A ; (B # id(3))", &mut loader).unwrap();
        let nf = to_sequential_normal_form(&d).unwrap();
        assert_eq!(nf.head.name, "A");
        assert_eq!(nf.layers.len(), 1);
        assert_eq!(nf.layers[0].len(), 2);
        assert!(matches!(nf.layers[0][0], Factor::Leaf(ref l) if l.name == "B"));
        assert_eq!(nf.layers[0][1], Factor::Id(3));
    }

    #[test]
    fn normal_form_pads_parallel_depth() {
        // A ; ((B ; C) # D)  =>  head A, layers [[B, D], [C, id(right of D)]]
        let mut loader = loader_with(&[("A", 2, 5), ("B", 2, 2), ("C", 2, 4), ("D", 3, 3)]);
        let d = parse_diagram("A ; ((B ; C) # D)", &mut loader).unwrap();
        let nf = to_sequential_normal_form(&d).unwrap();
        assert_eq!(nf.layers.len(), 2);
        assert!(matches!(nf.layers[0][0], Factor::Leaf(ref l) if l.name == "B"));
        assert!(matches!(nf.layers[0][1], Factor::Leaf(ref l) if l.name == "D"));
        assert!(matches!(nf.layers[1][0], Factor::Leaf(ref l) if l.name == "C"));
        assert_eq!(nf.layers[1][1], Factor::Id(3));
        assert_eq!(type_check(&d).unwrap(), nf.type_of());
        assert!(validate_aligned(&nf).is_ok());
    }

    #[test]
    fn normal_form_rejects_par_or_id_head() {
        let mut loader = loader_with(&[("B", 1, 2), ("C", 1, 2)]);
        let d = parse_diagram("(B # C) ; id(4)", &mut loader).unwrap();
        assert!(matches!(
            to_sequential_normal_form(&d),
            Err(Error::NotLeftRooted(_))
        ));
        let d = parse_diagram("id(2) ; B # C", &mut loader).unwrap();
        assert!(matches!(
            to_sequential_normal_form(&d),
            Err(Error::NotLeftRooted(_))
        ));
    }

    #[test]
    fn validate_reports_boundary_mismatch() {
        let aligned = AlignedDiagram {
            head: Leaf::new("A", matrix(2, 4)),
            layers: vec![vec![
                Factor::Leaf(Leaf::new("B", matrix(1, 2))),
                Factor::Id(2),
            ]],
        };
        let report = validate_aligned(&aligned);
        assert!(!report.is_ok());
        assert!(report.violations[0].contains("4 != 3"));
    }

    #[test]
    fn validate_accepts_consistent_layers() {
        let aligned = AlignedDiagram {
            head: Leaf::new("A", matrix(2, 4)),
            layers: vec![vec![
                Factor::Leaf(Leaf::new("B", matrix(1, 2))),
                Factor::Id(3),
            ]],
        };
        assert!(validate_aligned(&aligned).is_ok());
    }

    #[test]
    fn validate_flags_infinite_leaf_as_warning() {
        let inf_mat = Arc::new(
            CostMatrix::from_rows(&[vec![1.0, f64::INFINITY], vec![0.0, 2.0]]).unwrap(),
        );
        let aligned = AlignedDiagram {
            head: Leaf::new("A", inf_mat),
            layers: vec![],
        };
        let report = validate_aligned(&aligned);
        assert!(report.is_ok());
        assert_eq!(report.warnings.len(), 1);
    }

    #[test]
    fn duplicate_names_must_share_matrices() {
        let d = Diagram::seq(
            Diagram::leaf("A", matrix(2, 2)),
            Diagram::leaf("A", matrix(2, 3)),
        );
        assert!(d.matrices().is_err());
    }
}
