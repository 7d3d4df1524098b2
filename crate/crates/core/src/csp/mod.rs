//! Finite linear CSP data model and the Sugar-style s-expression front end.
//!
//! An instance is a set of integer variables with finite (possibly
//! non-contiguous) domains, a set of Boolean variables, and a list of
//! intensional, extensional and global constraints. The grammar accepted by
//! [`parse_instance`] is a practical subset of the Sugar input language:
//!
//! ```text
//! ; comment
//! (int x 1 10)              ; contiguous domain
//! (int y (0 2 (5 9)))       ; explicit values and ranges
//! (domain D 0 3) (int z D)  ; named domain
//! (bool p)
//! (relation R 2 (supports (1 2) (2 3)))
//! (R x y)                   ; extensional constraint
//! (imp p (<= (+ x (* 2 y)) 7))
//! (alldifferent x y z)
//! ```
//!
//! Anything whose head symbol is not a declaration, a Boolean connective, a
//! comparison, a declared relation or one of the supported globals is kept as
//! an opaque global with its name and arity.

mod eval;
mod parser;
mod print;

use std::collections::BTreeMap;
use std::fmt;

pub use eval::{check_assignment, EvalError};
pub use parser::{parse_instance, parse_instance_with_id, ParseError, ParseErrorKind, SExpr};

/// Finite set of integers stored as sorted, disjoint, non-adjacent closed
/// intervals.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Domain {
    intervals: Vec<(i64, i64)>,
}

impl Domain {
    /// Normalizes arbitrary intervals. Intervals with `lo > hi` are dropped.
    /// Returns `None` when the resulting set is empty.
    pub fn from_intervals<I>(intervals: I) -> Option<Self>
    where
        I: IntoIterator<Item = (i64, i64)>,
    {
        let mut raw: Vec<(i64, i64)> = intervals.into_iter().filter(|(lo, hi)| lo <= hi).collect();
        if raw.is_empty() {
            return None;
        }
        raw.sort_unstable();
        let mut merged: Vec<(i64, i64)> = Vec::with_capacity(raw.len());
        for (lo, hi) in raw {
            match merged.last_mut() {
                // adjacent or overlapping: lo <= prev_hi + 1
                Some(last) if (lo as i128) <= last.1 as i128 + 1 => last.1 = last.1.max(hi),
                _ => merged.push((lo, hi)),
            }
        }
        Some(Domain { intervals: merged })
    }

    pub fn range(lo: i64, hi: i64) -> Option<Self> {
        Self::from_intervals([(lo, hi)])
    }

    pub fn intervals(&self) -> &[(i64, i64)] {
        &self.intervals
    }

    pub fn contains(&self, value: i64) -> bool {
        // first interval whose upper end is >= value
        let idx = self.intervals.partition_point(|&(_, hi)| hi < value);
        self.intervals.get(idx).is_some_and(|&(lo, _)| lo <= value)
    }

    /// Number of values. Wide enough for any pair of `i64` bounds.
    pub fn size(&self) -> u128 {
        self.intervals.iter().map(|&(lo, hi)| (hi as i128 - lo as i128 + 1) as u128).sum()
    }

    pub fn is_contiguous(&self) -> bool {
        self.intervals.len() == 1
    }

    pub fn min(&self) -> i64 {
        self.intervals[0].0
    }

    pub fn max(&self) -> i64 {
        self.intervals[self.intervals.len() - 1].1
    }

    /// Iterates all values in ascending order.
    pub fn values(&self) -> impl Iterator<Item = i64> + '_ {
        self.intervals.iter().flat_map(|&(lo, hi)| lo..=hi)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntVar {
    pub name: String,
    pub domain: Domain,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoolVar {
    pub name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RelOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl RelOp {
    pub fn symbol(self) -> &'static str {
        match self {
            RelOp::Lt => "<",
            RelOp::Le => "<=",
            RelOp::Gt => ">",
            RelOp::Ge => ">=",
            RelOp::Eq => "=",
            RelOp::Ne => "!=",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        Some(match s {
            "<" | "lt" => RelOp::Lt,
            "<=" | "le" => RelOp::Le,
            ">" | "gt" => RelOp::Gt,
            ">=" | "ge" => RelOp::Ge,
            "=" | "eq" => RelOp::Eq,
            "!=" | "ne" => RelOp::Ne,
            _ => return None,
        })
    }

    pub fn holds(self, lhs: i64, rhs: i64) -> bool {
        match self {
            RelOp::Lt => lhs < rhs,
            RelOp::Le => lhs <= rhs,
            RelOp::Gt => lhs > rhs,
            RelOp::Ge => lhs >= rhs,
            RelOp::Eq => lhs == rhs,
            RelOp::Ne => lhs != rhs,
        }
    }
}

/// Integer-valued expression.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Term {
    Const(i64),
    Var(String),
    Neg(Box<Term>),
    Add(Vec<Term>),
    /// `(- a b c)` is `a - b - c`; always at least two operands.
    Sub(Vec<Term>),
    Mul(Vec<Term>),
    /// Floor division.
    Div(Box<Term>, Box<Term>),
    /// Remainder with the sign of the divisor (pairs with floor division).
    Mod(Box<Term>, Box<Term>),
    Abs(Box<Term>),
    Min(Vec<Term>),
    Max(Vec<Term>),
}

/// Boolean-valued expression.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Formula {
    Const(bool),
    BoolVar(String),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Imp(Box<Formula>, Box<Formula>),
    Iff(Box<Formula>, Box<Formula>),
    Xor(Box<Formula>, Box<Formula>),
    Rel(RelOp, Term, Term),
}

/// `Σ coefᵢ·varᵢ + constant` with unique variables and nonzero coefficients.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LinearExpr {
    pub terms: Vec<(i64, String)>,
    pub constant: i64,
}

impl LinearExpr {
    fn add_scaled(&mut self, other: &LinearExpr, factor: i64) -> Option<()> {
        self.constant = self.constant.checked_add(other.constant.checked_mul(factor)?)?;
        for (coef, var) in &other.terms {
            let scaled = coef.checked_mul(factor)?;
            match self.terms.iter_mut().find(|(_, v)| v == var) {
                Some(slot) => slot.0 = slot.0.checked_add(scaled)?,
                None => self.terms.push((scaled, var.clone())),
            }
        }
        self.terms.retain(|(c, _)| *c != 0);
        Some(())
    }

    fn scale(&self, factor: i64) -> Option<LinearExpr> {
        let mut out = LinearExpr::default();
        out.add_scaled(self, factor)?;
        Some(out)
    }
}

impl Term {
    /// Rewrites the term as a linear expression, if it is one. Products are
    /// linear only when at most one factor contains variables.
    pub fn linearize(&self) -> Option<LinearExpr> {
        match self {
            Term::Const(c) => Some(LinearExpr { terms: vec![], constant: *c }),
            Term::Var(v) => Some(LinearExpr { terms: vec![(1, v.clone())], constant: 0 }),
            Term::Neg(t) => t.linearize()?.scale(-1),
            Term::Add(ts) => {
                let mut acc = LinearExpr::default();
                for t in ts {
                    acc.add_scaled(&t.linearize()?, 1)?;
                }
                Some(acc)
            }
            Term::Sub(ts) => {
                let mut acc = LinearExpr::default();
                for (i, t) in ts.iter().enumerate() {
                    acc.add_scaled(&t.linearize()?, if i == 0 { 1 } else { -1 })?;
                }
                Some(acc)
            }
            Term::Mul(ts) => {
                let mut acc = LinearExpr { terms: vec![], constant: 1 };
                for t in ts {
                    let lin = t.linearize()?;
                    if lin.terms.is_empty() {
                        acc = acc.scale(lin.constant)?;
                    } else if acc.terms.is_empty() {
                        acc = lin.scale(acc.constant)?;
                    } else {
                        return None;
                    }
                }
                Some(acc)
            }
            Term::Div(..) | Term::Mod(..) | Term::Abs(_) | Term::Min(_) | Term::Max(_) => None,
        }
    }

    /// Pre-order visit of this term and all sub-terms.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Term)) {
        f(self);
        match self {
            Term::Const(_) | Term::Var(_) => {}
            Term::Neg(t) | Term::Abs(t) => t.visit(f),
            Term::Div(a, b) | Term::Mod(a, b) => {
                a.visit(f);
                b.visit(f);
            }
            Term::Add(ts) | Term::Sub(ts) | Term::Mul(ts) | Term::Min(ts) | Term::Max(ts) => {
                ts.iter().for_each(|t| t.visit(f))
            }
        }
    }

    pub fn collect_vars<'a>(&'a self, out: &mut Vec<&'a str>) {
        self.visit(&mut |t| {
            if let Term::Var(v) = t {
                out.push(v.as_str());
            }
        });
    }
}

impl Formula {
    /// Pre-order visit of formula nodes; terms are reached through
    /// [`Formula::visit_terms`].
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Formula)) {
        f(self);
        match self {
            Formula::Const(_) | Formula::BoolVar(_) | Formula::Rel(..) => {}
            Formula::Not(g) => g.visit(f),
            Formula::And(gs) | Formula::Or(gs) => gs.iter().for_each(|g| g.visit(f)),
            Formula::Imp(a, b) | Formula::Iff(a, b) | Formula::Xor(a, b) => {
                a.visit(f);
                b.visit(f);
            }
        }
    }

    /// Visits the two top-level terms of every comparison.
    pub fn visit_terms<'a>(&'a self, f: &mut impl FnMut(&'a Term)) {
        self.visit(&mut |g| {
            if let Formula::Rel(_, a, b) = g {
                f(a);
                f(b);
            }
        });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarity {
    Supports,
    Conflicts,
}

/// Named tuple table. Tuples are kept sorted and deduplicated so that
/// membership is a binary search.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Relation {
    pub name: String,
    pub arity: usize,
    pub polarity: Polarity,
    tuples: Vec<Vec<i64>>,
}

impl Relation {
    pub fn new(name: String, arity: usize, polarity: Polarity, mut tuples: Vec<Vec<i64>>) -> Self {
        tuples.sort();
        tuples.dedup();
        Relation { name, arity, polarity, tuples }
    }

    pub fn tuples(&self) -> &[Vec<i64>] {
        &self.tuples
    }

    pub fn contains(&self, tuple: &[i64]) -> bool {
        self.tuples.binary_search_by(|t| t.as_slice().cmp(tuple)).is_ok()
    }

    /// Whether `tuple` is allowed under the table's polarity.
    pub fn allows(&self, tuple: &[i64]) -> bool {
        match self.polarity {
            Polarity::Supports => self.contains(tuple),
            Polarity::Conflicts => !self.contains(tuple),
        }
    }
}

/// Task of a `cumulative` constraint. At least two of origin, duration and
/// end must be present.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Task {
    pub origin: Option<Term>,
    pub duration: Option<Term>,
    pub end: Option<Term>,
    pub height: Term,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Global {
    AllDifferent(Vec<Term>),
    WeightedSum {
        terms: Vec<(i64, Term)>,
        op: RelOp,
        rhs: Term,
    },
    Cumulative {
        tasks: Vec<Task>,
        limit: Term,
    },
    /// `list[index] = value` with a 1-based index.
    Element {
        index: Term,
        list: Vec<Term>,
        value: Term,
    },
    /// Unsupported constraint kept verbatim; `arity` is the argument count.
    Opaque {
        name: String,
        args: Vec<SExpr>,
    },
}

impl Global {
    pub fn name(&self) -> &str {
        match self {
            Global::AllDifferent(_) => "alldifferent",
            Global::WeightedSum { .. } => "weightedsum",
            Global::Cumulative { .. } => "cumulative",
            Global::Element { .. } => "element",
            Global::Opaque { name, .. } => name,
        }
    }

    /// Number of arguments in the sense used by the feature catalog: list
    /// elements for alldifferent, summands for weightedsum, tasks for
    /// cumulative, list length for element, top-level args for opaque globals.
    pub fn arity(&self) -> usize {
        match self {
            Global::AllDifferent(ts) => ts.len(),
            Global::WeightedSum { terms, .. } => terms.len(),
            Global::Cumulative { tasks, .. } => tasks.len(),
            Global::Element { list, .. } => list.len(),
            Global::Opaque { args, .. } => args.len(),
        }
    }

    pub fn terms(&self) -> Vec<&Term> {
        match self {
            Global::AllDifferent(ts) => ts.iter().collect(),
            Global::WeightedSum { terms, rhs, .. } => terms.iter().map(|(_, t)| t).chain([rhs]).collect(),
            Global::Cumulative { tasks, limit } => tasks
                .iter()
                .flat_map(|t| {
                    [t.origin.as_ref(), t.duration.as_ref(), t.end.as_ref(), Some(&t.height)].into_iter().flatten()
                })
                .chain([limit])
                .collect(),
            Global::Element { index, list, value } => [index].into_iter().chain(list).chain([value]).collect(),
            Global::Opaque { .. } => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConstraintKind {
    Intensional,
    Extensional,
    Global,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Constraint {
    Intensional(Formula),
    /// Application of `relations[relation]` to `args`.
    Extensional {
        relation: usize,
        args: Vec<Term>,
    },
    Global(Global),
}

impl Constraint {
    pub fn kind(&self) -> ConstraintKind {
        match self {
            Constraint::Intensional(_) => ConstraintKind::Intensional,
            Constraint::Extensional { .. } => ConstraintKind::Extensional,
            Constraint::Global(_) => ConstraintKind::Global,
        }
    }
}

/// A parsed instance. Immutable once built by the parser.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CspInstance {
    pub source_id: String,
    pub int_vars: Vec<IntVar>,
    pub bool_vars: Vec<BoolVar>,
    pub relations: Vec<Relation>,
    pub constraints: Vec<Constraint>,
}

impl CspInstance {
    pub fn int_var(&self, name: &str) -> Option<&IntVar> {
        self.int_vars.iter().find(|v| v.name == name)
    }

    /// Integer variables referenced by a constraint, deduplicated, in first
    /// occurrence order. Bool variables are not included.
    pub fn constraint_int_vars<'a>(&'a self, c: &'a Constraint) -> Vec<&'a str> {
        let mut vars = Vec::new();
        match c {
            Constraint::Intensional(f) => f.visit_terms(&mut |t| t.collect_vars(&mut vars)),
            Constraint::Extensional { args, .. } => args.iter().for_each(|t| t.collect_vars(&mut vars)),
            Constraint::Global(Global::Opaque { args, .. }) => {
                for arg in args {
                    arg.atoms(&mut |a| {
                        if self.int_var(a).is_some() {
                            vars.push(a);
                        }
                    });
                }
            }
            Constraint::Global(g) => g.terms().into_iter().for_each(|t| t.collect_vars(&mut vars)),
        }
        let mut seen = std::collections::HashSet::new();
        vars.retain(|v| seen.insert(*v));
        vars
    }
}

/// Values for every variable of an instance.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Assignment {
    pub int_values: BTreeMap<String, i64>,
    pub bool_values: BTreeMap<String, bool>,
}

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_int(mut self, name: &str, value: i64) -> Self {
        self.int_values.insert(name.to_string(), value);
        self
    }

    pub fn with_bool(mut self, name: &str, value: bool) -> Self {
        self.bool_values.insert(name.to_string(), value);
        self
    }
}

impl fmt::Display for ConstraintKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConstraintKind::Intensional => "intensional",
            ConstraintKind::Extensional => "extensional",
            ConstraintKind::Global => "global",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn domain_normalization_merges_adjacent() {
        let d = Domain::from_intervals([(5, 7), (1, 2), (3, 3), (10, 12), (11, 11)]).unwrap();
        assert_eq!(d.intervals(), &[(1, 3), (5, 7), (10, 12)]);
        assert_eq!(d.size(), 9);
        assert!(d.contains(3));
        assert!(!d.contains(4));
        assert!(!d.contains(8));
        assert!(d.contains(12));
        assert!(!d.contains(13));
        assert!(!d.contains(0));
    }

    #[test]
    fn empty_domain_is_none() {
        assert!(Domain::range(3, 2).is_none());
        assert!(Domain::from_intervals([]).is_none());
    }

    #[test]
    fn extreme_bounds_have_exact_size() {
        let d = Domain::range(i64::MIN, i64::MAX).unwrap();
        assert_eq!(d.size(), 1u128 << 64);
        let d = Domain::from_intervals([(i64::MIN, 0), (1, i64::MAX)]).unwrap();
        assert_eq!(d.intervals().len(), 1);
    }

    #[test]
    fn linearize_collects_coefficients() {
        // x + 2*x - (3 - y) => 3x + y - 3
        let t = Term::Sub(vec![
            Term::Add(vec![Term::Var("x".into()), Term::Mul(vec![Term::Const(2), Term::Var("x".into())])]),
            Term::Sub(vec![Term::Const(3), Term::Var("y".into())]),
        ]);
        let lin = t.linearize().unwrap();
        assert_eq!(lin.constant, -3);
        assert_eq!(lin.terms, vec![(3, "x".to_string()), (1, "y".to_string())]);
        let cancel = Term::Sub(vec![Term::Var("x".into()), Term::Var("x".into())]).linearize().unwrap();
        assert!(cancel.terms.is_empty());
        let nonlinear = Term::Mul(vec![Term::Var("x".into()), Term::Var("y".into())]);
        assert!(nonlinear.linearize().is_none());
    }

    #[test]
    fn relation_polarity() {
        let r = Relation::new("r".into(), 2, Polarity::Conflicts, vec![vec![2, 1], vec![1, 1], vec![2, 1]]);
        assert_eq!(r.tuples().len(), 2);
        assert!(!r.allows(&[1, 1]));
        assert!(r.allows(&[1, 2]));
    }
}
