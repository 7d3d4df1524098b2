//! Canonical s-expression output. Re-parsing the output of `Display` yields an
//! instance equal to the original.

use std::fmt::{self, Display, Formatter, Write};

use super::{Constraint, CspInstance, Domain, Formula, Global, Polarity, Task, Term};

fn list<T: Display>(f: &mut Formatter<'_>, head: &str, items: &[T]) -> fmt::Result {
    f.write_char('(')?;
    f.write_str(head)?;
    for item in items {
        write!(f, " {item}")?;
    }
    f.write_char(')')
}

fn bare<T: Display>(f: &mut Formatter<'_>, items: &[T]) -> fmt::Result {
    f.write_char('(')?;
    for (i, item) in items.iter().enumerate() {
        if i > 0 {
            f.write_char(' ')?;
        }
        write!(f, "{item}")?;
    }
    f.write_char(')')
}

impl Display for Term {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            Term::Const(c) => write!(f, "{c}"),
            Term::Var(v) => f.write_str(v),
            Term::Neg(t) => write!(f, "(- {t})"),
            Term::Add(ts) => list(f, "+", ts),
            Term::Sub(ts) => list(f, "-", ts),
            Term::Mul(ts) => list(f, "*", ts),
            Term::Div(a, b) => write!(f, "(div {a} {b})"),
            Term::Mod(a, b) => write!(f, "(mod {a} {b})"),
            Term::Abs(t) => write!(f, "(abs {t})"),
            Term::Min(ts) => list(f, "min", ts),
            Term::Max(ts) => list(f, "max", ts),
        }
    }
}

impl Display for Formula {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Const(b) => write!(f, "{b}"),
            Formula::BoolVar(v) => f.write_str(v),
            Formula::Not(g) => write!(f, "(not {g})"),
            Formula::And(gs) => list(f, "and", gs),
            Formula::Or(gs) => list(f, "or", gs),
            Formula::Imp(a, b) => write!(f, "(imp {a} {b})"),
            Formula::Iff(a, b) => write!(f, "(iff {a} {b})"),
            Formula::Xor(a, b) => write!(f, "(xor {a} {b})"),
            Formula::Rel(op, a, b) => write!(f, "({} {a} {b})", op.symbol()),
        }
    }
}

struct OptTerm<'a>(&'a Option<Term>);

impl Display for OptTerm<'_> {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(t) => write!(f, "{t}"),
            None => f.write_str("nil"),
        }
    }
}

impl Display for Task {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        write!(f, "({} {} {} {})", OptTerm(&self.origin), OptTerm(&self.duration), OptTerm(&self.end), self.height)
    }
}

impl Display for Global {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            Global::AllDifferent(ts) => list(f, "alldifferent", ts),
            Global::WeightedSum { terms, op, rhs } => {
                f.write_str("(weightedsum (")?;
                for (i, (c, t)) in terms.iter().enumerate() {
                    if i > 0 {
                        f.write_char(' ')?;
                    }
                    write!(f, "({c} {t})")?;
                }
                write!(f, ") {} {rhs})", op.symbol())
            }
            Global::Cumulative { tasks, limit } => {
                f.write_str("(cumulative ")?;
                bare(f, tasks)?;
                write!(f, " {limit})")
            }
            Global::Element { index, list: items, value } => {
                write!(f, "(element {index} ")?;
                bare(f, items)?;
                write!(f, " {value})")
            }
            Global::Opaque { name, args } => list(f, name, args),
        }
    }
}

impl Display for Domain {
    /// `lo hi` for contiguous domains, otherwise a value/range list.
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        if self.is_contiguous() {
            return write!(f, "{} {}", self.min(), self.max());
        }
        f.write_char('(')?;
        for (i, &(lo, hi)) in self.intervals().iter().enumerate() {
            if i > 0 {
                f.write_char(' ')?;
            }
            if lo == hi {
                write!(f, "{lo}")?;
            } else {
                write!(f, "({lo} {hi})")?;
            }
        }
        f.write_char(')')
    }
}

impl Display for CspInstance {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        for v in &self.int_vars {
            writeln!(f, "(int {} {})", v.name, v.domain)?;
        }
        for v in &self.bool_vars {
            writeln!(f, "(bool {})", v.name)?;
        }
        for r in &self.relations {
            let kind = match r.polarity {
                Polarity::Supports => "supports",
                Polarity::Conflicts => "conflicts",
            };
            write!(f, "(relation {} {} ({kind}", r.name, r.arity)?;
            for t in r.tuples() {
                f.write_char(' ')?;
                bare(f, t)?;
            }
            writeln!(f, "))")?;
        }
        for c in &self.constraints {
            match c {
                Constraint::Intensional(g) => writeln!(f, "{g}")?,
                Constraint::Extensional { relation, args } => {
                    list(f, &self.relations[*relation].name, args)?;
                    writeln!(f)?
                }
                Constraint::Global(g) => writeln!(f, "{g}")?,
            }
        }
        Ok(())
    }
}
