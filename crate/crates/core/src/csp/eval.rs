use thiserror::Error;

use super::{Assignment, Constraint, CspInstance, Formula, Global, Term};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("variable '{0}' is not assigned")]
    Unassigned(String),
    #[error("cannot evaluate opaque global constraint '{0}'")]
    OpaqueGlobal(String),
    #[error("arithmetic overflow while evaluating a constraint")]
    Overflow,
    #[error("division by zero")]
    DivisionByZero,
}

struct Evaluator<'a> {
    inst: &'a CspInstance,
    a: &'a Assignment,
}

impl Evaluator<'_> {
    fn term(&self, t: &Term) -> Result<i64, EvalError> {
        let fold = |ts: &[Term], f: fn(i64, i64) -> Option<i64>| -> Result<i64, EvalError> {
            let mut it = ts.iter();
            let first = self.term(it.next().expect("parser guarantees operands"))?;
            it.try_fold(first, |acc, t| f(acc, self.term(t)?).ok_or(EvalError::Overflow))
        };
        match t {
            Term::Const(c) => Ok(*c),
            Term::Var(v) => self.a.int_values.get(v).copied().ok_or_else(|| EvalError::Unassigned(v.clone())),
            Term::Neg(t) => self.term(t)?.checked_neg().ok_or(EvalError::Overflow),
            Term::Add(ts) => fold(ts, i64::checked_add),
            Term::Sub(ts) => fold(ts, i64::checked_sub),
            Term::Mul(ts) => fold(ts, i64::checked_mul),
            Term::Div(a, b) => {
                let (x, y) = (self.term(a)?, self.term(b)?);
                if y == 0 {
                    return Err(EvalError::DivisionByZero);
                }
                floor_div(x, y).ok_or(EvalError::Overflow)
            }
            Term::Mod(a, b) => {
                let (x, y) = (self.term(a)?, self.term(b)?);
                if y == 0 {
                    return Err(EvalError::DivisionByZero);
                }
                let q = floor_div(x, y).ok_or(EvalError::Overflow)?;
                q.checked_mul(y).and_then(|p| x.checked_sub(p)).ok_or(EvalError::Overflow)
            }
            Term::Abs(t) => self.term(t)?.checked_abs().ok_or(EvalError::Overflow),
            Term::Min(ts) => fold(ts, |a, b| Some(a.min(b))),
            Term::Max(ts) => fold(ts, |a, b| Some(a.max(b))),
        }
    }

    fn formula(&self, f: &Formula) -> Result<bool, EvalError> {
        Ok(match f {
            Formula::Const(b) => *b,
            Formula::BoolVar(v) => *self.a.bool_values.get(v).ok_or_else(|| EvalError::Unassigned(v.clone()))?,
            Formula::Not(g) => !self.formula(g)?,
            Formula::And(gs) => {
                // evaluate every operand so that unassigned variables always surface
                let mut all = true;
                for g in gs {
                    all &= self.formula(g)?;
                }
                all
            }
            Formula::Or(gs) => {
                let mut any = false;
                for g in gs {
                    any |= self.formula(g)?;
                }
                any
            }
            Formula::Imp(a, b) => {
                let (x, y) = (self.formula(a)?, self.formula(b)?);
                !x || y
            }
            Formula::Iff(a, b) => self.formula(a)? == self.formula(b)?,
            Formula::Xor(a, b) => self.formula(a)? != self.formula(b)?,
            Formula::Rel(op, a, b) => op.holds(self.term(a)?, self.term(b)?),
        })
    }

    fn global(&self, g: &Global) -> Result<bool, EvalError> {
        match g {
            Global::AllDifferent(ts) => {
                let mut values = ts.iter().map(|t| self.term(t)).collect::<Result<Vec<_>, _>>()?;
                values.sort_unstable();
                Ok(values.windows(2).all(|w| w[0] != w[1]))
            }
            Global::WeightedSum { terms, op, rhs } => {
                let mut sum: i64 = 0;
                for (coef, t) in terms {
                    let v = coef.checked_mul(self.term(t)?).ok_or(EvalError::Overflow)?;
                    sum = sum.checked_add(v).ok_or(EvalError::Overflow)?;
                }
                Ok(op.holds(sum, self.term(rhs)?))
            }
            Global::Element { index, list, value } => {
                let i = self.term(index)?;
                let v = self.term(value)?;
                let items = list.iter().map(|t| self.term(t)).collect::<Result<Vec<_>, _>>()?;
                Ok(i >= 1 && (i as u64) <= items.len() as u64 && items[(i - 1) as usize] == v)
            }
            Global::Cumulative { tasks, limit } => {
                let limit = self.term(limit)?;
                let opt = |t: &Option<Term>| t.as_ref().map(|t| self.term(t)).transpose();
                let mut spans = Vec::with_capacity(tasks.len());
                for task in tasks {
                    let (o, d, e) = (opt(&task.origin)?, opt(&task.duration)?, opt(&task.end)?);
                    let h = self.term(&task.height)?;
                    let (o, d, e) = match (o, d, e) {
                        (Some(o), Some(d), Some(e)) => (o, d, e),
                        (Some(o), Some(d), None) => (o, d, o.checked_add(d).ok_or(EvalError::Overflow)?),
                        (Some(o), None, Some(e)) => (o, e.checked_sub(o).ok_or(EvalError::Overflow)?, e),
                        (None, Some(d), Some(e)) => (e.checked_sub(d).ok_or(EvalError::Overflow)?, d, e),
                        _ => unreachable!("parser requires two of origin/duration/end"),
                    };
                    if o.checked_add(d) != Some(e) || d < 0 || h < 0 {
                        return Ok(false);
                    }
                    spans.push((o, e, h));
                }
                // the load profile only rises at task origins
                for &(t, _, _) in &spans {
                    let mut load: i64 = 0;
                    for &(o, e, h) in &spans {
                        if o <= t && t < e {
                            load = load.checked_add(h).ok_or(EvalError::Overflow)?;
                        }
                    }
                    if load > limit {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            Global::Opaque { name, .. } => Err(EvalError::OpaqueGlobal(name.clone())),
        }
    }

    fn constraint(&self, c: &Constraint) -> Result<bool, EvalError> {
        match c {
            Constraint::Intensional(f) => self.formula(f),
            Constraint::Extensional { relation, args } => {
                let tuple = args.iter().map(|t| self.term(t)).collect::<Result<Vec<_>, _>>()?;
                Ok(self.inst.relations[*relation].allows(&tuple))
            }
            Constraint::Global(g) => self.global(g),
        }
    }
}

fn floor_div(x: i64, y: i64) -> Option<i64> {
    let q = x.checked_div(y)?;
    if (x % y != 0) && ((x < 0) != (y < 0)) {
        q.checked_sub(1)
    } else {
        Some(q)
    }
}

/// Whether `a` is a solution of `inst`: every variable takes a value of its
/// domain and every constraint holds.
///
/// Fails when a declared variable has no value or when the instance contains
/// an opaque global, whose semantics are unknown.
pub fn check_assignment(inst: &CspInstance, a: &Assignment) -> Result<bool, EvalError> {
    for v in &inst.int_vars {
        if !a.int_values.contains_key(&v.name) {
            return Err(EvalError::Unassigned(v.name.clone()));
        }
    }
    for v in &inst.bool_vars {
        if !a.bool_values.contains_key(&v.name) {
            return Err(EvalError::Unassigned(v.name.clone()));
        }
    }
    if let Some(Constraint::Global(g)) =
        inst.constraints.iter().find(|c| matches!(c, Constraint::Global(Global::Opaque { .. })))
    {
        return Err(EvalError::OpaqueGlobal(g.name().to_string()));
    }
    if !inst.int_vars.iter().all(|v| v.domain.contains(a.int_values[&v.name])) {
        return Ok(false);
    }
    let ev = Evaluator { inst, a };
    for c in &inst.constraints {
        if !ev.constraint(c)? {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csp::parse_instance;

    #[test]
    fn floor_division_and_modulo() {
        assert_eq!(floor_div(7, 2), Some(3));
        assert_eq!(floor_div(-7, 2), Some(-4));
        assert_eq!(floor_div(7, -2), Some(-4));
        assert_eq!(floor_div(-7, -2), Some(3));
        assert_eq!(floor_div(i64::MIN, -1), None);
        let inst = parse_instance(b"(int x -10 10)(= (mod x 3) 2)").unwrap();
        let ok = |v| check_assignment(&inst, &Assignment::new().with_int("x", v)).unwrap();
        assert!(ok(-1));
        assert!(ok(5));
        assert!(!ok(-2));
    }

    #[test]
    fn unassigned_and_opaque() {
        let inst = parse_instance(b"(int x 1 2)(bool p)(or p (= x 1))").unwrap();
        let err = check_assignment(&inst, &Assignment::new().with_int("x", 1)).unwrap_err();
        assert_eq!(err, EvalError::Unassigned("p".into()));

        let inst = parse_instance(b"(int x 1 2)(= x 3)(circuit x)").unwrap();
        let err = check_assignment(&inst, &Assignment::new().with_int("x", 1)).unwrap_err();
        assert_eq!(err, EvalError::OpaqueGlobal("circuit".into()));
    }

    #[test]
    fn out_of_domain_value_is_not_a_solution() {
        let inst = parse_instance(b"(int x (1 3))").unwrap();
        assert!(!check_assignment(&inst, &Assignment::new().with_int("x", 2)).unwrap());
        assert!(check_assignment(&inst, &Assignment::new().with_int("x", 3)).unwrap());
    }

    #[test]
    fn cumulative_profile() {
        let inst = parse_instance(b"(int a 0 5)(int b 0 5)(cumulative ((a 2 nil 2) (b 2 nil 2)) 3)").unwrap();
        let check = |a, b| check_assignment(&inst, &Assignment::new().with_int("a", a).with_int("b", b)).unwrap();
        assert!(check(0, 2));
        assert!(!check(0, 1));
        assert!(check(3, 1));
    }

    #[test]
    fn element_is_one_based() {
        let inst = parse_instance(b"(int i 0 4)(int v 0 9)(element i (5 6 7) v)").unwrap();
        let check = |i, v| check_assignment(&inst, &Assignment::new().with_int("i", i).with_int("v", v)).unwrap();
        assert!(check(1, 5));
        assert!(check(3, 7));
        assert!(!check(0, 5));
        assert!(!check(4, 7));
    }

    #[test]
    fn extensional_supports() {
        let inst = parse_instance(b"(int x 1 3)(int y 1 3)(relation R 2 (supports (1 2) (2 3)))(R x y)").unwrap();
        let check = |x, y| check_assignment(&inst, &Assignment::new().with_int("x", x).with_int("y", y)).unwrap();
        assert!(check(1, 2));
        assert!(!check(2, 1));
    }
}
