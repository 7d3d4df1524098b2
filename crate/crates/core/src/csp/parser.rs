use std::collections::{HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use super::{BoolVar, Constraint, CspInstance, Domain, Formula, Global, IntVar, Polarity, RelOp, Relation, Task, Term};

/// Position-free s-expression, used to keep opaque constraints verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SExpr {
    Atom(String),
    List(Vec<SExpr>),
}

impl SExpr {
    /// Calls `f` on every atom, depth first.
    pub fn atoms<'a>(&'a self, f: &mut impl FnMut(&'a str)) {
        match self {
            SExpr::Atom(a) => f(a),
            SExpr::List(items) => items.iter().for_each(|i| i.atoms(f)),
        }
    }
}

impl fmt::Display for SExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SExpr::Atom(a) => f.write_str(a),
            SExpr::List(items) => {
                f.write_str("(")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" ")?;
                    }
                    write!(f, "{item}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("input is not valid UTF-8")]
    InvalidUtf8,
    #[error("unexpected end of input, unclosed '('")]
    UnexpectedEof,
    #[error("unexpected ')'")]
    UnexpectedClose,
    #[error("integer literal out of 64-bit range: {0}")]
    IntegerOverflow(String),
    #[error("{0}")]
    Syntax(String),
    #[error("undeclared variable '{0}'")]
    UndeclaredVariable(String),
    #[error("unknown domain '{0}'")]
    UnknownDomain(String),
    #[error("empty domain for '{0}'")]
    EmptyDomain(String),
    #[error("duplicate declaration of '{0}'")]
    DuplicateDeclaration(String),
    #[error("unsupported operator '{0}' inside a constraint")]
    UnsupportedOperator(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone)]
struct Node {
    line: usize,
    column: usize,
    kind: NodeKind,
}

#[derive(Debug, Clone)]
enum NodeKind {
    Atom(String),
    List(Vec<Node>),
}

impl Node {
    fn err(&self, kind: ParseErrorKind) -> ParseError {
        ParseError { line: self.line, column: self.column, kind }
    }

    fn syntax(&self, msg: impl Into<String>) -> ParseError {
        self.err(ParseErrorKind::Syntax(msg.into()))
    }

    fn atom(&self) -> Option<&str> {
        match &self.kind {
            NodeKind::Atom(a) => Some(a),
            NodeKind::List(_) => None,
        }
    }

    fn list(&self) -> Option<&[Node]> {
        match &self.kind {
            NodeKind::List(items) => Some(items),
            NodeKind::Atom(_) => None,
        }
    }

    fn to_sexpr(&self) -> SExpr {
        match &self.kind {
            NodeKind::Atom(a) => SExpr::Atom(a.clone()),
            NodeKind::List(items) => SExpr::List(items.iter().map(Node::to_sexpr).collect()),
        }
    }

    fn int(&self) -> Result<Option<i64>, ParseError> {
        match self.atom() {
            Some(a) => parse_int(a).map_err(|k| self.err(k)),
            None => Ok(None),
        }
    }

    fn expect_int(&self) -> Result<i64, ParseError> {
        self.int()?.ok_or_else(|| self.syntax("expected an integer"))
    }

    fn expect_name(&self) -> Result<&str, ParseError> {
        match self.atom() {
            Some(a) if parse_int(a).ok().flatten().is_none() && !looks_numeric(a) => Ok(a),
            _ => Err(self.syntax("expected a name")),
        }
    }
}

fn looks_numeric(s: &str) -> bool {
    let digits = s.strip_prefix(['-', '+']).unwrap_or(s);
    !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit())
}

/// `Ok(None)` for non-numeric atoms; overflow is an error.
fn parse_int(s: &str) -> Result<Option<i64>, ParseErrorKind> {
    if !looks_numeric(s) {
        return Ok(None);
    }
    s.parse::<i64>().map(Some).map_err(|_| ParseErrorKind::IntegerOverflow(s.to_string()))
}

fn tokenize(src: &str) -> Result<Vec<Node>, ParseError> {
    let mut stack: Vec<(usize, usize, Vec<Node>)> = Vec::new();
    let mut top: Vec<Node> = Vec::new();
    let mut chars = src.char_indices().peekable();
    let (mut line, mut column) = (1usize, 1usize);

    while let Some(&(start, c)) = chars.peek() {
        match c {
            '\n' => {
                chars.next();
                line += 1;
                column = 1;
            }
            c if c.is_whitespace() => {
                chars.next();
                column += 1;
            }
            ';' => {
                while let Some(&(_, c)) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    chars.next();
                }
            }
            '(' => {
                chars.next();
                stack.push((line, column, std::mem::take(&mut top)));
                column += 1;
            }
            ')' => {
                chars.next();
                let Some((l, col, parent)) = stack.pop() else {
                    return Err(ParseError { line, column, kind: ParseErrorKind::UnexpectedClose });
                };
                let items = std::mem::replace(&mut top, parent);
                top.push(Node { line: l, column: col, kind: NodeKind::List(items) });
                column += 1;
            }
            _ => {
                let (l, col) = (line, column);
                let mut end = start;
                while let Some(&(i, c)) = chars.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' || c == ';' {
                        break;
                    }
                    end = i + c.len_utf8();
                    column += 1;
                    chars.next();
                }
                top.push(Node { line: l, column: col, kind: NodeKind::Atom(src[start..end].to_string()) });
            }
        }
    }
    if let Some((l, col, _)) = stack.pop() {
        return Err(ParseError { line: l, column: col, kind: ParseErrorKind::UnexpectedEof });
    }
    Ok(top)
}

const TERM_OPS: &[&str] = &["+", "-", "*", "div", "mod", "abs", "min", "max"];
const BOOL_OPS: &[&str] = &["not", "and", "or", "imp", "iff", "xor", "true", "false"];

#[derive(Default)]
struct Scope {
    int_vars: HashSet<String>,
    bool_vars: HashSet<String>,
    relations: HashMap<String, usize>,
    domains: HashMap<String, Domain>,
}

impl Scope {
    fn term(&self, node: &Node) -> Result<Term, ParseError> {
        if let Some(atom) = node.atom() {
            if let Some(v) = node.int()? {
                return Ok(Term::Const(v));
            }
            if self.int_vars.contains(atom) {
                return Ok(Term::Var(atom.to_string()));
            }
            if self.bool_vars.contains(atom) {
                return Err(node.syntax(format!("boolean variable '{atom}' used as an integer")));
            }
            return Err(node.err(ParseErrorKind::UndeclaredVariable(atom.to_string())));
        }
        let items = node.list().unwrap_or_default();
        let (head, args) = split_head(node, items)?;
        let terms = || args.iter().map(|a| self.term(a)).collect::<Result<Vec<_>, _>>();
        let boxed = |i: usize| self.term(&args[i]).map(Box::new);
        let need = |n: usize| {
            if args.len() == n {
                Ok(())
            } else {
                Err(node.syntax(format!("'{head}' takes {n} argument(s), got {}", args.len())))
            }
        };
        let at_least = |n: usize| {
            if args.len() >= n {
                Ok(())
            } else {
                Err(node.syntax(format!("'{head}' needs at least {n} argument(s)")))
            }
        };
        Ok(match head {
            "+" => {
                at_least(1)?;
                Term::Add(terms()?)
            }
            "-" if args.len() == 1 => Term::Neg(boxed(0)?),
            "-" => {
                at_least(1)?;
                Term::Sub(terms()?)
            }
            "*" => {
                at_least(1)?;
                Term::Mul(terms()?)
            }
            "div" => {
                need(2)?;
                Term::Div(boxed(0)?, boxed(1)?)
            }
            "mod" => {
                need(2)?;
                Term::Mod(boxed(0)?, boxed(1)?)
            }
            "abs" => {
                need(1)?;
                Term::Abs(boxed(0)?)
            }
            "min" => {
                at_least(1)?;
                Term::Min(terms()?)
            }
            "max" => {
                at_least(1)?;
                Term::Max(terms()?)
            }
            other => return Err(node.err(ParseErrorKind::UnsupportedOperator(other.to_string()))),
        })
    }

    fn formula(&self, node: &Node) -> Result<Formula, ParseError> {
        if let Some(atom) = node.atom() {
            return match atom {
                "true" => Ok(Formula::Const(true)),
                "false" => Ok(Formula::Const(false)),
                a if self.bool_vars.contains(a) => Ok(Formula::BoolVar(a.to_string())),
                a if self.int_vars.contains(a) => Err(node.syntax(format!("integer variable '{a}' used as a formula"))),
                a => Err(node.err(ParseErrorKind::UndeclaredVariable(a.to_string()))),
            };
        }
        let items = node.list().unwrap_or_default();
        let (head, args) = split_head(node, items)?;
        let need = |n: usize| {
            if args.len() == n {
                Ok(())
            } else {
                Err(node.syntax(format!("'{head}' takes {n} argument(s), got {}", args.len())))
            }
        };
        let sub = |i: usize| self.formula(&args[i]).map(Box::new);
        if let Some(op) = RelOp::from_symbol(head) {
            need(2)?;
            return Ok(Formula::Rel(op, self.term(&args[0])?, self.term(&args[1])?));
        }
        Ok(match head {
            "not" => {
                need(1)?;
                Formula::Not(sub(0)?)
            }
            "and" => Formula::And(args.iter().map(|a| self.formula(a)).collect::<Result<_, _>>()?),
            "or" => Formula::Or(args.iter().map(|a| self.formula(a)).collect::<Result<_, _>>()?),
            "imp" => {
                need(2)?;
                Formula::Imp(sub(0)?, sub(1)?)
            }
            "iff" => {
                need(2)?;
                Formula::Iff(sub(0)?, sub(1)?)
            }
            "xor" => {
                need(2)?;
                Formula::Xor(sub(0)?, sub(1)?)
            }
            other => return Err(node.err(ParseErrorKind::UnsupportedOperator(other.to_string()))),
        })
    }

    fn domain(&self, name: &str, node: &Node, args: &[Node]) -> Result<Domain, ParseError> {
        let empty = || node.err(ParseErrorKind::EmptyDomain(name.to_string()));
        match args {
            [lo, hi] => Domain::range(lo.expect_int()?, hi.expect_int()?).ok_or_else(empty),
            [single] if single.list().is_some() => {
                let mut intervals = Vec::new();
                for item in single.list().unwrap_or_default() {
                    match item.list() {
                        None => {
                            let v = item.expect_int()?;
                            intervals.push((v, v));
                        }
                        Some([lo, hi]) => intervals.push((lo.expect_int()?, hi.expect_int()?)),
                        Some(_) => return Err(item.syntax("domain ranges are written (lo hi)")),
                    }
                }
                Domain::from_intervals(intervals).ok_or_else(empty)
            }
            [single] => {
                let dname = single.expect_name()?;
                self.domains
                    .get(dname)
                    .cloned()
                    .ok_or_else(|| single.err(ParseErrorKind::UnknownDomain(dname.to_string())))
            }
            _ => Err(node.syntax("expected 'lo hi', a value list, or a domain name")),
        }
    }

    fn global(&self, node: &Node, head: &str, args: &[Node]) -> Result<Option<Global>, ParseError> {
        let terms = |nodes: &[Node]| nodes.iter().map(|a| self.term(a)).collect::<Result<Vec<_>, _>>();
        Ok(Some(match head {
            "alldifferent" => {
                let flat = match args {
                    [only] => match only.list() {
                        Some(items) if !items.first().and_then(Node::atom).is_some_and(|h| TERM_OPS.contains(&h)) => {
                            items
                        }
                        _ => args,
                    },
                    _ => args,
                };
                Global::AllDifferent(terms(flat)?)
            }
            "weightedsum" => {
                let [pairs, op, rhs] = args else {
                    return Err(node.syntax("weightedsum expects ((coef term) ...) op rhs"));
                };
                let pairs = pairs.list().ok_or_else(|| pairs.syntax("expected a list of (coef term)"))?;
                let mut out = Vec::with_capacity(pairs.len());
                for p in pairs {
                    match p.list() {
                        Some([coef, t]) => out.push((coef.expect_int()?, self.term(t)?)),
                        _ => return Err(p.syntax("expected (coef term)")),
                    }
                }
                let op = op
                    .atom()
                    .and_then(RelOp::from_symbol)
                    .ok_or_else(|| op.syntax("expected a comparison operator"))?;
                Global::WeightedSum { terms: out, op, rhs: self.term(rhs)? }
            }
            "cumulative" => {
                let [tasks, limit] = args else {
                    return Err(node.syntax("cumulative expects (tasks...) limit"));
                };
                let tasks = tasks.list().ok_or_else(|| tasks.syntax("expected a list of tasks"))?;
                let mut out = Vec::with_capacity(tasks.len());
                for t in tasks {
                    let opt = |n: &Node| -> Result<Option<Term>, ParseError> {
                        if n.atom() == Some("nil") {
                            Ok(None)
                        } else {
                            self.term(n).map(Some)
                        }
                    };
                    let task = match t.list() {
                        Some([o, d, e, h]) => {
                            Task { origin: opt(o)?, duration: opt(d)?, end: opt(e)?, height: self.term(h)? }
                        }
                        Some([o, d, h]) => {
                            Task { origin: opt(o)?, duration: opt(d)?, end: None, height: self.term(h)? }
                        }
                        _ => return Err(t.syntax("a task is (origin duration end height) or (origin duration height)")),
                    };
                    let known = [&task.origin, &task.duration, &task.end].iter().filter(|x| x.is_some()).count();
                    if known < 2 {
                        return Err(t.syntax("a task needs at least two of origin, duration, end"));
                    }
                    out.push(task);
                }
                Global::Cumulative { tasks: out, limit: self.term(limit)? }
            }
            "element" => {
                let [index, list, value] = args else {
                    return Err(node.syntax("element expects index (list) value"));
                };
                let items = list.list().ok_or_else(|| list.syntax("expected a list"))?;
                Global::Element { index: self.term(index)?, list: terms(items)?, value: self.term(value)? }
            }
            _ => return Ok(None),
        }))
    }
}

fn split_head<'a>(node: &Node, items: &'a [Node]) -> Result<(&'a str, &'a [Node]), ParseError> {
    match items.split_first() {
        Some((head, rest)) => match head.atom() {
            Some(h) => Ok((h, rest)),
            None => Err(head.syntax("expected an operator name")),
        },
        None => Err(node.syntax("empty expression")),
    }
}

/// Parses a Sugar-style program.
pub fn parse_instance(text: &[u8]) -> Result<CspInstance, ParseError> {
    parse_instance_with_id(text, "")
}

pub fn parse_instance_with_id(text: &[u8], source_id: &str) -> Result<CspInstance, ParseError> {
    let src = std::str::from_utf8(text).map_err(|e| {
        let prefix = &text[..e.valid_up_to()];
        let line = prefix.iter().filter(|&&b| b == b'\n').count() + 1;
        let column = prefix.iter().rev().take_while(|&&b| b != b'\n').count() + 1;
        ParseError { line, column, kind: ParseErrorKind::InvalidUtf8 }
    })?;
    let items = tokenize(src)?;

    let mut scope = Scope::default();
    let mut inst = CspInstance { source_id: source_id.to_string(), ..Default::default() };

    // named domains first so that declaration order does not matter
    for item in &items {
        if let Some([head, rest @ ..]) = item.list() {
            if head.atom() == Some("domain") {
                let Some((name_node, dom_args)) = rest.split_first() else {
                    return Err(item.syntax("domain needs a name"));
                };
                let name = name_node.expect_name()?;
                let dom = scope.domain(name, item, dom_args)?;
                if scope.domains.insert(name.to_string(), dom).is_some() {
                    return Err(name_node.err(ParseErrorKind::DuplicateDeclaration(name.to_string())));
                }
            }
        }
    }

    for item in &items {
        let Some([head, rest @ ..]) = item.list() else { continue };
        match head.atom() {
            Some("int") => {
                let Some((name_node, dom_args)) = rest.split_first() else {
                    return Err(item.syntax("int needs a name and a domain"));
                };
                let name = name_node.expect_name()?;
                let domain = scope.domain(name, item, dom_args)?;
                if scope.int_vars.contains(name) || scope.bool_vars.contains(name) {
                    return Err(name_node.err(ParseErrorKind::DuplicateDeclaration(name.to_string())));
                }
                scope.int_vars.insert(name.to_string());
                inst.int_vars.push(IntVar { name: name.to_string(), domain });
            }
            Some("bool") => {
                let [name_node] = rest else {
                    return Err(item.syntax("bool takes exactly one name"));
                };
                let name = name_node.expect_name()?;
                if scope.int_vars.contains(name) || scope.bool_vars.contains(name) {
                    return Err(name_node.err(ParseErrorKind::DuplicateDeclaration(name.to_string())));
                }
                scope.bool_vars.insert(name.to_string());
                inst.bool_vars.push(BoolVar { name: name.to_string() });
            }
            Some("relation") => {
                let [name_node, arity_node, body] = rest else {
                    return Err(item.syntax("relation expects name arity (supports|conflicts tuples...)"));
                };
                let name = name_node.expect_name()?;
                let arity = usize::try_from(arity_node.expect_int()?)
                    .map_err(|_| arity_node.syntax("arity must be nonnegative"))?;
                let Some([kind, tuples @ ..]) = body.list() else {
                    return Err(body.syntax("expected (supports ...) or (conflicts ...)"));
                };
                let polarity = match kind.atom() {
                    Some("supports") => Polarity::Supports,
                    Some("conflicts") => Polarity::Conflicts,
                    _ => return Err(kind.syntax("expected 'supports' or 'conflicts'")),
                };
                let mut table = Vec::with_capacity(tuples.len());
                for t in tuples {
                    let values = t
                        .list()
                        .ok_or_else(|| t.syntax("expected a tuple"))?
                        .iter()
                        .map(Node::expect_int)
                        .collect::<Result<Vec<_>, _>>()?;
                    if values.len() != arity {
                        return Err(t.syntax(format!("tuple has {} values, relation arity is {arity}", values.len())));
                    }
                    table.push(values);
                }
                if scope.relations.contains_key(name) {
                    return Err(name_node.err(ParseErrorKind::DuplicateDeclaration(name.to_string())));
                }
                scope.relations.insert(name.to_string(), inst.relations.len());
                inst.relations.push(Relation::new(name.to_string(), arity, polarity, table));
            }
            _ => {}
        }
    }

    for item in &items {
        let constraint = match item.list() {
            None => Constraint::Intensional(scope.formula(item)?),
            Some(list) => {
                let (head, args) = split_head(item, list)?;
                match head {
                    "int" | "bool" | "domain" | "relation" => continue,
                    h if BOOL_OPS.contains(&h) || RelOp::from_symbol(h).is_some() => {
                        Constraint::Intensional(scope.formula(item)?)
                    }
                    h if scope.relations.contains_key(h) => {
                        let relation = scope.relations[h];
                        let arity = inst.relations[relation].arity;
                        if args.len() != arity {
                            return Err(
                                item.syntax(format!("relation '{h}' has arity {arity}, got {} arguments", args.len()))
                            );
                        }
                        let args = args.iter().map(|a| scope.term(a)).collect::<Result<_, _>>()?;
                        Constraint::Extensional { relation, args }
                    }
                    h => match scope.global(item, h, args)? {
                        Some(g) => Constraint::Global(g),
                        None => Constraint::Global(Global::Opaque {
                            name: h.to_string(),
                            args: args.iter().map(Node::to_sexpr).collect(),
                        }),
                    },
                }
            }
        };
        inst.constraints.push(constraint);
    }
    Ok(inst)
}
