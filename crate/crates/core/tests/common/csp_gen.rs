//! Random small CSP instances rendered as text, with a naive evaluator that
//! works on the generated tree rather than on the parsed instance.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub enum T {
    C(i64),
    V(usize),
    Add(Vec<T>),
    Sub(Vec<T>),
    Mul(Vec<T>),
    Neg(Box<T>),
    Abs(Box<T>),
    Min(Vec<T>),
    Max(Vec<T>),
    Div(Box<T>, i64),
    Mod(Box<T>, i64),
}

#[derive(Debug, Clone)]
pub enum F {
    B(usize),
    Not(Box<F>),
    And(Vec<F>),
    Or(Vec<F>),
    Imp(Box<F>, Box<F>),
    Iff(Box<F>, Box<F>),
    Xor(Box<F>, Box<F>),
    Rel(&'static str, T, T),
}

#[derive(Debug, Clone)]
pub enum C {
    F(F),
    AllDiff(Vec<T>),
    Table { supports: bool, vars: Vec<usize>, tuples: Vec<Vec<i64>> },
    WSum(Vec<(i64, usize)>, &'static str, i64),
    Element(usize, Vec<T>, T),
}

pub const RELS: [&str; 6] = ["<", "<=", ">", ">=", "=", "!="];

pub struct Gen<'a> {
    pub rng: &'a mut ChaCha8Rng,
    pub ints: usize,
    pub bools: usize,
}

impl Gen<'_> {
    fn term(&mut self, depth: u32) -> T {
        if depth == 0 || self.rng.random_bool(0.4) {
            return if self.rng.random_bool(0.7) {
                T::V(self.rng.random_range(0..self.ints))
            } else {
                T::C(self.rng.random_range(-3..=4))
            };
        }
        let n = self.rng.random_range(1..=3);
        let kids = |g: &mut Self| (0..n).map(|_| g.term(depth - 1)).collect::<Vec<_>>();
        match self.rng.random_range(0..9) {
            0 => T::Add(kids(self)),
            1 => {
                let mut k = kids(self);
                k.push(self.term(depth - 1));
                T::Sub(k)
            }
            2 => T::Mul(kids(self)),
            3 => T::Neg(Box::new(self.term(depth - 1))),
            4 => T::Abs(Box::new(self.term(depth - 1))),
            5 => T::Min(kids(self)),
            6 => T::Max(kids(self)),
            7 => T::Div(Box::new(self.term(depth - 1)), *[-3, -2, 2, 3].choose(self.rng).unwrap()),
            _ => T::Mod(Box::new(self.term(depth - 1)), *[-3, -2, 2, 3].choose(self.rng).unwrap()),
        }
    }

    fn formula(&mut self, depth: u32) -> F {
        if depth == 0 || self.rng.random_bool(0.4) {
            if self.bools > 0 && self.rng.random_bool(0.25) {
                return F::B(self.rng.random_range(0..self.bools));
            }
            return F::Rel(RELS.choose(self.rng).unwrap(), self.term(2), self.term(2));
        }
        let sub = |g: &mut Self| Box::new(g.formula(depth - 1));
        match self.rng.random_range(0..6) {
            0 => F::Not(sub(self)),
            1 => F::And((0..self.rng.random_range(1..=3)).map(|_| self.formula(depth - 1)).collect()),
            2 => F::Or((0..self.rng.random_range(1..=3)).map(|_| self.formula(depth - 1)).collect()),
            3 => F::Imp(sub(self), sub(self)),
            4 => F::Iff(sub(self), sub(self)),
            _ => F::Xor(sub(self), sub(self)),
        }
    }

    fn constraint(&mut self) -> C {
        match self.rng.random_range(0..8) {
            0 => C::AllDiff((0..self.rng.random_range(2..=3)).map(|_| self.term(1)).collect()),
            1 => {
                let arity = self.rng.random_range(1..=self.ints.min(3));
                let vars = (0..arity).map(|_| self.rng.random_range(0..self.ints)).collect();
                let tuples = (0..self.rng.random_range(0..8))
                    .map(|_| (0..arity).map(|_| self.rng.random_range(-2..=4)).collect())
                    .collect();
                C::Table { supports: self.rng.random_bool(0.5), vars, tuples }
            }
            2 => {
                let pairs = (0..self.rng.random_range(1..=3))
                    .map(|_| (self.rng.random_range(-3..=3), self.rng.random_range(0..self.ints)))
                    .collect();
                C::WSum(pairs, RELS.choose(self.rng).unwrap(), self.rng.random_range(-4..=6))
            }
            3 => {
                let list = (0..self.rng.random_range(1..=3)).map(|_| self.term(1)).collect();
                C::Element(self.rng.random_range(0..self.ints), list, self.term(1))
            }
            _ => C::F(self.formula(3)),
        }
    }
}

pub fn show_t(t: &T) -> String {
    let list = |op: &str, ts: &[T]| format!("({op} {})", ts.iter().map(show_t).collect::<Vec<_>>().join(" "));
    match t {
        T::C(c) => c.to_string(),
        T::V(v) => format!("v{v}"),
        T::Add(ts) => list("+", ts),
        T::Sub(ts) => list("-", ts),
        T::Mul(ts) => list("*", ts),
        T::Neg(a) => format!("(- {})", show_t(a)),
        T::Abs(a) => format!("(abs {})", show_t(a)),
        T::Min(ts) => list("min", ts),
        T::Max(ts) => list("max", ts),
        T::Div(a, d) => format!("(div {} {d})", show_t(a)),
        T::Mod(a, d) => format!("(mod {} {d})", show_t(a)),
    }
}

pub fn show_f(f: &F) -> String {
    match f {
        F::B(b) => format!("b{b}"),
        F::Not(a) => format!("(not {})", show_f(a)),
        F::And(fs) => format!("(and {})", fs.iter().map(show_f).collect::<Vec<_>>().join(" ")),
        F::Or(fs) => format!("(or {})", fs.iter().map(show_f).collect::<Vec<_>>().join(" ")),
        F::Imp(a, b) => format!("(imp {} {})", show_f(a), show_f(b)),
        F::Iff(a, b) => format!("(iff {} {})", show_f(a), show_f(b)),
        F::Xor(a, b) => format!("(xor {} {})", show_f(a), show_f(b)),
        F::Rel(op, a, b) => format!("({op} {} {})", show_t(a), show_t(b)),
    }
}

pub fn floor_div(x: i128, y: i128) -> i128 {
    (x as f64 / y as f64).floor() as i128
}

pub fn ev_t(t: &T, x: &[i64]) -> i128 {
    match t {
        T::C(c) => *c as i128,
        T::V(v) => x[*v] as i128,
        T::Add(ts) => ts.iter().map(|t| ev_t(t, x)).sum(),
        T::Sub(ts) => ts[1..].iter().fold(ev_t(&ts[0], x), |acc, t| acc - ev_t(t, x)),
        T::Mul(ts) => ts.iter().map(|t| ev_t(t, x)).product(),
        T::Neg(a) => -ev_t(a, x),
        T::Abs(a) => ev_t(a, x).abs(),
        T::Min(ts) => ts.iter().map(|t| ev_t(t, x)).min().unwrap(),
        T::Max(ts) => ts.iter().map(|t| ev_t(t, x)).max().unwrap(),
        T::Div(a, d) => floor_div(ev_t(a, x), *d as i128),
        T::Mod(a, d) => {
            let v = ev_t(a, x);
            v - *d as i128 * floor_div(v, *d as i128)
        }
    }
}

pub fn rel(op: &str, a: i128, b: i128) -> bool {
    match op {
        "<" => a < b,
        "<=" => a <= b,
        ">" => a > b,
        ">=" => a >= b,
        "=" => a == b,
        _ => a != b,
    }
}

pub fn ev_f(f: &F, x: &[i64], b: &[bool]) -> bool {
    match f {
        F::B(i) => b[*i],
        F::Not(a) => !ev_f(a, x, b),
        F::And(fs) => fs.iter().all(|f| ev_f(f, x, b)),
        F::Or(fs) => fs.iter().any(|f| ev_f(f, x, b)),
        F::Imp(p, q) => !ev_f(p, x, b) || ev_f(q, x, b),
        F::Iff(p, q) => ev_f(p, x, b) == ev_f(q, x, b),
        F::Xor(p, q) => ev_f(p, x, b) != ev_f(q, x, b),
        F::Rel(op, l, r) => rel(op, ev_t(l, x), ev_t(r, x)),
    }
}

pub fn ev_c(c: &C, x: &[i64], b: &[bool]) -> bool {
    match c {
        C::F(f) => ev_f(f, x, b),
        C::AllDiff(ts) => {
            let v: Vec<i128> = ts.iter().map(|t| ev_t(t, x)).collect();
            (0..v.len()).all(|i| (0..i).all(|j| v[i] != v[j]))
        }
        C::Table { supports, vars, tuples } => {
            let tuple: Vec<i64> = vars.iter().map(|&v| x[v]).collect();
            tuples.contains(&tuple) == *supports
        }
        C::WSum(pairs, op, rhs) => rel(op, pairs.iter().map(|&(c, v)| c as i128 * x[v] as i128).sum(), *rhs as i128),
        C::Element(i, list, value) => {
            let i = x[*i];
            i >= 1 && (i as usize) <= list.len() && ev_t(&list[i as usize - 1], x) == ev_t(value, x)
        }
    }
}

pub struct RandomCsp {
    pub text: String,
    pub domains: Vec<Vec<i64>>,
    pub bools: usize,
    pub constraints: Vec<C>,
}

pub fn random_csp(rng: &mut ChaCha8Rng) -> RandomCsp {
    let ints = rng.random_range(1..=4);
    let bools = rng.random_range(0..=2);
    let mut text = String::new();
    let mut domains = Vec::new();
    for v in 0..ints {
        let mut pool: Vec<i64> = (-2..=4).collect();
        pool.shuffle(rng);
        let mut dom = pool[..rng.random_range(1..=5)].to_vec();
        dom.sort_unstable();
        if dom.last().unwrap() - dom[0] + 1 == dom.len() as i64 {
            text += &format!("(int v{v} {} {})\n", dom[0], dom.last().unwrap());
        } else {
            let items: Vec<String> = dom.iter().map(i64::to_string).collect();
            text += &format!("(int v{v} ({}))\n", items.join(" "));
        }
        domains.push(dom);
    }
    for b in 0..bools {
        text += &format!("(bool b{b})\n");
    }
    let mut g = Gen { rng, ints, bools };
    let constraints: Vec<C> = (0..g.rng.random_range(1..=4)).map(|_| g.constraint()).collect();
    for (k, c) in constraints.iter().enumerate() {
        let line = match c {
            C::F(f) => show_f(f),
            C::AllDiff(ts) => format!("(alldifferent {})", ts.iter().map(show_t).collect::<Vec<_>>().join(" ")),
            C::Table { supports, vars, tuples } => {
                let tuples: Vec<String> = tuples
                    .iter()
                    .map(|t| format!("({})", t.iter().map(i64::to_string).collect::<Vec<_>>().join(" ")))
                    .collect();
                let kind = if *supports { "supports" } else { "conflicts" };
                text += &format!("(relation R{k} {} ({kind} {}))\n", vars.len(), tuples.join(" "));
                format!("(R{k} {})", vars.iter().map(|v| format!("v{v}")).collect::<Vec<_>>().join(" "))
            }
            C::WSum(pairs, op, rhs) => {
                let ps: Vec<String> = pairs.iter().map(|(c, v)| format!("({c} v{v})")).collect();
                format!("(weightedsum ({}) {op} {rhs})", ps.join(" "))
            }
            C::Element(i, list, value) => {
                format!("(element v{i} ({}) {})", list.iter().map(show_t).collect::<Vec<_>>().join(" "), show_t(value))
            }
        };
        text += &line;
        text.push('\n');
    }
    RandomCsp { text, domains, bools, constraints }
}
