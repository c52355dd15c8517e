//! Scalar expression trees used as the bodies of deterministic nodes and
//! distribution parameters.
//!
//! An [`Expr`] is evaluated against a slice of argument values (one per
//! declared parent). The op set is deliberately small and closed-form
//! differentiable; evaluation outside an op's domain is a hard error rather
//! than NaN propagation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index of a parent in a node's declared parent list.
pub type ArgIdx = usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Const(f64),
    /// Value of the i-th declared parent.
    Arg(ArgIdx),
    Add(Vec<Expr>),
    Mul(Vec<Expr>),
    Neg(Box<Expr>),
    Recip(Box<Expr>),
    Exp(Box<Expr>),
    Log(Box<Expr>),
    Tanh(Box<Expr>),
    /// Integer power.
    Powi(Box<Expr>, i32),
    /// bias + sum of coeff * expr terms.
    Affine {
        bias: f64,
        terms: Vec<(f64, Expr)>,
    },
    /// Picks `branches[round(index)]`. The selector carries no gradient;
    /// the chosen branch does.
    Select {
        index: Box<Expr>,
        branches: Vec<Expr>,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("numerical domain error in {op}: argument {value}")]
    Domain { op: &'static str, value: f64 },
    #[error("select index {value} out of range 0..{len}")]
    SelectRange { value: f64, len: usize },
    #[error("expression references argument {idx} but only {given} supplied")]
    MissingArg { idx: usize, given: usize },
}

impl Expr {
    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn arg(i: ArgIdx) -> Expr {
        Expr::Arg(i)
    }

    pub fn add(terms: Vec<Expr>) -> Expr {
        Expr::Add(terms)
    }

    pub fn mul(factors: Vec<Expr>) -> Expr {
        Expr::Mul(factors)
    }

    pub fn neg(e: Expr) -> Expr {
        Expr::Neg(Box::new(e))
    }

    pub fn exp(e: Expr) -> Expr {
        Expr::Exp(Box::new(e))
    }

    pub fn log(e: Expr) -> Expr {
        Expr::Log(Box::new(e))
    }

    pub fn tanh(e: Expr) -> Expr {
        Expr::Tanh(Box::new(e))
    }

    pub fn recip(e: Expr) -> Expr {
        Expr::Recip(Box::new(e))
    }

    pub fn powi(e: Expr, k: i32) -> Expr {
        Expr::Powi(Box::new(e), k)
    }

    pub fn affine(bias: f64, terms: Vec<(f64, Expr)>) -> Expr {
        Expr::Affine { bias, terms }
    }

    pub fn select(index: Expr, branches: Vec<Expr>) -> Expr {
        Expr::Select {
            index: Box::new(index),
            branches,
        }
    }

    /// Scale by a constant.
    pub fn scale(c: f64, e: Expr) -> Expr {
        Expr::Affine {
            bias: 0.0,
            terms: vec![(c, e)],
        }
    }

    /// a - b.
    pub fn sub(a: Expr, b: Expr) -> Expr {
        Expr::Add(vec![a, Expr::neg(b)])
    }

    /// Largest argument index referenced, if any.
    pub fn max_arg(&self) -> Option<ArgIdx> {
        let mut m = None;
        self.visit(&mut |e| {
            if let Expr::Arg(i) = e {
                m = Some(m.map_or(*i, |cur: usize| cur.max(*i)));
            }
        });
        m
    }

    /// Whether the expression references argument `i` anywhere (including
    /// select branches that may not be taken).
    pub fn uses_arg(&self, i: ArgIdx) -> bool {
        let mut found = false;
        self.visit(&mut |e| {
            if let Expr::Arg(j) = e {
                if *j == i {
                    found = true;
                }
            }
        });
        found
    }

    fn visit<F: FnMut(&Expr)>(&self, f: &mut F) {
        f(self);
        match self {
            Expr::Const(_) | Expr::Arg(_) => {}
            Expr::Add(v) | Expr::Mul(v) => v.iter().for_each(|e| e.visit(f)),
            Expr::Neg(e) | Expr::Recip(e) | Expr::Exp(e) | Expr::Log(e) | Expr::Tanh(e) => {
                e.visit(f)
            }
            Expr::Powi(e, _) => e.visit(f),
            Expr::Affine { terms, .. } => terms.iter().for_each(|(_, e)| e.visit(f)),
            Expr::Select { index, branches } => {
                index.visit(f);
                branches.iter().for_each(|e| e.visit(f));
            }
        }
    }

    /// Evaluate against parent values.
    pub fn eval(&self, args: &[f64]) -> Result<f64, EvalError> {
        let v = match self {
            Expr::Const(c) => *c,
            Expr::Arg(i) => *args.get(*i).ok_or(EvalError::MissingArg {
                idx: *i,
                given: args.len(),
            })?,
            Expr::Add(terms) => {
                let mut s = 0.0;
                for t in terms {
                    s += t.eval(args)?;
                }
                s
            }
            Expr::Mul(factors) => {
                let mut p = 1.0;
                for t in factors {
                    p *= t.eval(args)?;
                }
                p
            }
            Expr::Neg(e) => -e.eval(args)?,
            Expr::Recip(e) => {
                let x = e.eval(args)?;
                if x == 0.0 {
                    return Err(EvalError::Domain { op: "recip", value: x });
                }
                1.0 / x
            }
            Expr::Exp(e) => e.eval(args)?.exp(),
            Expr::Log(e) => {
                let x = e.eval(args)?;
                if x <= 0.0 {
                    return Err(EvalError::Domain { op: "log", value: x });
                }
                x.ln()
            }
            Expr::Tanh(e) => e.eval(args)?.tanh(),
            Expr::Powi(e, k) => e.eval(args)?.powi(*k),
            Expr::Affine { bias, terms } => {
                let mut s = *bias;
                for (c, e) in terms {
                    s += c * e.eval(args)?;
                }
                s
            }
            Expr::Select { index, branches } => {
                let raw = index.eval(args)?;
                let k = select_index(raw, branches.len())?;
                branches[k].eval(args)?
            }
        };
        if !v.is_finite() {
            return Err(EvalError::Domain { op: "non-finite result", value: v });
        }
        Ok(v)
    }

    /// Replace every `Arg(i)` with `subs[i]`. Used to compose bodies when
    /// rewriting graphs and when building symbolic conditional expectations.
    pub fn substitute(&self, subs: &[Expr]) -> Expr {
        match self {
            Expr::Const(c) => Expr::Const(*c),
            Expr::Arg(i) => subs[*i].clone(),
            Expr::Add(v) => Expr::Add(v.iter().map(|e| e.substitute(subs)).collect()),
            Expr::Mul(v) => Expr::Mul(v.iter().map(|e| e.substitute(subs)).collect()),
            Expr::Neg(e) => Expr::neg(e.substitute(subs)),
            Expr::Recip(e) => Expr::recip(e.substitute(subs)),
            Expr::Exp(e) => Expr::exp(e.substitute(subs)),
            Expr::Log(e) => Expr::log(e.substitute(subs)),
            Expr::Tanh(e) => Expr::tanh(e.substitute(subs)),
            Expr::Powi(e, k) => Expr::powi(e.substitute(subs), *k),
            Expr::Affine { bias, terms } => Expr::Affine {
                bias: *bias,
                terms: terms.iter().map(|(c, e)| (*c, e.substitute(subs))).collect(),
            },
            Expr::Select { index, branches } => Expr::Select {
                index: Box::new(index.substitute(subs)),
                branches: branches.iter().map(|e| e.substitute(subs)).collect(),
            },
        }
    }
}

// ---------------------------------------------------------------------------
// Simplification
// ---------------------------------------------------------------------------

/// Sparse multivariate polynomial: monomial exponents -> coefficient.
type Poly = std::collections::BTreeMap<std::collections::BTreeMap<usize, u32>, f64>;

const POLY_TERM_CAP: usize = 4096;

fn poly_const(c: f64) -> Poly {
    let mut p = Poly::new();
    if c != 0.0 {
        p.insert(std::collections::BTreeMap::new(), c);
    }
    p
}

fn poly_arg(i: usize) -> Poly {
    let mut m = std::collections::BTreeMap::new();
    m.insert(i, 1);
    let mut p = Poly::new();
    p.insert(m, 1.0);
    p
}

fn poly_add(mut a: Poly, b: Poly) -> Option<Poly> {
    for (m, c) in b {
        let e = a.entry(m).or_insert(0.0);
        *e += c;
        if *e == 0.0 {
            // keep the map sparse
        }
    }
    a.retain(|_, c| *c != 0.0);
    if a.len() > POLY_TERM_CAP {
        return None;
    }
    Some(a)
}

fn poly_mul(a: &Poly, b: &Poly) -> Option<Poly> {
    let mut out = Poly::new();
    for (ma, ca) in a {
        for (mb, cb) in b {
            let mut m = ma.clone();
            for (var, exp) in mb {
                *m.entry(*var).or_insert(0) += exp;
            }
            *out.entry(m).or_insert(0.0) += ca * cb;
        }
        if out.len() > POLY_TERM_CAP {
            return None;
        }
    }
    out.retain(|_, c| *c != 0.0);
    Some(out)
}

fn as_poly(e: &Expr) -> Option<Poly> {
    match e {
        Expr::Const(c) => Some(poly_const(*c)),
        Expr::Arg(i) => Some(poly_arg(*i)),
        Expr::Add(terms) => {
            let mut acc = poly_const(0.0);
            for t in terms {
                acc = poly_add(acc, as_poly(t)?)?;
            }
            Some(acc)
        }
        Expr::Mul(factors) => {
            let mut acc = poly_const(1.0);
            for f in factors {
                acc = poly_mul(&acc, &as_poly(f)?)?;
            }
            Some(acc)
        }
        Expr::Neg(a) => {
            let mut p = as_poly(a)?;
            for c in p.values_mut() {
                *c = -*c;
            }
            Some(p)
        }
        Expr::Powi(a, k) if *k >= 0 && *k <= 16 => {
            let base = as_poly(a)?;
            let mut acc = poly_const(1.0);
            for _ in 0..*k {
                acc = poly_mul(&acc, &base)?;
            }
            Some(acc)
        }
        Expr::Affine { bias, terms } => {
            let mut acc = poly_const(*bias);
            for (c, t) in terms {
                let scaled = poly_mul(&poly_const(*c), &as_poly(t)?)?;
                acc = poly_add(acc, scaled)?;
            }
            Some(acc)
        }
        _ => None,
    }
}

fn poly_to_expr(p: &Poly) -> Expr {
    if p.is_empty() {
        return Expr::Const(0.0);
    }
    let mut bias = 0.0;
    let mut terms: Vec<(f64, Expr)> = Vec::new();
    for (m, c) in p {
        if m.is_empty() {
            bias = *c;
            continue;
        }
        let mut factors: Vec<Expr> = Vec::new();
        for (var, exp) in m {
            if *exp == 1 {
                factors.push(Expr::Arg(*var));
            } else {
                factors.push(Expr::powi(Expr::Arg(*var), *exp as i32));
            }
        }
        let base = if factors.len() == 1 {
            factors.pop().unwrap()
        } else {
            Expr::Mul(factors)
        };
        terms.push((*c, base));
    }
    if terms.is_empty() {
        Expr::Const(bias)
    } else {
        Expr::Affine { bias, terms }
    }
}

impl Expr {
    /// Constant-fold, and collapse polynomial subtrees into their expanded
    /// monomial form. This is purely a size/evaluation-speed rewrite; the
    /// symbolic conditional expectations produced by Gaussian mixing grow a
    /// term per quadrature point, and their polynomial collapse removes that
    /// factor entirely.
    pub fn simplify(&self) -> Expr {
        // Fold constants bottom-up first: subtrees like exp(c) must become
        // literals before the polynomial expansion can see through them.
        let folded = self.fold_once();
        if let Some(p) = as_poly(&folded) {
            return poly_to_expr(&p);
        }
        folded
    }

    fn fold_once(&self) -> Expr {
        match self {
            Expr::Const(_) | Expr::Arg(_) => self.clone(),
            Expr::Add(v) => {
                let parts: Vec<Expr> = v.iter().map(|e| e.simplify()).collect();
                fold_or(Expr::Add(parts.clone()), || {
                    parts.iter().map(const_of).sum::<Option<f64>>()
                })
            }
            Expr::Mul(v) => {
                let parts: Vec<Expr> = v.iter().map(|e| e.simplify()).collect();
                fold_or(Expr::Mul(parts.clone()), || {
                    parts.iter().map(const_of).product::<Option<f64>>()
                })
            }
            Expr::Neg(a) => unary(a, Expr::neg, |x| Some(-x)),
            Expr::Recip(a) => unary(a, Expr::recip, |x| if x != 0.0 { Some(1.0 / x) } else { None }),
            Expr::Exp(a) => unary(a, Expr::exp, |x| Some(x.exp())),
            Expr::Log(a) => unary(a, Expr::log, |x| if x > 0.0 { Some(x.ln()) } else { None }),
            Expr::Tanh(a) => unary(a, Expr::tanh, |x| Some(x.tanh())),
            Expr::Powi(a, k) => {
                let s = a.simplify();
                match const_of(&s) {
                    Some(x) => Expr::Const(x.powi(*k)),
                    None => Expr::powi(s, *k),
                }
            }
            Expr::Affine { bias, terms } => Expr::Affine {
                bias: *bias,
                terms: terms.iter().map(|(c, e)| (*c, e.simplify())).collect(),
            },
            Expr::Select { index, branches } => {
                let idx = index.simplify();
                let branches: Vec<Expr> = branches.iter().map(|e| e.simplify()).collect();
                if let Some(x) = const_of(&idx) {
                    if let Ok(k) = select_index(x, branches.len()) {
                        return branches[k].clone();
                    }
                }
                Expr::Select { index: Box::new(idx), branches }
            }
        }
    }
}

fn const_of(e: &Expr) -> Option<f64> {
    match e {
        Expr::Const(c) => Some(*c),
        _ => None,
    }
}

fn unary(
    a: &Expr,
    rebuild: impl Fn(Expr) -> Expr,
    fold: impl Fn(f64) -> Option<f64>,
) -> Expr {
    let s = a.simplify();
    match const_of(&s).and_then(fold) {
        Some(c) => Expr::Const(c),
        None => rebuild(s),
    }
}

fn fold_or(fallback: Expr, compute: impl Fn() -> Option<f64>) -> Expr {
    match compute() {
        Some(c) => Expr::Const(c),
        None => fallback,
    }
}

/// Round-to-index with a strict integrality check.
pub(crate) fn select_index(raw: f64, len: usize) -> Result<usize, EvalError> {
    let r = raw.round();
    if (raw - r).abs() > 1e-9 || r < 0.0 || r as usize >= len {
        return Err(EvalError::SelectRange { value: raw, len });
    }
    Ok(r as usize)
}

// ---------------------------------------------------------------------------
// Prefix s-expression syntax, e.g. "(add (mul 2 v1) v2)".
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Error)]
#[error("parse error at byte {pos}: {msg}")]
pub struct ParseError {
    pub pos: usize,
    pub msg: String,
}

/// Parse an expression; identifiers resolve through `parents` to `Arg`
/// positions.
pub fn parse_expr(src: &str, parents: &[&str]) -> Result<Expr, ParseError> {
    let mut p = Parser { src, pos: 0, parents };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != src.len() {
        return Err(p.err("trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    parents: &'a [&'a str],
}

impl<'a> Parser<'a> {
    fn err(&self, msg: &str) -> ParseError {
        ParseError { pos: self.pos, msg: msg.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src.as_bytes()[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.as_bytes().get(self.pos).copied()
    }

    fn token(&mut self) -> Result<&'a str, ParseError> {
        self.skip_ws();
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_whitespace() || c == b'(' || c == b')' {
                break;
            }
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("expected token"));
        }
        Ok(&self.src[start..self.pos])
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        self.skip_ws();
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let op = self.token()?;
                let e = self.form(op)?;
                self.skip_ws();
                if self.peek() != Some(b')') {
                    return Err(self.err("expected ')'"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(_) => {
                let at = self.pos;
                let tok = self.token()?;
                if let Ok(c) = tok.parse::<f64>() {
                    return Ok(Expr::Const(c));
                }
                match self.parents.iter().position(|p| *p == tok) {
                    Some(i) => Ok(Expr::Arg(i)),
                    None => Err(ParseError {
                        pos: at,
                        msg: format!("unknown identifier `{tok}` (not a declared parent)"),
                    }),
                }
            }
            None => Err(self.err("unexpected end of input")),
        }
    }

    fn args_until_close(&mut self) -> Result<Vec<Expr>, ParseError> {
        let mut out = Vec::new();
        loop {
            self.skip_ws();
            if self.peek() == Some(b')') {
                return Ok(out);
            }
            if self.peek().is_none() {
                return Err(self.err("unexpected end of input"));
            }
            out.push(self.expr()?);
        }
    }

    fn form(&mut self, op: &str) -> Result<Expr, ParseError> {
        match op {
            "add" | "mul" => {
                let args = self.args_until_close()?;
                if args.len() < 2 {
                    return Err(self.err("add/mul need at least two operands"));
                }
                Ok(if op == "add" { Expr::Add(args) } else { Expr::Mul(args) })
            }
            "neg" | "recip" | "exp" | "log" | "tanh" => {
                let mut args = self.args_until_close()?;
                if args.len() != 1 {
                    return Err(self.err("unary op takes one operand"));
                }
                let a = args.pop().unwrap();
                Ok(match op {
                    "neg" => Expr::neg(a),
                    "recip" => Expr::recip(a),
                    "exp" => Expr::exp(a),
                    "log" => Expr::log(a),
                    _ => Expr::tanh(a),
                })
            }
            "pow" => {
                let mut args = self.args_until_close()?;
                if args.len() != 2 {
                    return Err(self.err("pow takes expr and integer exponent"));
                }
                let k = match args.pop().unwrap() {
                    Expr::Const(c) if c.fract() == 0.0 => c as i32,
                    _ => return Err(self.err("pow exponent must be an integer literal")),
                };
                Ok(Expr::powi(args.pop().unwrap(), k))
            }
            "affine" => {
                let args = self.args_until_close()?;
                if args.is_empty() || args.len() % 2 == 0 {
                    return Err(self.err("affine takes bias then coeff/expr pairs"));
                }
                let bias = match args[0] {
                    Expr::Const(c) => c,
                    _ => return Err(self.err("affine bias must be a literal")),
                };
                let mut terms = Vec::new();
                for pair in args[1..].chunks(2) {
                    let c = match pair[0] {
                        Expr::Const(c) => c,
                        _ => return Err(self.err("affine coefficient must be a literal")),
                    };
                    terms.push((c, pair[1].clone()));
                }
                Ok(Expr::Affine { bias, terms })
            }
            "select" => {
                let mut args = self.args_until_close()?;
                if args.len() < 2 {
                    return Err(self.err("select takes an index and at least one branch"));
                }
                let index = args.remove(0);
                Ok(Expr::select(index, args))
            }
            other => Err(ParseError {
                pos: self.pos,
                msg: format!("unknown operator `{other}`"),
            }),
        }
    }
}

/// Render an expression back to the prefix syntax (used by fixture dumps).
pub fn print_expr(e: &Expr, parents: &[&str]) -> String {
    match e {
        Expr::Const(c) => format_const(*c),
        Expr::Arg(i) => parents.get(*i).map(|s| s.to_string()).unwrap_or(format!("_{i}")),
        Expr::Add(v) => nary("add", v, parents),
        Expr::Mul(v) => nary("mul", v, parents),
        Expr::Neg(a) => format!("(neg {})", print_expr(a, parents)),
        Expr::Recip(a) => format!("(recip {})", print_expr(a, parents)),
        Expr::Exp(a) => format!("(exp {})", print_expr(a, parents)),
        Expr::Log(a) => format!("(log {})", print_expr(a, parents)),
        Expr::Tanh(a) => format!("(tanh {})", print_expr(a, parents)),
        Expr::Powi(a, k) => format!("(pow {} {k})", print_expr(a, parents)),
        Expr::Affine { bias, terms } => {
            let mut s = format!("(affine {}", format_const(*bias));
            for (c, e) in terms {
                s.push_str(&format!(" {} {}", format_const(*c), print_expr(e, parents)));
            }
            s.push(')');
            s
        }
        Expr::Select { index, branches } => {
            let mut s = format!("(select {}", print_expr(index, parents));
            for b in branches {
                s.push_str(&format!(" {}", print_expr(b, parents)));
            }
            s.push(')');
            s
        }
    }
}

fn nary(op: &str, v: &[Expr], parents: &[&str]) -> String {
    let inner: Vec<String> = v.iter().map(|e| print_expr(e, parents)).collect();
    format!("({op} {})", inner.join(" "))
}

fn format_const(c: f64) -> String {
    if c == c.trunc() && c.abs() < 1e15 {
        format!("{c:.1}")
    } else {
        format!("{c}")
    }
}
