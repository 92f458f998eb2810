//! Arithmetic expressions in chart coordinates x1..xn with symbolic
//! differentiation.
//!
//! Grammar: `+ - * /`, unary minus, `pow(a, b)` (also `a^b`), `sin`, `cos`,
//! `exp`, `log`, numeric literals, `pi`, and variables `x1`..`xn`.

use crate::error::{Error, Result};
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
    Log(Box<Expr>),
}

use Expr::*;

fn b(e: Expr) -> Box<Expr> {
    Box::new(e)
}

impl Expr {
    pub fn parse(src: &str, dim: usize) -> Result<Expr> {
        let mut p = Parser { s: src.as_bytes(), pos: 0, dim };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != p.s.len() {
            return Err(p.err("trailing input"));
        }
        Ok(e.simplify())
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Const(c) => *c,
            Var(i) => x[*i],
            Add(a, c) => a.eval(x) + c.eval(x),
            Sub(a, c) => a.eval(x) - c.eval(x),
            Mul(a, c) => a.eval(x) * c.eval(x),
            Div(a, c) => a.eval(x) / c.eval(x),
            Neg(a) => -a.eval(x),
            Pow(a, c) => {
                if let Const(k) = **c {
                    if k == k.round() && k.abs() < 64.0 {
                        return a.eval(x).powi(k as i32);
                    }
                }
                a.eval(x).powf(c.eval(x))
            }
            Sin(a) => a.eval(x).sin(),
            Cos(a) => a.eval(x).cos(),
            Exp(a) => a.eval(x).exp(),
            Log(a) => a.eval(x).ln(),
        }
    }

    /// ∂/∂x_{var}.
    pub fn diff(&self, var: usize) -> Expr {
        let d = match self {
            Const(_) => Const(0.0),
            Var(i) => Const(if *i == var { 1.0 } else { 0.0 }),
            Add(a, c) => Add(b(a.diff(var)), b(c.diff(var))),
            Sub(a, c) => Sub(b(a.diff(var)), b(c.diff(var))),
            Mul(a, c) => Add(
                b(Mul(b(a.diff(var)), c.clone())),
                b(Mul(a.clone(), b(c.diff(var)))),
            ),
            Div(a, c) => Div(
                b(Sub(b(Mul(b(a.diff(var)), c.clone())), b(Mul(a.clone(), b(c.diff(var)))))),
                b(Pow(c.clone(), b(Const(2.0)))),
            ),
            Neg(a) => Neg(b(a.diff(var))),
            Pow(a, c) => {
                if let Const(k) = **c {
                    Mul(b(Mul(b(Const(k)), b(Pow(a.clone(), b(Const(k - 1.0)))))), b(a.diff(var)))
                } else {
                    Mul(
                        b(self.clone()),
                        b(Add(
                            b(Mul(b(c.diff(var)), b(Log(a.clone())))),
                            b(Div(b(Mul(c.clone(), b(a.diff(var)))), a.clone())),
                        )),
                    )
                }
            }
            Sin(a) => Mul(b(Cos(a.clone())), b(a.diff(var))),
            Cos(a) => Neg(b(Mul(b(Sin(a.clone())), b(a.diff(var))))),
            Exp(a) => Mul(b(Exp(a.clone())), b(a.diff(var))),
            Log(a) => Div(b(a.diff(var)), a.clone()),
        };
        d.simplify()
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Const(c) if *c == 0.0)
    }

    /// Constant folding and removal of additive/multiplicative identities.
    pub fn simplify(&self) -> Expr {
        match self {
            Const(_) | Var(_) => self.clone(),
            Add(a, c) => match (a.simplify(), c.simplify()) {
                (Const(x), Const(y)) => Const(x + y),
                (Const(z), e) | (e, Const(z)) if z == 0.0 => e,
                (x, y) => Add(b(x), b(y)),
            },
            Sub(a, c) => match (a.simplify(), c.simplify()) {
                (Const(x), Const(y)) => Const(x - y),
                (e, Const(z)) if z == 0.0 => e,
                (Const(z), e) if z == 0.0 => Neg(b(e)).simplify(),
                (x, y) => Sub(b(x), b(y)),
            },
            Mul(a, c) => match (a.simplify(), c.simplify()) {
                (Const(x), Const(y)) => Const(x * y),
                (Const(z), _) | (_, Const(z)) if z == 0.0 => Const(0.0),
                (Const(o), e) | (e, Const(o)) if o == 1.0 => e,
                (x, y) => Mul(b(x), b(y)),
            },
            Div(a, c) => match (a.simplify(), c.simplify()) {
                (Const(z), _) if z == 0.0 => Const(0.0),
                (Const(x), Const(y)) => Const(x / y),
                (e, Const(o)) if o == 1.0 => e,
                (x, y) => Div(b(x), b(y)),
            },
            Neg(a) => match a.simplify() {
                Const(x) => Const(-x),
                Neg(inner) => *inner,
                e => Neg(b(e)),
            },
            Pow(a, c) => match (a.simplify(), c.simplify()) {
                (Const(x), Const(y)) => Const(x.powf(y)),
                (_, Const(z)) if z == 0.0 => Const(1.0),
                (e, Const(o)) if o == 1.0 => e,
                (x, y) => Pow(b(x), b(y)),
            },
            Sin(a) => match a.simplify() {
                Const(x) => Const(x.sin()),
                e => Sin(b(e)),
            },
            Cos(a) => match a.simplify() {
                Const(x) => Const(x.cos()),
                e => Cos(b(e)),
            },
            Exp(a) => match a.simplify() {
                Const(x) => Const(x.exp()),
                e => Exp(b(e)),
            },
            Log(a) => match a.simplify() {
                Const(x) => Const(x.ln()),
                e => Log(b(e)),
            },
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Const(c) => write!(f, "{c}"),
            Var(i) => write!(f, "x{}", i + 1),
            Add(a, c) => write!(f, "({a} + {c})"),
            Sub(a, c) => write!(f, "({a} - {c})"),
            Mul(a, c) => write!(f, "({a} * {c})"),
            Div(a, c) => write!(f, "({a} / {c})"),
            Neg(a) => write!(f, "(-{a})"),
            Pow(a, c) => write!(f, "pow({a}, {c})"),
            Sin(a) => write!(f, "sin({a})"),
            Cos(a) => write!(f, "cos({a})"),
            Exp(a) => write!(f, "exp({a})"),
            Log(a) => write!(f, "log({a})"),
        }
    }
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
    dim: usize,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> Error {
        Error::Parse { pos: self.pos, msg: msg.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.s.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Add(b(lhs), b(self.term()?));
            } else if self.eat(b'-') {
                lhs = Sub(b(lhs), b(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = Mul(b(lhs), b(self.unary()?));
            } else if self.eat(b'/') {
                lhs = Div(b(lhs), b(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(b'-') {
            return Ok(Neg(b(self.unary()?)));
        }
        if self.eat(b'+') {
            return self.unary();
        }
        let base = self.primary()?;
        if self.eat(b'^') {
            return Ok(Pow(b(base), b(self.unary()?)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.err("expected ')'"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.ident(),
            _ => Err(self.err("expected a number, variable, function or '('")),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        while self.pos < self.s.len() && (self.s[self.pos].is_ascii_digit() || self.s[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < self.s.len() && (self.s[self.pos] == b'e' || self.s[self.pos] == b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < self.s.len() && (self.s[self.pos] == b'+' || self.s[self.pos] == b'-') {
                self.pos += 1;
            }
            if self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
                while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            } else {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.s[start..self.pos]).unwrap();
        text.parse::<f64>().map(Const).map_err(|_| Error::Parse { pos: start, msg: format!("bad number '{text}'") })
    }

    fn ident(&mut self) -> Result<Expr> {
        let start = self.pos;
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.s[start..self.pos]).unwrap().to_string();
        if let Some(idx) = name.strip_prefix('x') {
            let i: usize = idx.parse().map_err(|_| Error::Parse { pos: start, msg: format!("unknown name '{name}'") })?;
            if i == 0 || i > self.dim {
                return Err(Error::Parse { pos: start, msg: format!("coordinate '{name}' outside x1..x{}", self.dim) });
            }
            return Ok(Var(i - 1));
        }
        if name == "pi" {
            return Ok(Const(std::f64::consts::PI));
        }
        let arity = match name.as_str() {
            "sin" | "cos" | "exp" | "log" => 1,
            "pow" => 2,
            _ => return Err(Error::Parse { pos: start, msg: format!("unknown name '{name}'") }),
        };
        if !self.eat(b'(') {
            return Err(self.err("expected '(' after function name"));
        }
        let a = self.expr()?;
        let e = if arity == 2 {
            if !self.eat(b',') {
                return Err(self.err("expected ','"));
            }
            let c = self.expr()?;
            Pow(b(a), b(c))
        } else {
            match name.as_str() {
                "sin" => Sin(b(a)),
                "cos" => Cos(b(a)),
                "exp" => Exp(b(a)),
                _ => Log(b(a)),
            }
        };
        if !self.eat(b')') {
            return Err(self.err("expected ')'"));
        }
        Ok(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_and_evaluates() {
        let e = Expr::parse("1 + 0.5*sin(x1)*cos(x2) - pow(x1, 2)/4 + 2^3", 2).unwrap();
        let x = [0.3, -1.1];
        let exact = 1.0 + 0.5 * 0.3f64.sin() * (-1.1f64).cos() - 0.09 / 4.0 + 8.0;
        assert!((e.eval(&x) - exact).abs() < 1e-15);
        assert_eq!(Expr::parse("-x1", 1).unwrap().eval(&[2.0]), -2.0);
        assert!((Expr::parse("1e-2*x1", 1).unwrap().eval(&[3.0]) - 0.03).abs() < 1e-16);
    }

    #[test]
    fn rejects_garbage() {
        assert!(Expr::parse("x3", 2).is_err());
        assert!(Expr::parse("sin x1", 1).is_err());
        assert!(Expr::parse("1 +", 1).is_err());
        assert!(Expr::parse("foo(1)", 1).is_err());
        assert!(Expr::parse("(1", 1).is_err());
    }

    #[test]
    fn derivative_of_sphere_metric() {
        let g = Expr::parse("pow(sin(x1), 2)", 2).unwrap();
        let d = g.diff(0);
        let th: f64 = 0.8;
        assert!((d.eval(&[th, 0.0]) - 2.0 * th.sin() * th.cos()).abs() < 1e-15);
        assert!(g.diff(1).is_zero());
    }

    proptest! {
        #[test]
        fn derivative_matches_difference_quotient(x in -2.0f64..2.0, y in -2.0f64..2.0) {
            let e = Expr::parse("exp(0.3*x1)*cos(x2 + x1*x2)/(2 + sin(x1)) + pow(1 + x2*x2, 0.5)", 2).unwrap();
            for v in 0..2 {
                let h = 1e-5;
                let mut p = [x, y];
                let mut m = [x, y];
                p[v] += h;
                m[v] -= h;
                let fd = (e.eval(&p) - e.eval(&m)) / (2.0 * h);
                prop_assert!((e.diff(v).eval(&[x, y]) - fd).abs() < 1e-7);
            }
        }
    }
}
