//! Analytic expressions over the state variables and their Taylor truncation.

use std::fmt;

use num_traits::{One, Signed, Zero};

use super::poly::{factorial, from_f64, rint, to_f64, Poly, Rational};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        match s {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Var(usize),
    Const(Rational),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    /// Division is only supported by expressions that are constant.
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
    Apply(Func, Box<Expr>),
}

impl Expr {
    pub fn var(i: usize) -> Self {
        Expr::Var(i)
    }

    pub fn constant(c: Rational) -> Self {
        Expr::Const(c)
    }

    pub fn apply(f: Func, arg: Expr) -> Self {
        Expr::Apply(f, Box::new(arg))
    }

    /// Float value at a point.
    pub fn eval_f64(&self, point: &[f64]) -> f64 {
        match self {
            Expr::Var(i) => point[*i],
            Expr::Const(c) => to_f64(c),
            Expr::Neg(a) => -a.eval_f64(point),
            Expr::Add(a, b) => a.eval_f64(point) + b.eval_f64(point),
            Expr::Sub(a, b) => a.eval_f64(point) - b.eval_f64(point),
            Expr::Mul(a, b) => a.eval_f64(point) * b.eval_f64(point),
            Expr::Div(a, b) => a.eval_f64(point) / b.eval_f64(point),
            Expr::Pow(a, k) => a.eval_f64(point).powi(*k as i32),
            Expr::Apply(f, a) => {
                let v = a.eval_f64(point);
                match f {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Exp => v.exp(),
                }
            }
        }
    }

    pub fn is_polynomial(&self) -> bool {
        match self {
            Expr::Var(_) | Expr::Const(_) => true,
            Expr::Neg(a) | Expr::Pow(a, _) => a.is_polynomial(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.is_polynomial() && b.is_polynomial()
            }
            Expr::Apply(..) => false,
        }
    }

    pub fn display_with<'a>(&'a self, names: &'a [String]) -> ExprDisplay<'a> {
        ExprDisplay { expr: self, names }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(..) => 3,
            Expr::Pow(..) => 4,
            Expr::Const(c) if !c.is_integer() || c.is_negative() => 2,
            _ => 5,
        }
    }
}

pub struct ExprDisplay<'a> {
    expr: &'a Expr,
    names: &'a [String],
}

impl fmt::Display for ExprDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(f, self.expr, self.names, 0)
    }
}

fn write_expr(f: &mut fmt::Formatter<'_>, e: &Expr, names: &[String], min_prec: u8) -> fmt::Result {
    let prec = e.precedence();
    let paren = prec < min_prec;
    if paren {
        f.write_str("(")?;
    }
    match e {
        Expr::Var(i) => f.write_str(&names[*i])?,
        Expr::Const(c) => write!(f, "{c}")?,
        Expr::Neg(a) => {
            f.write_str("-")?;
            write_expr(f, a, names, 4)?;
        }
        Expr::Add(a, b) => {
            write_expr(f, a, names, 1)?;
            f.write_str(" + ")?;
            write_expr(f, b, names, 2)?;
        }
        Expr::Sub(a, b) => {
            write_expr(f, a, names, 1)?;
            f.write_str(" - ")?;
            write_expr(f, b, names, 2)?;
        }
        Expr::Mul(a, b) => {
            write_expr(f, a, names, 2)?;
            f.write_str("*")?;
            write_expr(f, b, names, 3)?;
        }
        Expr::Div(a, b) => {
            write_expr(f, a, names, 2)?;
            f.write_str("/")?;
            write_expr(f, b, names, 5)?;
        }
        Expr::Pow(a, k) => {
            write_expr(f, a, names, 5)?;
            write!(f, "^{k}")?;
        }
        Expr::Apply(func, a) => {
            write!(f, "{}(", func.name())?;
            write_expr(f, a, names, 0)?;
            f.write_str(")")?;
        }
    }
    if paren {
        f.write_str(")")?;
    }
    Ok(())
}

/// Taylor polynomial of `expr` around `base`, in the shifted variables
/// `h = x - base`, keeping all terms of total degree `<= degree`.
///
/// Transcendental functions evaluated at a nonzero base value produce
/// coefficients that are exact rationals of the nearest `f64`.
pub fn taylor_truncate(expr: &Expr, base: &[Rational], degree: u32) -> Result<Poly> {
    let n = base.len();
    let p = match expr {
        Expr::Var(i) => {
            if *i >= n {
                return Err(Error::IndexOutOfRange { index: *i, len: n });
            }
            &Poly::var(n, *i) + &Poly::constant(n, base[*i].clone())
        }
        Expr::Const(c) => Poly::constant(n, c.clone()),
        Expr::Neg(a) => -&taylor_truncate(a, base, degree)?,
        Expr::Add(a, b) => &taylor_truncate(a, base, degree)? + &taylor_truncate(b, base, degree)?,
        Expr::Sub(a, b) => &taylor_truncate(a, base, degree)? - &taylor_truncate(b, base, degree)?,
        Expr::Mul(a, b) => {
            taylor_truncate(a, base, degree)?.mul_truncated(&taylor_truncate(b, base, degree)?, degree)
        }
        Expr::Div(a, b) => {
            let den = taylor_truncate(b, base, degree)?;
            if den.total_degree().unwrap_or(0) > 0 {
                return Err(Error::UnsupportedExpression(
                    "division by a non-constant expression".into(),
                ));
            }
            let c = den.constant_term();
            if c.is_zero() {
                return Err(Error::UnsupportedExpression("division by zero".into()));
            }
            taylor_truncate(a, base, degree)?.scale(&c.recip())
        }
        Expr::Pow(a, k) => {
            let inner = taylor_truncate(a, base, degree)?;
            let mut acc = Poly::one(n);
            for _ in 0..*k {
                acc = acc.mul_truncated(&inner, degree);
            }
            acc
        }
        Expr::Apply(func, a) => {
            let inner = taylor_truncate(a, base, degree)?;
            let c0 = inner.constant_term();
            let h = &inner - &Poly::constant(n, c0.clone());
            apply_series(*func, &c0, &h, degree)
        }
    };
    Ok(p.truncate(degree))
}

/// Series of `func(c0 + h)` where `h` has no constant term.
fn apply_series(func: Func, c0: &Rational, h: &Poly, degree: u32) -> Poly {
    let n = h.nvars();
    let (s0, c0v, e0) = if c0.is_zero() {
        (Rational::zero(), Rational::one(), Rational::one())
    } else {
        let v = to_f64(c0);
        (from_f64(v.sin()), from_f64(v.cos()), from_f64(v.exp()))
    };
    // powers of h up to `degree` (h^j has min degree >= j)
    let mut pows = vec![Poly::one(n)];
    for j in 1..=degree as usize {
        let next = pows[j - 1].mul_truncated(h, degree);
        pows.push(next);
    }
    let mut sin_h = Poly::zero(n);
    let mut cos_h = Poly::zero(n);
    let mut exp_h = Poly::zero(n);
    for (j, pj) in pows.iter().enumerate() {
        let inv = factorial(j as u32).recip();
        let term = pj.scale(&inv);
        exp_h = &exp_h + &term;
        let sign = if (j / 2) % 2 == 0 { rint(1) } else { rint(-1) };
        if j % 2 == 0 {
            cos_h = &cos_h + &term.scale(&sign);
        } else {
            sin_h = &sin_h + &term.scale(&sign);
        }
    }
    match func {
        Func::Sin => &cos_h.scale(&s0) + &sin_h.scale(&c0v),
        Func::Cos => &cos_h.scale(&c0v) - &sin_h.scale(&s0),
        Func::Exp => exp_h.scale(&e0),
    }
}

/// Recursive-descent parser for field component expressions.
pub struct ExprParser<'a> {
    src: &'a [u8],
    pos: usize,
    vars: &'a [String],
    line: usize,
    col_offset: usize,
}

impl<'a> ExprParser<'a> {
    /// `col_offset` is added to reported columns (1-based columns overall).
    pub fn new(src: &'a str, vars: &'a [String], line: usize, col_offset: usize) -> Self {
        Self {
            src: src.as_bytes(),
            pos: 0,
            vars,
            line,
            col_offset,
        }
    }

    pub fn parse(mut self) -> Result<Expr> {
        let e = self.expr()?;
        self.skip_ws();
        if self.pos < self.src.len() {
            return Err(self.err(format!("unexpected '{}'", self.src[self.pos] as char)));
        }
        Ok(e)
    }

    fn err(&self, message: String) -> Error {
        Error::Parse {
            line: self.line,
            column: self.col_offset + self.pos + 1,
            message,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(c) = self.peek() {
            match c {
                b'+' => {
                    self.pos += 1;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                b'-' => {
                    self.pos += 1;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(c) = self.peek() {
            match c {
                b'*' => {
                    self.pos += 1;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                b'/' => {
                    self.pos += 1;
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            let inner = self.unary()?;
            return Ok(match inner {
                Expr::Const(c) => Expr::Const(-c),
                other => Expr::Neg(Box::new(other)),
            });
        }
        if self.peek() == Some(b'+') {
            self.pos += 1;
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            self.skip_ws();
            let start = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if start == self.pos {
                return Err(self.err("expected a nonnegative integer exponent".into()));
            }
            let k: u32 = std::str::from_utf8(&self.src[start..self.pos])
                .unwrap()
                .parse()
                .map_err(|_| self.err("exponent too large".into()))?;
            return Ok(Expr::Pow(Box::new(base), k));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            None => Err(self.err("unexpected end of expression".into())),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("expected ')'".into()));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let start = self.pos;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let ident = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                if let Some(func) = Func::from_name(ident) {
                    if self.peek() != Some(b'(') {
                        return Err(self.err(format!("expected '(' after {ident}")));
                    }
                    self.pos += 1;
                    let arg = self.expr()?;
                    if self.peek() != Some(b')') {
                        return Err(self.err("expected ')'".into()));
                    }
                    self.pos += 1;
                    return Ok(Expr::apply(func, arg));
                }
                match self.vars.iter().position(|v| v == ident) {
                    Some(i) => Ok(Expr::Var(i)),
                    None => {
                        self.pos = start;
                        Err(self.err(format!("unknown identifier '{ident}'")))
                    }
                }
            }
            Some(c) => Err(self.err(format!("unexpected '{}'", c as char))),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        let int_part = std::str::from_utf8(&self.src[start..self.pos]).unwrap().to_string();
        let mut frac_part = String::new();
        if self.pos < self.src.len() && self.src[self.pos] == b'.' {
            self.pos += 1;
            let fs = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            frac_part = std::str::from_utf8(&self.src[fs..self.pos]).unwrap().to_string();
        }
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(self.err("malformed number".into()));
        }
        let digits = format!("{int_part}{frac_part}");
        let num: num_bigint::BigInt = digits
            .parse()
            .map_err(|_| self.err("malformed number".into()))?;
        let den = num_traits::pow(num_bigint::BigInt::from(10), frac_part.len());
        Ok(Expr::Const(Rational::new(num, den)))
    }
}

pub fn parse_expr(src: &str, vars: &[String]) -> Result<Expr> {
    ExprParser::new(src, vars, 1, 0).parse()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symfield::poly::rat;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn cos_and_sin_series() {
        let vars = names(&["t"]);
        let base = [rint(0)];
        let cos = taylor_truncate(&parse_expr("cos(t)", &vars).unwrap(), &base, 3).unwrap();
        let t = Poly::var(1, 0);
        assert_eq!(cos, &Poly::one(1) - &t.pow(2).scale(&rat(1, 2)));
        let sin = taylor_truncate(&parse_expr("sin(t)", &vars).unwrap(), &base, 3).unwrap();
        assert_eq!(sin, &t - &t.pow(3).scale(&rat(1, 6)));
        let cos1 = taylor_truncate(&parse_expr("cos(t)", &vars).unwrap(), &base, 1).unwrap();
        assert_eq!(cos1, Poly::one(1));
    }

    #[test]
    fn polynomial_expansion_is_exact_at_base() {
        let vars = names(&["x", "y"]);
        let e = parse_expr("x^2/2 - 3*x*y + 1/3", &vars).unwrap();
        let base = [rat(1, 2), rint(-2)];
        let p = taylor_truncate(&e, &base, 4).unwrap();
        // at h = 0 the shifted polynomial equals e(base)
        let at_base = p.evaluate(&[rint(0), rint(0)]).unwrap();
        assert_eq!(at_base, rat(1, 8) + rint(3) + rat(1, 3));
    }

    #[test]
    fn decimal_literals_are_exact() {
        let e = parse_expr("0.25", &[]).unwrap();
        assert_eq!(e, Expr::Const(rat(1, 4)));
    }

    #[test]
    fn parse_errors_carry_columns() {
        let vars = names(&["x"]);
        match parse_expr("x + q", &vars) {
            Err(Error::Parse { column, .. }) => assert_eq!(column, 5),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_expr("sin x", &vars).is_err());
        assert!(parse_expr("(x", &vars).is_err());
    }

    #[test]
    fn division_by_variable_is_rejected() {
        let vars = names(&["x"]);
        let e = parse_expr("1/x", &vars).unwrap();
        assert!(matches!(
            taylor_truncate(&e, &[rint(1)], 3),
            Err(Error::UnsupportedExpression(_))
        ));
    }

    #[test]
    fn display_parses_back() {
        let vars = names(&["x", "y", "theta"]);
        for src in ["-y/2", "x^2/2 + x*y", "cos(theta)", "-(x - y)^2", "1/2*x - sin(theta)*3"] {
            let e = parse_expr(src, &vars).unwrap();
            let printed = e.display_with(&vars).to_string();
            let again = parse_expr(&printed, &vars).unwrap();
            let base = [rint(0), rint(0), rint(0)];
            assert_eq!(
                taylor_truncate(&e, &base, 6).unwrap(),
                taylor_truncate(&again, &base, 6).unwrap(),
                "{src} -> {printed}"
            );
        }
    }

    #[test]
    fn exp_series_nonzero_base() {
        let vars = names(&["x"]);
        let e = parse_expr("exp(x)", &vars).unwrap();
        let p = taylor_truncate(&e, &[rint(1)], 8).unwrap();
        let v = p.eval_f64(&[0.1]);
        assert!((v - 1.1f64.exp()).abs() < 1e-9);
    }
}
