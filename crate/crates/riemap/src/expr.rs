//! Closed-form field expressions: a tiny grammar (reals, coordinates
//! `x1..x6`, `+ - * / ^`, `exp`, `log`, `sqrt`, `sin`, `cos`, parentheses)
//! parsed into trees that evaluate through jet arithmetic at any order.
//!
//! The grammar is deliberately small so that every parseable field is
//! jet-evaluable. Printing uses the shortest exact `f64` representation, so
//! `parse ∘ to_string` is the identity on the tree and on every evaluation.

use std::fmt;
use std::str::FromStr;

use crate::jets::{space, Jet, JetSpace};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    /// Zero-based coordinate index (`x1` parses to `Var(0)`).
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Exp(Box<Expr>),
    Log(Box<Expr>),
    Sqrt(Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
}

impl Expr {
    pub fn parse(text: &str) -> Result<Expr> {
        Parser::new(text).parse_full()
    }

    /// Highest coordinate index used, if any (zero-based).
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Neg(a) | Expr::Exp(a) | Expr::Log(a) | Expr::Sqrt(a) | Expr::Sin(a)
            | Expr::Cos(a) => a.max_var(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b)
            | Expr::Pow(a, b) => match (a.max_var(), b.max_var()) {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, y) => x.or(y),
            },
        }
    }

    pub fn is_constant(&self) -> bool {
        self.max_var().is_none()
    }

    /// Shift every coordinate index by `offset` (used to relabel fiber
    /// coordinates onto a product chart).
    pub fn shift_vars(&self, offset: usize) -> Expr {
        match self {
            Expr::Const(c) => Expr::Const(*c),
            Expr::Var(i) => Expr::Var(i + offset),
            Expr::Neg(a) => Expr::Neg(Box::new(a.shift_vars(offset))),
            Expr::Exp(a) => Expr::Exp(Box::new(a.shift_vars(offset))),
            Expr::Log(a) => Expr::Log(Box::new(a.shift_vars(offset))),
            Expr::Sqrt(a) => Expr::Sqrt(Box::new(a.shift_vars(offset))),
            Expr::Sin(a) => Expr::Sin(Box::new(a.shift_vars(offset))),
            Expr::Cos(a) => Expr::Cos(Box::new(a.shift_vars(offset))),
            Expr::Add(a, b) => Expr::Add(Box::new(a.shift_vars(offset)), Box::new(b.shift_vars(offset))),
            Expr::Sub(a, b) => Expr::Sub(Box::new(a.shift_vars(offset)), Box::new(b.shift_vars(offset))),
            Expr::Mul(a, b) => Expr::Mul(Box::new(a.shift_vars(offset)), Box::new(b.shift_vars(offset))),
            Expr::Div(a, b) => Expr::Div(Box::new(a.shift_vars(offset)), Box::new(b.shift_vars(offset))),
            Expr::Pow(a, b) => Expr::Pow(Box::new(a.shift_vars(offset)), Box::new(b.shift_vars(offset))),
        }
    }

    /// Evaluate as a jet at the point `p`, seeding each coordinate as a
    /// variable of the given space.
    pub fn eval_jet(&self, p: &[f64], sp: &'static JetSpace) -> Result<Jet> {
        match self {
            Expr::Const(c) => Ok(Jet::constant(*c, sp)),
            Expr::Var(i) => {
                if *i >= p.len() {
                    return Err(Error::VarIndex(*i, p.len()));
                }
                Jet::variable(*i, p[*i], sp)
            }
            Expr::Neg(a) => Ok(a.eval_jet(p, sp)?.neg()),
            Expr::Add(a, b) => Ok(a.eval_jet(p, sp)?.add(&b.eval_jet(p, sp)?)),
            Expr::Sub(a, b) => Ok(a.eval_jet(p, sp)?.sub(&b.eval_jet(p, sp)?)),
            Expr::Mul(a, b) => Ok(a.eval_jet(p, sp)?.mul(&b.eval_jet(p, sp)?)),
            Expr::Div(a, b) => a.eval_jet(p, sp)?.try_div(&b.eval_jet(p, sp)?),
            Expr::Pow(a, b) => {
                let base = a.eval_jet(p, sp)?;
                if b.is_constant() {
                    let e = b.eval_f64(p)?;
                    if e.fract() == 0.0 && e.abs() <= 64.0 {
                        Ok(base.powi(e as i32))
                    } else {
                        base.try_powf(e)
                    }
                } else {
                    // a^b = exp(b log a) for a genuinely varying exponent
                    let expo = b.eval_jet(p, sp)?;
                    Ok(expo.mul(&base.try_ln()?).exp())
                }
            }
            Expr::Exp(a) => Ok(a.eval_jet(p, sp)?.exp()),
            Expr::Log(a) => a.eval_jet(p, sp)?.try_ln(),
            Expr::Sqrt(a) => a.eval_jet(p, sp)?.try_sqrt(),
            Expr::Sin(a) => Ok(a.eval_jet(p, sp)?.sin()),
            Expr::Cos(a) => Ok(a.eval_jet(p, sp)?.cos()),
        }
    }

    /// Plain value at a point (order-0 fast path).
    pub fn eval_f64(&self, p: &[f64]) -> Result<f64> {
        match self {
            Expr::Const(c) => Ok(*c),
            Expr::Var(i) => {
                if *i >= p.len() {
                    return Err(Error::VarIndex(*i, p.len()));
                }
                Ok(p[*i])
            }
            Expr::Neg(a) => Ok(-a.eval_f64(p)?),
            Expr::Add(a, b) => Ok(a.eval_f64(p)? + b.eval_f64(p)?),
            Expr::Sub(a, b) => Ok(a.eval_f64(p)? - b.eval_f64(p)?),
            Expr::Mul(a, b) => Ok(a.eval_f64(p)? * b.eval_f64(p)?),
            Expr::Div(a, b) => Ok(a.eval_f64(p)? / b.eval_f64(p)?),
            Expr::Pow(a, b) => Ok(a.eval_f64(p)?.powf(b.eval_f64(p)?)),
            Expr::Exp(a) => Ok(a.eval_f64(p)?.exp()),
            Expr::Log(a) => Ok(a.eval_f64(p)?.ln()),
            Expr::Sqrt(a) => Ok(a.eval_f64(p)?.sqrt()),
            Expr::Sin(a) => Ok(a.eval_f64(p)?.sin()),
            Expr::Cos(a) => Ok(a.eval_f64(p)?.cos()),
        }
    }

    /// Evaluate at order zero and fail on any non-finite intermediate.
    pub fn eval_checked(&self, p: &[f64]) -> Result<f64> {
        let v = self.eval_jet(p, space(p.len().max(1), 0))?.value();
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Domain {
                op: "eval",
                msg: format!("non-finite value at {p:?}"),
            })
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => {
                if *c < 0.0 {
                    write!(f, "({c:?})")
                } else {
                    write!(f, "{c:?}")
                }
            }
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, b) => write!(f, "({a} ^ {b})"),
            Expr::Exp(a) => write!(f, "exp({a})"),
            Expr::Log(a) => write!(f, "log({a})"),
            Expr::Sqrt(a) => write!(f, "sqrt({a})"),
            Expr::Sin(a) => write!(f, "sin({a})"),
            Expr::Cos(a) => write!(f, "cos({a})"),
        }
    }
}

impl FromStr for Expr {
    type Err = Error;
    fn from_str(s: &str) -> Result<Expr> {
        Expr::parse(s)
    }
}

struct Parser<'a> {
    text: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Parser {
            text,
            bytes: text.as_bytes(),
            pos: 0,
        }
    }

    /// Offsets in errors are 1-based columns.
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            offset: self.pos + 1,
            msg: msg.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn parse_full(mut self) -> Result<Expr> {
        let e = self.parse_sum()?;
        self.skip_ws();
        if self.pos != self.bytes.len() {
            return Err(self.err(format!(
                "unexpected `{}`",
                &self.text[self.pos..self.text.len().min(self.pos + 8)]
            )));
        }
        Ok(e)
    }

    fn parse_sum(&mut self) -> Result<Expr> {
        let mut lhs = self.parse_term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    let rhs = self.parse_term()?;
                    lhs = Expr::Add(Box::new(lhs), Box::new(rhs));
                }
                Some(b'-') => {
                    self.pos += 1;
                    let rhs = self.parse_term()?;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn parse_term(&mut self) -> Result<Expr> {
        let mut lhs = self.parse_unary()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    let rhs = self.parse_unary()?;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(rhs));
                }
                Some(b'/') => {
                    self.pos += 1;
                    let rhs = self.parse_unary()?;
                    lhs = Expr::Div(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn parse_unary(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.parse_unary()?)))
            }
            Some(b'+') => {
                self.pos += 1;
                self.parse_unary()
            }
            _ => self.parse_power(),
        }
    }

    fn parse_power(&mut self) -> Result<Expr> {
        let base = self.parse_atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            // right-associative; `-` binds tighter in the exponent (2^-1)
            let expo = self.parse_unary_power()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(expo)));
        }
        Ok(base)
    }

    fn parse_unary_power(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.parse_unary_power()?)))
            }
            _ => self.parse_power(),
        }
    }

    fn parse_atom(&mut self) -> Result<Expr> {
        match self.peek() {
            None => Err(self.err("unexpected end of expression")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.parse_sum()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("expected `)`"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.parse_number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.parse_ident(),
            Some(c) => Err(self.err(format!("unexpected character `{}`", c as char))),
        }
    }

    fn parse_number(&mut self) -> Result<Expr> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.bytes.len()
            && (self.bytes[self.pos].is_ascii_digit() || self.bytes[self.pos] == b'.')
        {
            self.pos += 1;
        }
        // exponent part
        if self.pos < self.bytes.len() && (self.bytes[self.pos] | 0x20) == b'e' {
            let mark = self.pos;
            self.pos += 1;
            if self.pos < self.bytes.len() && (self.bytes[self.pos] == b'+' || self.bytes[self.pos] == b'-')
            {
                self.pos += 1;
            }
            if self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            } else {
                self.pos = mark;
            }
        }
        let lit = &self.text[start..self.pos];
        lit.parse::<f64>()
            .map(Expr::Const)
            .map_err(|_| Error::Parse {
                offset: start + 1,
                msg: format!("bad number literal `{lit}`"),
            })
    }

    fn parse_ident(&mut self) -> Result<Expr> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.bytes.len()
            && (self.bytes[self.pos].is_ascii_alphanumeric() || self.bytes[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = &self.text[start..self.pos];
        if let Some(rest) = name.strip_prefix('x') {
            if let Ok(i) = rest.parse::<usize>() {
                if (1..=crate::jets::MAX_VARS).contains(&i) {
                    return Ok(Expr::Var(i - 1));
                }
                return Err(Error::Parse {
                    offset: start + 1,
                    msg: format!("coordinate `{name}` out of range x1..x{}", crate::jets::MAX_VARS),
                });
            }
        }
        let func = match name {
            "exp" => Expr::Exp as fn(Box<Expr>) -> Expr,
            "log" => Expr::Log,
            "sqrt" => Expr::Sqrt,
            "sin" => Expr::Sin,
            "cos" => Expr::Cos,
            _ => {
                return Err(Error::Parse {
                    offset: start + 1,
                    msg: format!("unknown symbol `{name}`"),
                })
            }
        };
        if self.peek() != Some(b'(') {
            return Err(self.err(format!("`{name}` expects parenthesized argument")));
        }
        self.pos += 1;
        let arg = self.parse_sum()?;
        if self.peek() != Some(b')') {
            return Err(self.err("expected `)`"));
        }
        self.pos += 1;
        Ok(func(Box::new(arg)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn parses_nested_unary_and_binary() {
        let e = Expr::parse("exp(2*sin(x1))").unwrap();
        let v = e.eval_f64(&[0.4]).unwrap();
        assert_abs_diff_eq!(v, (2.0 * 0.4f64.sin()).exp(), epsilon = 1e-15);
    }

    #[test]
    fn error_carries_offset() {
        let err = Expr::parse("sin(x1").unwrap_err();
        match err {
            Error::Parse { offset, .. } => assert_eq!(offset, 7),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn arithmetic_evaluates() {
        let e = Expr::parse("x1^2 + cos(x2)*x3").unwrap();
        let v = e.eval_f64(&[1.0, 0.0, 2.0]).unwrap();
        assert_abs_diff_eq!(v, 3.0, epsilon = 1e-15);
    }

    #[test]
    fn unknown_symbol_rejected() {
        assert!(Expr::parse("tan(x1)").is_err());
        assert!(Expr::parse("x9 + 1").is_err());
        assert!(Expr::parse("y1").is_err());
    }

    #[test]
    fn display_round_trips_exactly() {
        let cases = [
            "exp(2*sin(x1)) - 0.125*x2^3/(1 + x1^2)",
            "-x1 + 4/(1+x1^2+x2^2)^2",
            "sqrt(exp(x1))*cos(2*x2 - 1e-3)",
            "2^-2 + x1^-1",
        ];
        for src in cases {
            let a = Expr::parse(src).unwrap();
            let b = Expr::parse(&a.to_string()).unwrap();
            assert_eq!(a, b, "round trip of `{src}`");
        }
    }

    #[test]
    fn jet_eval_matches_value_eval() {
        let e = Expr::parse("sin(x1*x2) + exp(x2)/(1 + x1^2)").unwrap();
        let p = [0.3, -0.7];
        let j = e.eval_jet(&p, crate::jets::space(2, 3)).unwrap();
        assert_abs_diff_eq!(j.value(), e.eval_f64(&p).unwrap(), epsilon = 1e-15);
    }

    #[test]
    fn power_handles_negative_base_integer_exponent() {
        let e = Expr::parse("(x1 - 2)^2").unwrap();
        let j = e.eval_jet(&[0.0], crate::jets::space(1, 2)).unwrap();
        assert_abs_diff_eq!(j.value(), 4.0, epsilon = 1e-15);
        // derivative 2(x-2) = -4
        assert_abs_diff_eq!(j.coeffs()[1], -4.0, epsilon = 1e-15);
    }
}
