//! A small arithmetic expression grammar over one variable.
//!
//! Fixture files describe Stackel-matrix entries and potentials as strings
//! like `"2 + sin(x)/2"` in the row's own coordinate. The grammar covers
//! literals, `x`, `pi`, the operators `+ - * / ^`, unary minus, parentheses
//! and the functions `sin`, `cos`, `exp`, `log`. Parsed expressions carry
//! exact symbolic first and second derivatives so that downstream code never
//! has to differentiate numerically.

use std::fmt;
use std::sync::Arc;

use crate::error::GeometryError;

#[derive(Debug, Clone)]
pub enum Expr {
    Num(f64),
    Var,
    Add(Arc<Expr>, Arc<Expr>),
    Sub(Arc<Expr>, Arc<Expr>),
    Mul(Arc<Expr>, Arc<Expr>),
    Div(Arc<Expr>, Arc<Expr>),
    Pow(Arc<Expr>, Arc<Expr>),
    Neg(Arc<Expr>),
    Sin(Arc<Expr>),
    Cos(Arc<Expr>),
    Exp(Arc<Expr>),
    Log(Arc<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Arc<Expr>, GeometryError> {
        let mut p = Parser { src, chars: src.char_indices().peekable() };
        let e = p.expr().map_err(|msg| GeometryError::Parse { src: src.to_string(), msg })?;
        p.skip_ws();
        if let Some((i, c)) = p.chars.peek().copied() {
            return Err(GeometryError::Parse {
                src: src.to_string(),
                msg: format!("unexpected `{c}` at byte {i}"),
            });
        }
        Ok(simplify(&e))
    }

    pub fn num(v: f64) -> Arc<Expr> {
        Arc::new(Expr::Num(v))
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var => x,
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Sub(a, b) => a.eval(x) - b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Div(a, b) => a.eval(x) / b.eval(x),
            Expr::Pow(a, b) => a.eval(x).powf(b.eval(x)),
            Expr::Neg(a) => -a.eval(x),
            Expr::Sin(a) => a.eval(x).sin(),
            Expr::Cos(a) => a.eval(x).cos(),
            Expr::Exp(a) => a.eval(x).exp(),
            Expr::Log(a) => a.eval(x).ln(),
        }
    }

    /// Symbolic derivative. The result is constant-folded but not otherwise
    /// simplified; second derivatives stay cheap enough for the integrators.
    pub fn diff(self: &Arc<Expr>) -> Arc<Expr> {
        use Expr::*;
        let d = match &**self {
            Num(_) => Num(0.0),
            Var => Num(1.0),
            Add(a, b) => Add(a.diff(), b.diff()),
            Sub(a, b) => Sub(a.diff(), b.diff()),
            Mul(a, b) => Add(
                Arc::new(Mul(a.diff(), b.clone())),
                Arc::new(Mul(a.clone(), b.diff())),
            ),
            Div(a, b) => Div(
                Arc::new(Sub(
                    Arc::new(Mul(a.diff(), b.clone())),
                    Arc::new(Mul(a.clone(), b.diff())),
                )),
                Arc::new(Mul(b.clone(), b.clone())),
            ),
            Pow(a, b) => match &**b {
                // a(x)^c with constant exponent: c a^(c-1) a'
                Num(c) => Mul(
                    Arc::new(Mul(Expr::num(*c), Arc::new(Pow(a.clone(), Expr::num(c - 1.0))))),
                    a.diff(),
                ),
                // general a^b = exp(b log a)
                _ => Mul(
                    Arc::new(Pow(a.clone(), b.clone())),
                    Arc::new(Add(
                        Arc::new(Mul(b.diff(), Arc::new(Log(a.clone())))),
                        Arc::new(Div(Arc::new(Mul(b.clone(), a.diff())), a.clone())),
                    )),
                ),
            },
            Neg(a) => Neg(a.diff()),
            Sin(a) => Mul(Arc::new(Cos(a.clone())), a.diff()),
            Cos(a) => Neg(Arc::new(Mul(Arc::new(Sin(a.clone())), a.diff()))),
            Exp(a) => Mul(Arc::new(Exp(a.clone())), a.diff()),
            Log(a) => Div(a.diff(), a.clone()),
        };
        simplify(&Arc::new(d))
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Var => write!(f, "x"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, b) => write!(f, "({a} ^ {b})"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Sin(a) => write!(f, "sin({a})"),
            Expr::Cos(a) => write!(f, "cos({a})"),
            Expr::Exp(a) => write!(f, "exp({a})"),
            Expr::Log(a) => write!(f, "log({a})"),
        }
    }
}

/// Constant folding plus removal of 0/1 identities. Keeps derivative trees
/// from growing quadratically when taking second derivatives.
fn simplify(e: &Arc<Expr>) -> Arc<Expr> {
    use Expr::*;
    let folded = match &**e {
        Add(a, b) => {
            let (a, b) = (simplify(a), simplify(b));
            match (&*a, &*b) {
                (Num(x), Num(y)) => Num(x + y),
                (Num(z), _) if *z == 0.0 => return b,
                (_, Num(z)) if *z == 0.0 => return a,
                _ => Add(a, b),
            }
        }
        Sub(a, b) => {
            let (a, b) = (simplify(a), simplify(b));
            match (&*a, &*b) {
                (Num(x), Num(y)) => Num(x - y),
                (_, Num(z)) if *z == 0.0 => return a,
                (Num(z), _) if *z == 0.0 => Neg(b),
                _ => Sub(a, b),
            }
        }
        Mul(a, b) => {
            let (a, b) = (simplify(a), simplify(b));
            match (&*a, &*b) {
                (Num(x), Num(y)) => Num(x * y),
                (Num(z), _) | (_, Num(z)) if *z == 0.0 => Num(0.0),
                (Num(o), _) if *o == 1.0 => return b,
                (_, Num(o)) if *o == 1.0 => return a,
                _ => Mul(a, b),
            }
        }
        Div(a, b) => {
            let (a, b) = (simplify(a), simplify(b));
            match (&*a, &*b) {
                (Num(x), Num(y)) if *y != 0.0 => Num(x / y),
                (Num(z), _) if *z == 0.0 => Num(0.0),
                (_, Num(o)) if *o == 1.0 => return a,
                _ => Div(a, b),
            }
        }
        Pow(a, b) => {
            let (a, b) = (simplify(a), simplify(b));
            match (&*a, &*b) {
                (Num(x), Num(y)) => Num(x.powf(*y)),
                (_, Num(o)) if *o == 1.0 => return a,
                (_, Num(z)) if *z == 0.0 => Num(1.0),
                _ => Pow(a, b),
            }
        }
        Neg(a) => {
            let a = simplify(a);
            match &*a {
                Num(x) => Num(-x),
                _ => Neg(a),
            }
        }
        Sin(a) => {
            let a = simplify(a);
            match &*a {
                Num(x) => Num(x.sin()),
                _ => Sin(a),
            }
        }
        Cos(a) => {
            let a = simplify(a);
            match &*a {
                Num(x) => Num(x.cos()),
                _ => Cos(a),
            }
        }
        Exp(a) => {
            let a = simplify(a);
            match &*a {
                Num(x) => Num(x.exp()),
                _ => Exp(a),
            }
        }
        Log(a) => {
            let a = simplify(a);
            match &*a {
                Num(x) if *x > 0.0 => Num(x.ln()),
                _ => Log(a),
            }
        }
        other => other.clone(),
    };
    Arc::new(folded)
}

struct Parser<'a> {
    src: &'a str,
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while matches!(self.chars.peek(), Some((_, c)) if c.is_whitespace()) {
            self.chars.next();
        }
    }

    fn expr(&mut self) -> Result<Arc<Expr>, String> {
        let mut lhs = self.term()?;
        loop {
            self.skip_ws();
            match self.chars.peek().copied() {
                Some((_, '+')) => {
                    self.chars.next();
                    let rhs = self.term()?;
                    lhs = Arc::new(Expr::Add(lhs, rhs));
                }
                Some((_, '-')) => {
                    self.chars.next();
                    let rhs = self.term()?;
                    lhs = Arc::new(Expr::Sub(lhs, rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Arc<Expr>, String> {
        let mut lhs = self.unary()?;
        loop {
            self.skip_ws();
            match self.chars.peek().copied() {
                Some((_, '*')) => {
                    self.chars.next();
                    let rhs = self.unary()?;
                    lhs = Arc::new(Expr::Mul(lhs, rhs));
                }
                Some((_, '/')) => {
                    self.chars.next();
                    let rhs = self.unary()?;
                    lhs = Arc::new(Expr::Div(lhs, rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Arc<Expr>, String> {
        self.skip_ws();
        if matches!(self.chars.peek(), Some((_, '-'))) {
            self.chars.next();
            let inner = self.unary()?;
            return Ok(Arc::new(Expr::Neg(inner)));
        }
        if matches!(self.chars.peek(), Some((_, '+'))) {
            self.chars.next();
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Arc<Expr>, String> {
        let base = self.atom()?;
        self.skip_ws();
        if matches!(self.chars.peek(), Some((_, '^'))) {
            self.chars.next();
            // right associative, binds tighter than unary minus on the right
            let exp = self.unary()?;
            return Ok(Arc::new(Expr::Pow(base, exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Arc<Expr>, String> {
        self.skip_ws();
        match self.chars.peek().copied() {
            Some((_, '(')) => {
                self.chars.next();
                let inner = self.expr()?;
                self.skip_ws();
                match self.chars.next() {
                    Some((_, ')')) => Ok(inner),
                    _ => Err("expected `)`".into()),
                }
            }
            Some((start, c)) if c.is_ascii_digit() || c == '.' => {
                let mut end = start;
                while let Some((i, c)) = self.chars.peek().copied() {
                    if c.is_ascii_digit() || c == '.' {
                        end = i + c.len_utf8();
                        self.chars.next();
                    } else if c == 'e' || c == 'E' {
                        // scientific notation: e[+-]?digits
                        let mut probe = self.chars.clone();
                        probe.next();
                        let mut k = i + 1;
                        if let Some((j, s)) = probe.peek().copied() {
                            if s == '+' || s == '-' {
                                probe.next();
                                k = j + 1;
                            }
                        }
                        if matches!(probe.peek(), Some((_, d)) if d.is_ascii_digit()) {
                            self.chars.next(); // e
                            if k > i + 1 {
                                self.chars.next(); // sign
                            }
                            while let Some((j, d)) = self.chars.peek().copied() {
                                if d.is_ascii_digit() {
                                    end = j + 1;
                                    self.chars.next();
                                } else {
                                    break;
                                }
                            }
                        }
                        break;
                    } else {
                        break;
                    }
                }
                let text = &self.src[start..end];
                text.parse::<f64>()
                    .map(Expr::num)
                    .map_err(|_| format!("bad number literal `{text}`"))
            }
            Some((start, c)) if c.is_ascii_alphabetic() => {
                let mut end = start;
                while let Some((i, c)) = self.chars.peek().copied() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        end = i + c.len_utf8();
                        self.chars.next();
                    } else {
                        break;
                    }
                }
                let name = &self.src[start..end];
                match name {
                    "x" => Ok(Arc::new(Expr::Var)),
                    "pi" => Ok(Expr::num(std::f64::consts::PI)),
                    "sin" | "cos" | "exp" | "log" => {
                        self.skip_ws();
                        match self.chars.next() {
                            Some((_, '(')) => {}
                            _ => return Err(format!("expected `(` after `{name}`")),
                        }
                        let arg = self.expr()?;
                        self.skip_ws();
                        match self.chars.next() {
                            Some((_, ')')) => {}
                            _ => return Err(format!("unclosed argument of `{name}`")),
                        }
                        Ok(Arc::new(match name {
                            "sin" => Expr::Sin(arg),
                            "cos" => Expr::Cos(arg),
                            "exp" => Expr::Exp(arg),
                            _ => Expr::Log(arg),
                        }))
                    }
                    _ => Err(format!("unknown identifier `{name}`")),
                }
            }
            Some((i, c)) => Err(format!("unexpected `{c}` at byte {i}")),
            None => Err("unexpected end of input".into()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Arc<Expr> {
        Expr::parse(s).unwrap()
    }

    #[test]
    fn parses_and_evaluates() {
        assert_eq!(p("2 + 3*4").eval(0.0), 14.0);
        assert_eq!(p("2^3^2").eval(0.0), 512.0); // right associative
        assert_eq!(p("-x^2").eval(3.0), -9.0);
        assert!((p("sin(pi/2)").eval(0.0) - 1.0).abs() < 1e-15);
        assert!((p("exp(log(2.5))").eval(0.0) - 2.5).abs() < 1e-12);
        assert!((p("1e-2 + 1E2").eval(0.0) - 100.01).abs() < 1e-12);
    }

    #[test]
    fn rejects_garbage() {
        assert!(Expr::parse("2 +").is_err());
        assert!(Expr::parse("sin x").is_err());
        assert!(Expr::parse("y + 1").is_err());
        assert!(Expr::parse("(1 + 2").is_err());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let cases = [
            "2 + sin(x)/2",
            "exp(2*x)",
            "x^3 - 4*x + 1",
            "1/(2 + cos(x))",
            "log(2 + x^2)",
            "(1 + x^2/2)^1.5",
            "x^x",
        ];
        for src in cases {
            let e = p(src);
            let d1 = e.diff();
            let d2 = d1.diff();
            for &x in &[0.3, 0.9, 1.7] {
                let h = 1e-5;
                let fd1 = (e.eval(x + h) - e.eval(x - h)) / (2.0 * h);
                let fd2 = (e.eval(x + h) - 2.0 * e.eval(x) + e.eval(x - h)) / (h * h);
                assert!(
                    (d1.eval(x) - fd1).abs() <= 1e-6 * (1.0 + fd1.abs()),
                    "{src}: d1 at {x}: {} vs {}",
                    d1.eval(x),
                    fd1
                );
                assert!(
                    (d2.eval(x) - fd2).abs() <= 1e-4 * (1.0 + fd2.abs()),
                    "{src}: d2 at {x}: {} vs {}",
                    d2.eval(x),
                    fd2
                );
            }
        }
    }
}
