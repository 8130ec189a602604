//! Scalar expressions in one variable `x`.
//!
//! Potential and perturbation matrix entries are written as closed-form
//! strings such as `1 - 2/cosh(x)^2`. This module parses them into a small
//! AST and evaluates it in double precision.
//!
//! Grammar (whitespace is insignificant between tokens):
//!
//! ```text
//! expr    := term (("+" | "-") term)*
//! term    := factor (("*" | "/") factor)*
//! factor  := "-" factor | primary ("^" factor)?
//! primary := NUMBER | "x" | IDENT "(" expr ")" | "(" expr ")"
//! ```
//!
//! Powers are right-associative and bind tighter than unary minus, so
//! `-x^2` is `-(x^2)` and `2^3^2` is `2^9`. The typographic minus `−`
//! (U+2212) is read as `-`.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown function `{name}` at byte {offset}")]
    UnknownFunction { name: String, offset: usize },
    #[error("non-finite result at x = {x}")]
    NonFiniteResult { x: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Cosh,
    Sinh,
    Tanh,
    Sech,
    Exp,
    Abs,
    Sin,
    Cos,
    Sqrt,
}

impl Func {
    pub const ALL: [Func; 9] = [
        Func::Cosh,
        Func::Sinh,
        Func::Tanh,
        Func::Sech,
        Func::Exp,
        Func::Abs,
        Func::Sin,
        Func::Cos,
        Func::Sqrt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Cosh => "cosh",
            Func::Sinh => "sinh",
            Func::Tanh => "tanh",
            Func::Sech => "sech",
            Func::Exp => "exp",
            Func::Abs => "abs",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Func::ALL.iter().copied().find(|f| f.name() == name)
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Cosh => v.cosh(),
            Func::Sinh => v.sinh(),
            Func::Tanh => v.tanh(),
            Func::Sech => sech(v),
            Func::Exp => v.exp(),
            Func::Abs => v.abs(),
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Sqrt => v.sqrt(),
        }
    }
}

/// `1/cosh(v)` without overflowing for large `|v|`.
pub fn sech(v: f64) -> f64 {
    let a = v.abs();
    if a > 745.0 {
        return 0.0;
    }
    let e = (-a).exp();
    2.0 * e / (1.0 + e * e)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Var,
    Neg(Box<Node>),
    Binary(BinOp, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

impl Node {
    fn eval(&self, x: f64) -> f64 {
        match self {
            Node::Num(v) => *v,
            Node::Var => x,
            Node::Neg(a) => -a.eval(x),
            Node::Binary(op, a, b) => {
                let (l, r) = (a.eval(x), b.eval(x));
                match op {
                    BinOp::Add => l + r,
                    BinOp::Sub => l - r,
                    BinOp::Mul => l * r,
                    BinOp::Div => l / r,
                    BinOp::Pow => pow(l, r),
                }
            }
            Node::Call(f, a) => f.apply(a.eval(x)),
        }
    }

    fn is_zero(&self) -> bool {
        matches!(self, Node::Num(v) if *v == 0.0)
    }
}

// Small integer exponents go through powi so that `cosh(x)^2` is a plain
// product.
fn pow(base: f64, exp: f64) -> f64 {
    if exp.fract() == 0.0 && exp.abs() <= 64.0 {
        base.powi(exp as i32)
    } else {
        base.powf(exp)
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Num(v) if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) => {
                write!(f, "(-{})", -v)
            }
            Node::Num(v) => write!(f, "{v:?}"),
            Node::Var => write!(f, "x"),
            Node::Neg(a) => write!(f, "(-{a})"),
            Node::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Node::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

/// A parsed expression in the single variable `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    root: Node,
}

impl Expression {
    pub fn parse(source: &str) -> Result<Self, ExprError> {
        let mut p = Parser {
            src: source.as_bytes(),
            pos: 0,
        };
        let root = p.expr()?;
        p.skip_ws();
        if p.pos < p.src.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(Expression { root })
    }

    pub fn from_node(root: Node) -> Self {
        Expression { root }
    }

    pub fn constant(v: f64) -> Self {
        Expression { root: Node::Num(v) }
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    /// Raw IEEE value; may be NaN or infinite.
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.root.eval(x)
    }

    pub fn evaluate(&self, x: f64) -> Result<f64, ExprError> {
        let v = self.root.eval(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ExprError::NonFiniteResult { x })
        }
    }

    /// True when the expression is the literal `0`.
    pub fn is_zero(&self) -> bool {
        self.root.is_zero()
    }

    pub fn scaled(&self, s: f64) -> Expression {
        if s == 1.0 {
            return self.clone();
        }
        if self.is_zero() || s == 0.0 {
            return Expression::constant(0.0);
        }
        Expression::from_node(Node::Binary(
            BinOp::Mul,
            Box::new(Node::Num(s)),
            Box::new(self.root.clone()),
        ))
    }

    pub fn plus(&self, other: &Expression) -> Expression {
        if other.is_zero() {
            return self.clone();
        }
        if self.is_zero() {
            return other.clone();
        }
        Expression::from_node(Node::Binary(
            BinOp::Add,
            Box::new(self.root.clone()),
            Box::new(other.root.clone()),
        ))
    }

    /// The expression with `x` replaced by `-x`.
    pub fn reflected(&self) -> Expression {
        fn go(n: &Node) -> Node {
            match n {
                Node::Num(v) => Node::Num(*v),
                Node::Var => Node::Neg(Box::new(Node::Var)),
                Node::Neg(a) => Node::Neg(Box::new(go(a))),
                Node::Binary(op, a, b) => Node::Binary(*op, Box::new(go(a)), Box::new(go(b))),
                Node::Call(f, a) => Node::Call(*f, Box::new(go(a))),
            }
        }
        Expression::from_node(go(&self.root))
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.fmt(f)
    }
}

impl FromStr for Expression {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Expression::parse(s)
    }
}

pub fn parse(source: &str) -> Result<Expression, ExprError> {
    Expression::parse(source)
}

pub fn evaluate(e: &Expression, x: f64) -> Result<f64, ExprError> {
    e.evaluate(x)
}

const UNICODE_MINUS: &[u8] = "\u{2212}".as_bytes();

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> ExprError {
        ExprError::Syntax {
            offset: self.pos,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    /// The next token byte; a typographic minus sign reads as `-`.
    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        if self.src[self.pos..].starts_with(UNICODE_MINUS) {
            return Some(b'-');
        }
        self.src.get(self.pos).copied()
    }

    fn advance(&mut self) {
        self.pos += if self.src[self.pos..].starts_with(UNICODE_MINUS) {
            UNICODE_MINUS.len()
        } else {
            1
        };
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => BinOp::Add,
                Some(b'-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.advance();
            let rhs = self.term()?;
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => BinOp::Mul,
                Some(b'/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.advance();
            let rhs = self.factor()?;
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn factor(&mut self) -> Result<Node, ExprError> {
        if self.eat(b'-') {
            return Ok(Node::Neg(Box::new(self.factor()?)));
        }
        let base = self.primary()?;
        if self.eat(b'^') {
            let exp = self.factor()?;
            return Ok(Node::Binary(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Node, ExprError> {
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.error("expected `)`"));
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
                if name == "x" {
                    return Ok(Node::Var);
                }
                let func = Func::from_name(name).ok_or_else(|| ExprError::UnknownFunction {
                    name: name.to_string(),
                    offset: start,
                })?;
                if !self.eat(b'(') {
                    return Err(self.error("expected `(` after function name"));
                }
                let arg = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.error("expected `)`"));
                }
                Ok(Node::Call(func, Box::new(arg)))
            }
            Some(_) => Err(self.error("unexpected character")),
        }
    }

    fn number(&mut self) -> Result<Node, ExprError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            let s = p.pos;
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
            p.pos - s
        };
        let mut mantissa = digits(self);
        if self.pos < self.src.len() && self.src[self.pos] == b'.' {
            self.pos += 1;
            mantissa += digits(self);
        }
        if mantissa == 0 {
            self.pos = start;
            return Err(self.error("malformed number"));
        }
        if self.pos < self.src.len() && matches!(self.src[self.pos], b'e' | b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < self.src.len() && matches!(self.src[self.pos], b'+' | b'-') {
                self.pos += 1;
            }
            if digits(self) == 0 {
                self.pos = save;
                return Err(self.error("malformed exponent"));
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        text.parse::<f64>()
            .map(Node::Num)
            .map_err(|_| ExprError::Syntax {
                offset: start,
                message: format!("invalid number `{text}`"),
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Expression {
        Expression::parse(s).unwrap()
    }

    #[test]
    fn cosh_potential_at_origin() {
        assert_eq!(p("1 - 2/cosh(x)^2").evaluate(0.0).unwrap(), -1.0);
        assert_eq!(p("1 \u{2212} 2/cosh(x)^2").evaluate(0.0).unwrap(), -1.0);
        assert_eq!(p("\u{2212}x").evaluate(2.0).unwrap(), -2.0);
    }

    #[test]
    fn identity_and_right_assoc_power() {
        assert_eq!(p("x").evaluate(3.5).unwrap(), 3.5);
        assert_eq!(p("2^3^2").evaluate(-7.0).unwrap(), 512.0);
        assert_eq!(p("2^-1").evaluate(0.0).unwrap(), 0.5);
    }

    #[test]
    fn precedence_shapes() {
        let sum = p("x+2*3");
        match sum.root() {
            Node::Binary(BinOp::Add, l, r) => {
                assert_eq!(**l, Node::Var);
                assert!(matches!(**r, Node::Binary(BinOp::Mul, _, _)));
            }
            other => panic!("unexpected shape {other:?}"),
        }
        let neg = p("-x^2");
        match neg.root() {
            Node::Neg(inner) => assert!(matches!(**inner, Node::Binary(BinOp::Pow, _, _))),
            other => panic!("unexpected shape {other:?}"),
        }
        assert_eq!(neg.evaluate(3.0).unwrap(), -9.0);
        assert_eq!(p("1-2-3").evaluate(0.0).unwrap(), -4.0);
        assert_eq!(p("8/4/2").evaluate(0.0).unwrap(), 1.0);
    }

    #[test]
    fn functions_and_sech() {
        assert_eq!(p("sech(x)").evaluate(0.0).unwrap(), 1.0);
        assert!((p("tanh(x)").evaluate(20.0).unwrap() - 1.0).abs() <= 1e-15);
        assert_eq!(p("sech(x)").evaluate(1.0e4).unwrap(), 0.0);
        for x in [-3.0, -0.5, 0.0, 0.7, 12.0] {
            let s = p("sech(x)").evaluate(x).unwrap();
            assert!((s - 1.0 / f64::cosh(x)).abs() <= 1e-15 * (1.0 + s));
        }
        assert_eq!(p("sqrt(abs(-4))").evaluate(0.0).unwrap(), 2.0);
        assert_eq!(
            p(" exp( 0 ) + sin(0)*cos(0) + sinh(0)")
                .evaluate(0.0)
                .unwrap(),
            1.0
        );
    }

    #[test]
    fn numbers_with_exponents() {
        assert_eq!(p("1.5e2").evaluate(0.0).unwrap(), 150.0);
        assert_eq!(p(".25").evaluate(0.0).unwrap(), 0.25);
        assert_eq!(p("2E-1").evaluate(0.0).unwrap(), 0.2);
    }

    #[test]
    fn syntax_errors_report_offsets() {
        match Expression::parse("1 + * 2") {
            Err(ExprError::Syntax { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("{other:?}"),
        }
        match Expression::parse("(x + 1") {
            Err(ExprError::Syntax { offset, .. }) => assert_eq!(offset, 6),
            other => panic!("{other:?}"),
        }
        match Expression::parse("foo(x)") {
            Err(ExprError::UnknownFunction { name, offset }) => {
                assert_eq!(name, "foo");
                assert_eq!(offset, 0);
            }
            other => panic!("{other:?}"),
        }
        assert!(Expression::parse("").is_err());
        assert!(Expression::parse("x y").is_err());
        assert!(Expression::parse("1e").is_err());
        assert!(Expression::parse("cosh x").is_err());
    }

    #[test]
    fn non_finite_is_flagged() {
        assert_eq!(
            p("1/x").evaluate(0.0),
            Err(ExprError::NonFiniteResult { x: 0.0 })
        );
        assert!(p("sqrt(x)").evaluate(-1.0).is_err());
    }

    #[test]
    fn combinators() {
        let e = p("sech(x)^2");
        assert_eq!(e.scaled(0.0).evaluate(1.0).unwrap(), 0.0);
        let r = p("x + 1").reflected();
        assert_eq!(r.evaluate(2.0).unwrap(), -1.0);
        let s = p("x").plus(&p("1"));
        assert_eq!(s.evaluate(2.0).unwrap(), 3.0);
    }
}
