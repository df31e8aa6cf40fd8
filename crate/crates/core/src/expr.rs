//! Scalar expressions over state variables `x1 .. xn`, used to write plant
//! nonlinearities in run configs.
//!
//! Grammar: `+ - * / ^` (right-associative power, binding tighter than unary
//! minus), parentheses, numbers, the constants `pi` and `e`, and the functions
//! `sin cos tan tanh atan exp ln sqrt abs sat` (one argument) and
//! `min max pow` (two arguments).

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub struct ExprError {
    pub message: String,
    /// Byte offset in the source.
    pub at: usize,
}

impl fmt::Display for ExprError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at column {}", self.message, self.at + 1)
    }
}

impl std::error::Error for ExprError {}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Func1 {
    Sin,
    Cos,
    Tan,
    Tanh,
    Atan,
    Exp,
    Ln,
    Sqrt,
    Abs,
    Sat,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Func2 {
    Min,
    Max,
    Pow,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Call1(Func1, Box<Node>),
    Call2(Func2, Box<Node>, Box<Node>),
}

impl Node {
    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Node::Num(v) => *v,
            Node::Var(i) => x[*i],
            Node::Neg(a) => -a.eval(x),
            Node::Add(a, b) => a.eval(x) + b.eval(x),
            Node::Sub(a, b) => a.eval(x) - b.eval(x),
            Node::Mul(a, b) => a.eval(x) * b.eval(x),
            Node::Div(a, b) => a.eval(x) / b.eval(x),
            Node::Pow(a, b) => pow(a.eval(x), b.eval(x)),
            Node::Call1(f, a) => {
                let v = a.eval(x);
                match f {
                    Func1::Sin => v.sin(),
                    Func1::Cos => v.cos(),
                    Func1::Tan => v.tan(),
                    Func1::Tanh => v.tanh(),
                    Func1::Atan => v.atan(),
                    Func1::Exp => v.exp(),
                    Func1::Ln => v.ln(),
                    Func1::Sqrt => v.sqrt(),
                    Func1::Abs => v.abs(),
                    Func1::Sat => v.clamp(-1.0, 1.0),
                }
            }
            Node::Call2(f, a, b) => {
                let (u, v) = (a.eval(x), b.eval(x));
                match f {
                    Func2::Min => u.min(v),
                    Func2::Max => u.max(v),
                    Func2::Pow => pow(u, v),
                }
            }
        }
    }

    fn max_var(&self) -> Option<usize> {
        match self {
            Node::Num(_) => None,
            Node::Var(i) => Some(*i),
            Node::Neg(a) | Node::Call1(_, a) => a.max_var(),
            Node::Add(a, b)
            | Node::Sub(a, b)
            | Node::Mul(a, b)
            | Node::Div(a, b)
            | Node::Pow(a, b)
            | Node::Call2(_, a, b) => a.max_var().max(b.max_var()),
        }
    }
}

/// Integer exponents use repeated multiplication so odd powers of negative
/// bases stay exact.
fn pow(base: f64, exp: f64) -> f64 {
    if exp.fract() == 0.0 && exp.abs() <= 64.0 {
        base.powi(exp as i32)
    } else {
        base.powf(exp)
    }
}

/// A parsed expression.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    root: Node,
    source: String,
}

impl Expr {
    pub fn parse(source: &str) -> Result<Self, ExprError> {
        let mut p = Parser {
            src: source.as_bytes(),
            pos: 0,
        };
        let root = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(Self {
            root,
            source: source.to_string(),
        })
    }

    /// Evaluates with `x[0]` bound to `x1`, and so on.
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.root.eval(x)
    }

    /// Number of state variables the expression needs (highest index used).
    pub fn arity(&self) -> usize {
        self.root.max_var().map_or(0, |i| i + 1)
    }

    pub fn source(&self) -> &str {
        &self.source
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, message: impl Into<String>) -> ExprError {
        ExprError {
            message: message.into(),
            at: self.pos,
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

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(b'-') {
                lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat(b'/') {
                lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        if self.eat(b'-') {
            Ok(Node::Neg(Box::new(self.unary()?)))
        } else if self.eat(b'+') {
            self.unary()
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.atom()?;
        if self.eat(b'^') {
            Ok(Node::Pow(Box::new(base), Box::new(self.unary()?)))
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Node, ExprError> {
        match self.peek() {
            None => Err(self.error("unexpected end of expression")),
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.error("expected ')'"));
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.ident(),
            Some(c) => Err(self.error(format!("unexpected character '{}'", c as char))),
        }
    }

    fn number(&mut self) -> Result<Node, ExprError> {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.')
        {
            self.pos += 1;
        }
        if self.pos < self.src.len() && matches!(self.src[self.pos], b'e' | b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < self.src.len() && matches!(self.src[self.pos], b'+' | b'-') {
                self.pos += 1;
            }
            let digits = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if self.pos == digits {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        text.parse::<f64>().map(Node::Num).map_err(|_| ExprError {
            message: format!("invalid number '{text}'"),
            at: start,
        })
    }

    fn ident(&mut self) -> Result<Node, ExprError> {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        let unknown = |msg: &str| ExprError {
            message: format!("{msg} '{name}'"),
            at: start,
        };
        if self.peek() == Some(b'(') {
            self.pos += 1;
            let a = self.expr()?;
            let node = if self.eat(b',') {
                let b = self.expr()?;
                let f = match name {
                    "min" => Func2::Min,
                    "max" => Func2::Max,
                    "pow" => Func2::Pow,
                    _ => return Err(unknown("unknown two-argument function")),
                };
                Node::Call2(f, Box::new(a), Box::new(b))
            } else {
                let f = match name {
                    "sin" => Func1::Sin,
                    "cos" => Func1::Cos,
                    "tan" => Func1::Tan,
                    "tanh" => Func1::Tanh,
                    "atan" => Func1::Atan,
                    "exp" => Func1::Exp,
                    "ln" => Func1::Ln,
                    "sqrt" => Func1::Sqrt,
                    "abs" => Func1::Abs,
                    "sat" => Func1::Sat,
                    _ => return Err(unknown("unknown function")),
                };
                Node::Call1(f, Box::new(a))
            };
            if !self.eat(b')') {
                return Err(self.error("expected ')'"));
            }
            return Ok(node);
        }
        match name {
            "pi" => Ok(Node::Num(std::f64::consts::PI)),
            "e" => Ok(Node::Num(std::f64::consts::E)),
            _ => match name.strip_prefix('x').and_then(|d| d.parse::<usize>().ok()) {
                Some(i) if i >= 1 => Ok(Node::Var(i - 1)),
                _ => Err(unknown("unknown variable")),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(s: &str, x: &[f64]) -> f64 {
        Expr::parse(s).unwrap().eval(x)
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("1 + 2 * 3", &[]), 7.0);
        assert_eq!(ev("(1 + 2) * 3", &[]), 9.0);
        assert_eq!(ev("2 ^ 3 ^ 2", &[]), 512.0);
        assert_eq!(ev("-2 ^ 2", &[]), -4.0);
        assert_eq!(ev("8 / 4 / 2", &[]), 1.0);
        assert_eq!(ev("1 - 2 - 3", &[]), -4.0);
        assert_eq!(ev("2e-1 * 10", &[]), 2.0);
    }

    #[test]
    fn variables_functions_constants() {
        assert_eq!(ev("x1 * x2", &[3.0, 4.0]), 12.0);
        assert_eq!(ev("sat(x1)", &[5.0]), 1.0);
        assert_eq!(ev("max(x1, -x1)", &[-2.0]), 2.0);
        assert!((ev("sin(pi / 2)", &[]) - 1.0).abs() < 1e-15);
        assert!((ev("ln(e)", &[]) - 1.0).abs() < 1e-15);
        assert_eq!(Expr::parse("x3 + x1").unwrap().arity(), 3);
        assert_eq!(Expr::parse("0").unwrap().arity(), 0);
    }

    #[test]
    fn example_nonlinearity() {
        let mu = "x1*x2*(x2+2)*(x2-2)/(1+x2^4)";
        assert_eq!(ev(mu, &[1.0, 1.0]), -1.5);
        assert_eq!(ev(mu, &[1.0, 2.0]), 0.0);
        assert_eq!(ev(mu, &[7.0, 0.0]), 0.0);
    }

    #[test]
    fn errors_carry_position() {
        let e = Expr::parse("1 + * 2").unwrap_err();
        assert_eq!(e.at, 4);
        assert!(Expr::parse("foo(1)").is_err());
        assert!(Expr::parse("y1").is_err());
        assert!(Expr::parse("x0").is_err());
        assert!(Expr::parse("(1 + 2").is_err());
        assert!(Expr::parse("1 2").is_err());
    }
}
