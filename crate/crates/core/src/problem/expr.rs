//! A small arithmetic expression language for problem documents.
//!
//! Variables are `t`, `x`, `y`, `z`; constants `pi` and `e`. Operators are
//! `+ - * / ^` (with `^` right-associative and binding tighter than unary
//! minus, so `-x^2 = -(x^2)`). Functions: `sin cos tan exp ln log sqrt abs
//! tanh sinh cosh` of one argument, `min max` of two.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    T,
    X,
    Y,
    Z,
}

impl Var {
    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func1 {
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
    Abs,
    Tanh,
    Sinh,
    Cosh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func2 {
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(Var),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call1(Func1, Box<Node>),
    Call2(Func2, Box<Node>, Box<Node>),
}

impl Node {
    fn eval(&self, vars: &[f64; 4]) -> f64 {
        match self {
            Node::Num(v) => *v,
            Node::Var(v) => vars[v.index()],
            Node::Neg(a) => -a.eval(vars),
            Node::Bin(op, a, b) => {
                let (a, b) = (a.eval(vars), b.eval(vars));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => a.powf(b),
                }
            }
            Node::Call1(f, a) => {
                let a = a.eval(vars);
                match f {
                    Func1::Sin => a.sin(),
                    Func1::Cos => a.cos(),
                    Func1::Tan => a.tan(),
                    Func1::Exp => a.exp(),
                    Func1::Ln => a.ln(),
                    Func1::Sqrt => a.sqrt(),
                    Func1::Abs => a.abs(),
                    Func1::Tanh => a.tanh(),
                    Func1::Sinh => a.sinh(),
                    Func1::Cosh => a.cosh(),
                }
            }
            Node::Call2(f, a, b) => {
                let (a, b) = (a.eval(vars), b.eval(vars));
                match f {
                    Func2::Min => a.min(b),
                    Func2::Max => a.max(b),
                }
            }
        }
    }

    fn collect_vars(&self, used: &mut [bool; 4]) {
        match self {
            Node::Num(_) => {}
            Node::Var(v) => used[v.index()] = true,
            Node::Neg(a) | Node::Call1(_, a) => a.collect_vars(used),
            Node::Bin(_, a, b) | Node::Call2(_, a, b) => {
                a.collect_vars(used);
                b.collect_vars(used);
            }
        }
    }
}

/// A parsed expression in the variables `t, x, y, z`.
#[derive(Clone, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
    used: [bool; 4],
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({:?})", self.source)
    }
}

impl Expr {
    pub fn parse(source: &str) -> Result<Self> {
        let tokens = tokenize(source)?;
        let mut parser = Parser {
            tokens: &tokens,
            pos: 0,
            source,
        };
        let root = parser.expr()?;
        if parser.pos != tokens.len() {
            return Err(parser.error("unexpected trailing input"));
        }
        let mut used = [false; 4];
        root.collect_vars(&mut used);
        Ok(Self {
            source: source.to_string(),
            root,
            used,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn uses(&self, var: Var) -> bool {
        self.used[var.index()]
    }

    /// Rejects expressions that mention variables outside `allowed`.
    pub fn restrict(self, allowed: &[Var], field: &str) -> Result<Self> {
        for v in [Var::T, Var::X, Var::Y, Var::Z] {
            if self.uses(v) && !allowed.contains(&v) {
                return Err(Error::Expression(format!(
                    "{field}: variable '{}' is not available here (expression {:?})",
                    match v {
                        Var::T => "t",
                        Var::X => "x",
                        Var::Y => "y",
                        Var::Z => "z",
                    },
                    self.source
                )));
            }
        }
        Ok(self)
    }

    #[inline]
    pub fn eval(&self, t: f64, x: f64, y: f64, z: f64) -> f64 {
        self.root.eval(&[t, x, y, z])
    }
}

impl FromStr for Expr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

fn tokenize(src: &str) -> Result<Vec<(Token, usize)>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || c == '.' {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            let v = text.parse::<f64>().map_err(|_| {
                Error::Expression(format!("bad number {text:?} at {start} in {src:?}"))
            })?;
            out.push((Token::Num(v), start));
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Token::Ident(src[start..i].to_string()), start));
            continue;
        }
        let tok = match c {
            '+' | '-' | '*' | '/' | '^' => Token::Op(c),
            '(' => Token::LParen,
            ')' => Token::RParen,
            ',' => Token::Comma,
            _ => {
                return Err(Error::Expression(format!(
                    "unexpected character {c:?} at {start} in {src:?}"
                )))
            }
        };
        out.push((tok, start));
        i += 1;
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: &'a [(Token, usize)],
    pos: usize,
    source: &'a str,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(t, _)| t)
    }

    fn error(&self, msg: &str) -> Error {
        let at = self
            .tokens
            .get(self.pos)
            .map_or(self.source.len(), |(_, p)| *p);
        Error::Expression(format!("{msg} at {at} in {:?}", self.source))
    }

    fn expect(&mut self, tok: Token, what: &str) -> Result<()> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("expected {what}")))
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        while let Some(Token::Op(c @ ('+' | '-'))) = self.peek() {
            let op = if *c == '+' { BinOp::Add } else { BinOp::Sub };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while let Some(Token::Op(c @ ('*' | '/'))) = self.peek() {
            let op = if *c == '*' { BinOp::Mul } else { BinOp::Div };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node> {
        match self.peek() {
            Some(Token::Op('-')) => {
                self.pos += 1;
                Ok(Node::Neg(Box::new(self.unary()?)))
            }
            Some(Token::Op('+')) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if let Some(Token::Op('^')) = self.peek() {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        let Some((tok, _)) = self.tokens.get(self.pos) else {
            return Err(self.error("unexpected end of expression"));
        };
        match tok {
            Token::Num(v) => {
                self.pos += 1;
                Ok(Node::Num(*v))
            }
            Token::LParen => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect(Token::RParen, "')'")?;
                Ok(inner)
            }
            Token::Ident(name) => {
                self.pos += 1;
                if self.peek() == Some(&Token::LParen) {
                    return self.call(name);
                }
                match name.as_str() {
                    "t" => Ok(Node::Var(Var::T)),
                    "x" => Ok(Node::Var(Var::X)),
                    "y" => Ok(Node::Var(Var::Y)),
                    "z" => Ok(Node::Var(Var::Z)),
                    "pi" => Ok(Node::Num(std::f64::consts::PI)),
                    "e" => Ok(Node::Num(std::f64::consts::E)),
                    _ => {
                        self.pos -= 1;
                        Err(self.error(&format!("unknown identifier '{name}'")))
                    }
                }
            }
            _ => Err(self.error("expected a number, variable, function or '('")),
        }
    }

    fn call(&mut self, name: &str) -> Result<Node> {
        self.expect(Token::LParen, "'('")?;
        let f1 = match name {
            "sin" => Some(Func1::Sin),
            "cos" => Some(Func1::Cos),
            "tan" => Some(Func1::Tan),
            "exp" => Some(Func1::Exp),
            "ln" | "log" => Some(Func1::Ln),
            "sqrt" => Some(Func1::Sqrt),
            "abs" => Some(Func1::Abs),
            "tanh" => Some(Func1::Tanh),
            "sinh" => Some(Func1::Sinh),
            "cosh" => Some(Func1::Cosh),
            _ => None,
        };
        if let Some(f) = f1 {
            let a = self.expr()?;
            self.expect(Token::RParen, "')'")?;
            return Ok(Node::Call1(f, Box::new(a)));
        }
        let f2 = match name {
            "min" => Func2::Min,
            "max" => Func2::Max,
            _ => return Err(self.error(&format!("unknown function '{name}'"))),
        };
        let a = self.expr()?;
        self.expect(Token::Comma, "','")?;
        let b = self.expr()?;
        self.expect(Token::RParen, "')'")?;
        Ok(Node::Call2(f2, Box::new(a), Box::new(b)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(s: &str, t: f64, x: f64, y: f64, z: f64) -> f64 {
        Expr::parse(s).unwrap().eval(t, x, y, z)
    }

    #[test]
    fn precedence() {
        assert_eq!(ev("1 + 2 * 3", 0., 0., 0., 0.), 7.0);
        assert_eq!(ev("(1 + 2) * 3", 0., 0., 0., 0.), 9.0);
        assert_eq!(ev("2 ^ 3 ^ 2", 0., 0., 0., 0.), 512.0);
        assert_eq!(ev("-x^2", 0., 3., 0., 0.), -9.0);
        assert_eq!(ev("2^-1", 0., 0., 0., 0.), 0.5);
        assert_eq!(ev("8 / 4 / 2", 0., 0., 0., 0.), 1.0);
        assert_eq!(ev("1 - 2 - 3", 0., 0., 0., 0.), -4.0);
        assert_eq!(ev("1.5e2 + 2E-1", 0., 0., 0., 0.), 150.2);
    }

    #[test]
    fn functions_and_variables() {
        let v = ev(
            "y*z - z + 2.5*y - sin(t+x)*cos(t+x) - 2*sin(t+x)",
            0.3,
            0.2,
            1.5,
            -0.5,
        );
        let s = 0.5f64.sin();
        let c = 0.5f64.cos();
        let expected = 1.5 * -0.5 + 0.5 + 2.5 * 1.5 - s * c - 2.0 * s;
        assert!((v - expected).abs() < 1e-15);
        assert_eq!(ev("max(exp(x) - 100, 0)", 0., 0., 0., 0.), 0.0);
        assert_eq!(ev("min(y - z/0.2, 0)", 0., 0., 1.0, 0.1), 0.0);
        assert!(
            (ev("ln(e) + log(1) + pi", 0., 0., 0., 0.) - (1.0 + std::f64::consts::PI)).abs()
                < 1e-15
        );
        assert_eq!(ev("abs(-2) * sqrt(4)", 0., 0., 0., 0.), 4.0);
    }

    #[test]
    fn variable_tracking() {
        let e = Expr::parse("sin(x) + t").unwrap();
        assert!(e.uses(Var::X) && e.uses(Var::T));
        assert!(!e.uses(Var::Y) && !e.uses(Var::Z));
        assert!(e.clone().restrict(&[Var::T, Var::X], "drift").is_ok());
        assert!(e.restrict(&[Var::X], "terminal").is_err());
    }

    #[test]
    fn errors() {
        for bad in [
            "", "1 +", "sin 1", "foo(1)", "q", "(1", "1)", "min(1)", "2 $ 3", "1 2",
        ] {
            assert!(
                matches!(Expr::parse(bad), Err(Error::Expression(_))),
                "{bad:?} should fail"
            );
        }
    }
}
