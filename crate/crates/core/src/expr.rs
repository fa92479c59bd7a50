//! A tiny arithmetic expression grammar for coefficient fields and data,
//! shared by the N-function constructors and the problem configuration
//! format.
//!
//! Grammar (precedence low to high):
//!
//! ```text
//! expr   := term  (('+' | '-') term)*
//! term   := pow   (('*' | '/') pow)*
//! pow    := unary ('^' pow)?              right-associative
//! unary  := '-' unary | atom
//! atom   := NUMBER
//!         | VARIABLE                      x1..xd (domain point),
//!                                         xi1..xid (vector argument)
//!         | FUNC '(' expr (',' expr)* ')' abs, ln, exp, min, max
//!         | '(' expr ')'
//! ```
//!
//! `NUMBER` is any decimal literal with optional fraction and exponent
//! (`0.5`, `1e-3`). `min`/`max` take two or more arguments; `abs`, `ln`,
//! `exp` exactly one. Parse errors carry a line and column, both 1-based.

use std::fmt;

/// Parse failure with 1-based source position.
#[derive(Debug, Clone)]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.col, self.message)
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone)]
enum Node {
    Const(f64),
    /// 0-based index into the domain point
    X(usize),
    /// 0-based index into the vector argument
    Xi(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Abs(Box<Node>),
    Ln(Box<Node>),
    Exp(Box<Node>),
    Min(Vec<Node>),
    Max(Vec<Node>),
}

/// A parsed, immutable expression. Evaluation is pure.
#[derive(Debug, Clone)]
pub struct Expr {
    root: Node,
    max_x: usize,
    max_xi: usize,
    source: String,
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ParseError> {
        Expr::parse_at(src, 1, 1)
    }

    /// Parse with a source offset so errors point into an enclosing file.
    pub fn parse_at(src: &str, base_line: usize, base_col: usize) -> Result<Expr, ParseError> {
        let mut p = Parser::new(src, base_line, base_col);
        let root = p.expr()?;
        p.skip_ws();
        if p.pos < p.chars.len() {
            return Err(p.err("unexpected trailing input"));
        }
        let (mut max_x, mut max_xi) = (0, 0);
        scan_vars(&root, &mut max_x, &mut max_xi);
        Ok(Expr { root, max_x, max_xi, source: src.to_string() })
    }

    /// Highest domain-variable index referenced (1-based; 0 when none).
    pub fn max_x(&self) -> usize {
        self.max_x
    }

    /// Highest vector-variable index referenced (1-based; 0 when none).
    pub fn max_xi(&self) -> usize {
        self.max_xi
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval(&self, x: &[f64], xi: &[f64]) -> f64 {
        eval_node(&self.root, x, xi)
    }

    /// Evaluate as a pure function of the domain point.
    pub fn eval_x(&self, x: &[f64]) -> f64 {
        eval_node(&self.root, x, &[])
    }
}

fn scan_vars(n: &Node, max_x: &mut usize, max_xi: &mut usize) {
    match n {
        Node::X(i) => *max_x = (*max_x).max(i + 1),
        Node::Xi(i) => *max_xi = (*max_xi).max(i + 1),
        Node::Const(_) => {}
        Node::Neg(a) | Node::Abs(a) | Node::Ln(a) | Node::Exp(a) => scan_vars(a, max_x, max_xi),
        Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Pow(a, b) => {
            scan_vars(a, max_x, max_xi);
            scan_vars(b, max_x, max_xi);
        }
        Node::Min(v) | Node::Max(v) => v.iter().for_each(|a| scan_vars(a, max_x, max_xi)),
    }
}

fn eval_node(n: &Node, x: &[f64], xi: &[f64]) -> f64 {
    match n {
        Node::Const(c) => *c,
        Node::X(i) => x.get(*i).copied().unwrap_or(f64::NAN),
        Node::Xi(i) => xi.get(*i).copied().unwrap_or(f64::NAN),
        Node::Neg(a) => -eval_node(a, x, xi),
        Node::Add(a, b) => eval_node(a, x, xi) + eval_node(b, x, xi),
        Node::Sub(a, b) => eval_node(a, x, xi) - eval_node(b, x, xi),
        Node::Mul(a, b) => eval_node(a, x, xi) * eval_node(b, x, xi),
        Node::Div(a, b) => eval_node(a, x, xi) / eval_node(b, x, xi),
        Node::Pow(a, b) => eval_node(a, x, xi).powf(eval_node(b, x, xi)),
        Node::Abs(a) => eval_node(a, x, xi).abs(),
        Node::Ln(a) => eval_node(a, x, xi).ln(),
        Node::Exp(a) => eval_node(a, x, xi).exp(),
        Node::Min(v) => v.iter().map(|a| eval_node(a, x, xi)).fold(f64::INFINITY, f64::min),
        Node::Max(v) => v
            .iter()
            .map(|a| eval_node(a, x, xi))
            .fold(f64::NEG_INFINITY, f64::max),
    }
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
    line: usize,
    col: usize,
}

impl Parser {
    fn new(src: &str, base_line: usize, base_col: usize) -> Self {
        Parser { chars: src.chars().collect(), pos: 0, line: base_line, col: base_col }
    }

    fn err(&self, msg: impl Into<String>) -> ParseError {
        ParseError { line: self.line, col: self.col, message: msg.into() }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_whitespace()) {
            self.bump();
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        self.skip_ws();
        match self.peek() {
            Some(got) if got == c => {
                self.bump();
                Ok(())
            }
            Some(got) => Err(self.err(format!("expected '{c}', found '{got}'"))),
            None => Err(self.err(format!("expected '{c}', found end of input"))),
        }
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.term()?;
        loop {
            self.skip_ws();
            match self.peek() {
                Some('+') => {
                    self.bump();
                    lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some('-') => {
                    self.bump();
                    lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.pow()?;
        loop {
            self.skip_ws();
            match self.peek() {
                Some('*') => {
                    self.bump();
                    lhs = Node::Mul(Box::new(lhs), Box::new(self.pow()?));
                }
                Some('/') => {
                    self.bump();
                    lhs = Node::Div(Box::new(lhs), Box::new(self.pow()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn pow(&mut self) -> Result<Node, ParseError> {
        let base = self.unary()?;
        self.skip_ws();
        if self.peek() == Some('^') {
            self.bump();
            let exp = self.pow()?;
            return Ok(Node::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn unary(&mut self) -> Result<Node, ParseError> {
        self.skip_ws();
        if self.peek() == Some('-') {
            self.bump();
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Node, ParseError> {
        self.skip_ws();
        match self.peek() {
            Some('(') => {
                self.bump();
                let inner = self.expr()?;
                self.expect(')')?;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.ident(),
            Some(c) => Err(self.err(format!("unexpected character '{c}'"))),
            None => Err(self.err("unexpected end of input")),
        }
    }

    fn number(&mut self) -> Result<Node, ParseError> {
        let start_line = self.line;
        let start_col = self.col;
        let mut lit = String::new();
        while matches!(self.peek(), Some(c) if c.is_ascii_digit() || c == '.') {
            lit.push(self.bump().unwrap());
        }
        if matches!(self.peek(), Some('e' | 'E')) {
            // exponent only if followed by digits or a signed digit
            let save = (self.pos, self.line, self.col);
            let mut tail = String::new();
            tail.push(self.bump().unwrap());
            if matches!(self.peek(), Some('+' | '-')) {
                tail.push(self.bump().unwrap());
            }
            if matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                    tail.push(self.bump().unwrap());
                }
                lit.push_str(&tail);
            } else {
                (self.pos, self.line, self.col) = save;
            }
        }
        lit.parse::<f64>().map(Node::Const).map_err(|_| ParseError {
            line: start_line,
            col: start_col,
            message: format!("invalid number literal '{lit}'"),
        })
    }

    fn ident(&mut self) -> Result<Node, ParseError> {
        let start_line = self.line;
        let start_col = self.col;
        let mut name = String::new();
        while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == '_') {
            name.push(self.bump().unwrap());
        }
        let at = |msg: String| ParseError { line: start_line, col: start_col, message: msg };
        if let Some(rest) = name.strip_prefix("xi") {
            if let Ok(i) = rest.parse::<usize>() {
                if i == 0 {
                    return Err(at("vector variables are 1-based (xi1, xi2, ...)".into()));
                }
                return Ok(Node::Xi(i - 1));
            }
        }
        if let Some(rest) = name.strip_prefix('x') {
            if let Ok(i) = rest.parse::<usize>() {
                if i == 0 {
                    return Err(at("domain variables are 1-based (x1, x2, ...)".into()));
                }
                return Ok(Node::X(i - 1));
            }
        }
        match name.as_str() {
            "abs" | "ln" | "exp" => {
                self.expect('(')?;
                let arg = self.expr()?;
                self.expect(')')?;
                Ok(match name.as_str() {
                    "abs" => Node::Abs(Box::new(arg)),
                    "ln" => Node::Ln(Box::new(arg)),
                    _ => Node::Exp(Box::new(arg)),
                })
            }
            "min" | "max" => {
                self.expect('(')?;
                let mut args = vec![self.expr()?];
                loop {
                    self.skip_ws();
                    match self.peek() {
                        Some(',') => {
                            self.bump();
                            args.push(self.expr()?);
                        }
                        _ => break,
                    }
                }
                self.expect(')')?;
                if args.len() < 2 {
                    return Err(at(format!("{name} needs at least 2 arguments")));
                }
                Ok(if name == "min" { Node::Min(args) } else { Node::Max(args) })
            }
            _ => Err(at(format!("unknown identifier '{name}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic_and_precedence() {
        let e = Expr::parse("1 + 2 * 3 ^ 2").unwrap();
        assert_eq!(e.eval(&[], &[]), 19.0);
        let e = Expr::parse("-2^2").unwrap();
        assert_eq!(e.eval(&[], &[]), 4.0); // unary binds tighter: (-2)^2
        let e = Expr::parse("2^3^2").unwrap();
        assert_eq!(e.eval(&[], &[]), 512.0); // right-assoc
    }

    #[test]
    fn variables_and_functions() {
        let e = Expr::parse("(x1^2 + x2^2)^(-0.75)").unwrap();
        assert_eq!(e.max_x(), 2);
        let v = e.eval_x(&[3.0, 4.0]);
        assert!((v - 25f64.powf(-0.75)).abs() < 1e-15);
        let e = Expr::parse("max(abs(xi1), min(x1, 2)) + ln(exp(1))").unwrap();
        assert!((e.eval(&[5.0], &[-3.0]) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn errors_carry_position() {
        let err = Expr::parse("1 + foo(2)").unwrap_err();
        assert_eq!((err.line, err.col), (1, 5));
        let err = Expr::parse("x1 +\n* 2").unwrap_err();
        assert_eq!(err.line, 2);
        let err = Expr::parse_at("min(1)", 7, 3).unwrap_err();
        assert_eq!(err.line, 7);
        assert!(err.message.contains("at least 2"));
    }
}
