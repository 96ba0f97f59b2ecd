//! A small real-valued expression language for user-defined frame boundaries
//! `r(theta, t)` and paths `x(t)`, `y(t)`.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := ('-' | '+') unary | power
//! power   := primary (('^' | '**') unary)?
//! primary := number | 'pi' | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! `^` is right-associative and binds tighter than unary minus, so `-2^2` is
//! `-4` and `2^3^2` is `512`. Angles are radians.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

const MAX_DEPTH: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown function `{name}` at byte {offset}")]
    UnknownFunction { name: String, offset: usize },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. } | ParseError::UnknownFunction { offset, .. } => *offset,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("{message} in `{node}`")]
    Domain { node: String, message: String },
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
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
    Abs,
    Min,
    Max,
}

impl Func {
    fn lookup(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Pi,
    Var(String),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

/// Fully parenthesized form; parsing it back yields the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Pi => f.write_str("pi"),
            Expr::Var(name) => f.write_str(name),
            Expr::Neg(inner) => write!(f, "(-{inner})"),
            Expr::Bin(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

pub fn parse(source: &str) -> Result<Expr, ParseError> {
    let tokens = lex(source)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        depth: 0,
        len: source.len(),
    };
    if p.tokens.is_empty() {
        return Err(ParseError::Syntax {
            offset: 0,
            message: "empty expression".into(),
        });
    }
    let e = p.expr()?;
    match p.peek() {
        None => Ok(e),
        Some((tok, at)) => Err(ParseError::Syntax {
            offset: at,
            message: format!("unexpected {}", tok.describe()),
        }),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Caret => "`^`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
        }
    }
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let tok = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' if bytes.get(i + 1) == Some(&b'*') => {
                i += 1;
                Tok::Caret
            }
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'^' => Tok::Caret,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b',' => Tok::Comma,
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let text = &src[start..i];
                let v: f64 = text.parse().map_err(|_| ParseError::Syntax {
                    offset: start,
                    message: format!("malformed number `{text}`"),
                })?;
                out.push((Tok::Num(v), start));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(src[start..i].to_string()), start));
                continue;
            }
            _ => {
                let ch = src[start..].chars().next().unwrap_or('?');
                return Err(ParseError::Syntax {
                    offset: start,
                    message: format!("unexpected character `{ch}`"),
                });
            }
        };
        i += 1;
        out.push((tok, start));
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(Tok, usize)>,
    pos: usize,
    depth: usize,
    len: usize,
}

impl Parser {
    fn peek(&self) -> Option<(&Tok, usize)> {
        self.tokens.get(self.pos).map(|(t, o)| (t, *o))
    }

    fn bump(&mut self) -> Option<(Tok, usize)> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn eat(&mut self, want: &Tok) -> bool {
        if matches!(self.peek(), Some((t, _)) if t == want) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn err_here(&self, message: impl Into<String>) -> ParseError {
        let offset = self.peek().map_or(self.len, |(_, o)| o);
        ParseError::Syntax {
            offset,
            message: message.into(),
        }
    }

    fn enter(&mut self) -> Result<(), ParseError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(self.err_here("expression nested too deeply"));
        }
        Ok(())
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        self.enter()?;
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some((Tok::Plus, _)) => BinOp::Add,
                Some((Tok::Minus, _)) => BinOp::Sub,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        self.depth -= 1;
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some((Tok::Star, _)) => BinOp::Mul,
                Some((Tok::Slash, _)) => BinOp::Div,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        self.enter()?;
        let e = match self.peek() {
            Some((Tok::Minus, _)) => {
                self.pos += 1;
                Expr::Neg(Box::new(self.unary()?))
            }
            Some((Tok::Plus, _)) => {
                self.pos += 1;
                self.unary()?
            }
            _ => self.power()?,
        };
        self.depth -= 1;
        Ok(e)
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if self.eat(&Tok::Caret) {
            let exp = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        match self.bump() {
            Some((Tok::Num(v), _)) => Ok(Expr::Num(v)),
            Some((Tok::Ident(name), at)) => {
                if matches!(self.peek(), Some((Tok::LParen, _))) {
                    let func = Func::lookup(&name).ok_or(ParseError::UnknownFunction {
                        name: name.clone(),
                        offset: at,
                    })?;
                    self.pos += 1;
                    let mut args = vec![self.expr()?];
                    while self.eat(&Tok::Comma) {
                        args.push(self.expr()?);
                    }
                    if !self.eat(&Tok::RParen) {
                        return Err(self.err_here(format!("expected `)` to close {name}(")));
                    }
                    if args.len() != func.arity() {
                        return Err(ParseError::Syntax {
                            offset: at,
                            message: format!("{name} takes {} argument(s), got {}", func.arity(), args.len()),
                        });
                    }
                    Ok(Expr::Call(func, args))
                } else if name == "pi" {
                    Ok(Expr::Pi)
                } else {
                    Ok(Expr::Var(name))
                }
            }
            Some((Tok::LParen, _)) => {
                let e = self.expr()?;
                if !self.eat(&Tok::RParen) {
                    return Err(self.err_here("expected `)`"));
                }
                Ok(e)
            }
            Some((tok, at)) => Err(ParseError::Syntax {
                offset: at,
                message: format!("unexpected {}", tok.describe()),
            }),
            None => Err(ParseError::Syntax {
                offset: self.len,
                message: "unexpected end of input".into(),
            }),
        }
    }
}

/// Evaluates `e` with variables looked up by name.
pub fn evaluate(e: &Expr, bindings: &HashMap<&str, f64>) -> Result<f64, EvalError> {
    eval_with(e, &|name| bindings.get(name).copied())
}

fn eval_with(e: &Expr, lookup: &dyn Fn(&str) -> Option<f64>) -> Result<f64, EvalError> {
    Ok(match e {
        Expr::Num(v) => *v,
        Expr::Pi => std::f64::consts::PI,
        Expr::Var(name) => lookup(name).ok_or_else(|| EvalError::Unbound(name.clone()))?,
        Expr::Neg(a) => -eval_with(a, lookup)?,
        Expr::Bin(op, a, b) => {
            let (x, y) = (eval_with(a, lookup)?, eval_with(b, lookup)?);
            apply_bin(*op, x, y).map_err(|message| EvalError::Domain {
                node: e.to_string(),
                message,
            })?
        }
        Expr::Call(func, args) => {
            let x = eval_with(&args[0], lookup)?;
            let y = match args.get(1) {
                Some(a) => eval_with(a, lookup)?,
                None => 0.0,
            };
            apply_func(*func, x, y).map_err(|message| EvalError::Domain {
                node: e.to_string(),
                message,
            })?
        }
    })
}

fn apply_bin(op: BinOp, x: f64, y: f64) -> Result<f64, String> {
    Ok(match op {
        BinOp::Add => x + y,
        BinOp::Sub => x - y,
        BinOp::Mul => x * y,
        BinOp::Div => {
            if y == 0.0 {
                return Err("division by zero".into());
            }
            x / y
        }
        BinOp::Pow => {
            let v = x.powf(y);
            if v.is_nan() && !x.is_nan() && !y.is_nan() {
                return Err(format!("{x} ^ {y} is not real"));
            }
            v
        }
    })
}

fn apply_func(func: Func, x: f64, y: f64) -> Result<f64, String> {
    Ok(match func {
        Func::Sin => x.sin(),
        Func::Cos => x.cos(),
        Func::Tan => x.tan(),
        Func::Exp => x.exp(),
        Func::Ln => {
            if !(x > 0.0) {
                return Err(format!("ln of non-positive value {x}"));
            }
            x.ln()
        }
        Func::Sqrt => {
            if x < 0.0 {
                return Err(format!("sqrt of negative value {x}"));
            }
            x.sqrt()
        }
        Func::Abs => x.abs(),
        Func::Min => x.min(y),
        Func::Max => x.max(y),
    })
}

/// An expression with its variables resolved to slots, for evaluation in
/// tight loops.
#[derive(Debug, Clone)]
pub struct Compiled {
    source: Expr,
    node: Node,
}

#[derive(Debug, Clone)]
enum Node {
    Const(f64),
    Slot(usize),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>, usize),
    Call(Func, Box<Node>, Option<Box<Node>>, usize),
}

impl Compiled {
    /// Resolves every variable in `e` against `names`; slot `i` is `names[i]`.
    pub fn new(e: &Expr, names: &[&str]) -> Result<Self, EvalError> {
        let mut nodes = Vec::new();
        let node = compile(e, names, &mut nodes)?;
        Ok(Self {
            source: e.clone(),
            node,
        })
    }

    pub fn expr(&self) -> &Expr {
        &self.source
    }

    /// `args[i]` is the value of `names[i]` from construction.
    pub fn eval(&self, args: &[f64]) -> Result<f64, EvalError> {
        self.run(&self.node, args)
    }

    fn run(&self, n: &Node, args: &[f64]) -> Result<f64, EvalError> {
        Ok(match n {
            Node::Const(v) => *v,
            Node::Slot(i) => args[*i],
            Node::Neg(a) => -self.run(a, args)?,
            Node::Bin(op, a, b, id) => {
                let (x, y) = (self.run(a, args)?, self.run(b, args)?);
                apply_bin(*op, x, y).map_err(|m| self.domain(*id, m))?
            }
            Node::Call(func, a, b, id) => {
                let x = self.run(a, args)?;
                let y = match b {
                    Some(b) => self.run(b, args)?,
                    None => 0.0,
                };
                apply_func(*func, x, y).map_err(|m| self.domain(*id, m))?
            }
        })
    }

    fn domain(&self, id: usize, message: String) -> EvalError {
        let node = nth_node(&self.source, id)
            .map(|e| e.to_string())
            .unwrap_or_default();
        EvalError::Domain { node, message }
    }
}

// Compound nodes are numbered in pre-order so errors can name the subtree.
fn compile(e: &Expr, names: &[&str], counter: &mut Vec<()>) -> Result<Node, EvalError> {
    let id = counter.len();
    counter.push(());
    Ok(match e {
        Expr::Num(v) => Node::Const(*v),
        Expr::Pi => Node::Const(std::f64::consts::PI),
        Expr::Var(name) => Node::Slot(
            names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| EvalError::Unbound(name.clone()))?,
        ),
        Expr::Neg(a) => Node::Neg(Box::new(compile(a, names, counter)?)),
        Expr::Bin(op, a, b) => {
            let a = compile(a, names, counter)?;
            let b = compile(b, names, counter)?;
            Node::Bin(*op, Box::new(a), Box::new(b), id)
        }
        Expr::Call(func, args) => {
            let a = compile(&args[0], names, counter)?;
            let b = match args.get(1) {
                Some(b) => Some(Box::new(compile(b, names, counter)?)),
                None => None,
            };
            Node::Call(*func, Box::new(a), b, id)
        }
    })
}

fn nth_node(e: &Expr, target: usize) -> Option<&Expr> {
    fn walk<'a>(e: &'a Expr, target: usize, next: &mut usize) -> Option<&'a Expr> {
        if *next == target {
            return Some(e);
        }
        *next += 1;
        match e {
            Expr::Neg(a) => walk(a, target, next),
            Expr::Bin(_, a, b) => walk(a, target, next).or_else(|| walk(b, target, next)),
            Expr::Call(_, args) => args.iter().find_map(|a| walk(a, target, next)),
            _ => None,
        }
    }
    walk(e, target, &mut 0)
}
