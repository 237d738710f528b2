//! Expression language for coefficients, sources and initial data.
//!
//! Grammar (lowest to highest precedence):
//!
//! ```text
//! expr    := expr ('+' | '-') expr          left associative
//!          | expr ('*' | '/') expr          left associative
//!          | '-' expr                       unary minus
//!          | expr '^' expr                  right associative
//!          | number | variable | call | '(' expr ')'
//! call    := name '(' expr (',' expr)* ')'
//! name    := sin | cos | exp | sqrt | abs   (one argument)
//!          | min | max                      (two arguments)
//! variable:= x | y | t | u | pi
//! number  := digits ['.' digits] [('e'|'E') ['+'|'-'] digits]
//! ```
//!
//! Unary minus binds looser than `^`, so `-2^2` is `-(2^2)`,
//! while `2^-1` is `2^(-1)`.

mod diff;
mod lexer;
mod parser;

use std::fmt;

use thiserror::Error;

pub use lexer::{tokenize, Token, TokenKind};
pub use parser::parse_tokens;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("unrecognized character '{found}' at byte {position}")]
    Lex { position: usize, found: char },
    #[error("invalid number literal '{text}' at byte {position}")]
    BadNumber { position: usize, text: String },
    #[error("syntax error at byte {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("unknown function '{name}' at byte {position}")]
    UnknownFunction { name: String, position: usize },
    #[error("unknown variable '{name}' at byte {position}")]
    UnknownVariable { name: String, position: usize },
    #[error("function '{name}' at byte {position} takes {expected} argument(s), got {found}")]
    Arity {
        name: String,
        position: usize,
        expected: usize,
        found: usize,
    },
    #[error("unbound variable '{0}'")]
    Unbound(Var),
    #[error("cannot differentiate: {0}")]
    NotDifferentiable(String),
    #[error("cannot differentiate power with exponent depending on '{0}'")]
    VariableExponent(Var),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    X,
    Y,
    T,
    U,
    Pi,
}

impl Var {
    pub fn from_name(name: &str) -> Option<Var> {
        Some(match name {
            "x" => Var::X,
            "y" => Var::Y,
            "t" => Var::T,
            "u" => Var::U,
            "pi" => Var::Pi,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Var::X => "x",
            Var::Y => "y",
            Var::T => "t",
            Var::U => "u",
            Var::Pi => "pi",
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
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

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
            BinOp::Pow => 4,
        }
    }

    fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinOp::Add => a + b,
            BinOp::Sub => a - b,
            BinOp::Mul => a * b,
            BinOp::Div => a / b,
            BinOp::Pow => a.powf(b),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Abs,
    Min,
    Max,
    /// Derivative of `abs`; only produced by [`Expr::differentiate`]
    /// and not accepted by the parser. Evaluating it at zero is an error.
    Sign,
}

impl Func {
    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
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
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
            Func::Sign => "sign",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }
}

/// Abstract syntax tree. Immutable once built; `Send + Sync`.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

/// Values for the free variables `x, y, t, u`. Unset entries are unbound.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Bindings {
    pub x: Option<f64>,
    pub y: Option<f64>,
    pub t: Option<f64>,
    pub u: Option<f64>,
}

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn x(mut self, v: f64) -> Self {
        self.x = Some(v);
        self
    }

    pub fn y(mut self, v: f64) -> Self {
        self.y = Some(v);
        self
    }

    pub fn t(mut self, v: f64) -> Self {
        self.t = Some(v);
        self
    }

    pub fn u(mut self, v: f64) -> Self {
        self.u = Some(v);
        self
    }

    /// Binds `x` and, in 2-D, `y`.
    pub fn point(self, p: [f64; 2], dim: usize) -> Self {
        let b = self.x(p[0]);
        if dim == 2 {
            b.y(p[1])
        } else {
            b
        }
    }

    fn lookup(&self, var: Var) -> Result<f64, ExprError> {
        let v = match var {
            Var::X => self.x,
            Var::Y => self.y,
            Var::T => self.t,
            Var::U => self.u,
            Var::Pi => Some(std::f64::consts::PI),
        };
        v.ok_or(ExprError::Unbound(var))
    }
}

/// Parses an expression string.
pub fn parse(src: &str) -> Result<Expr, ExprError> {
    let tokens = tokenize(src)?;
    parse_tokens(&tokens, src.len())
}

impl std::str::FromStr for Expr {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

impl Expr {
    pub fn constant(v: f64) -> Expr {
        Expr::Const(v)
    }

    pub fn eval(&self, b: &Bindings) -> Result<f64, ExprError> {
        Ok(match self {
            Expr::Const(c) => *c,
            Expr::Var(v) => b.lookup(*v)?,
            Expr::Neg(e) => -e.eval(b)?,
            Expr::Binary(op, l, r) => op.apply(l.eval(b)?, r.eval(b)?),
            Expr::Call(f, args) => {
                let a = args[0].eval(b)?;
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Exp => a.exp(),
                    Func::Sqrt => a.sqrt(),
                    Func::Abs => a.abs(),
                    Func::Min => a.min(args[1].eval(b)?),
                    Func::Max => a.max(args[1].eval(b)?),
                    Func::Sign => {
                        if a == 0.0 {
                            return Err(ExprError::NotDifferentiable(
                                "abs has no derivative at 0".into(),
                            ));
                        }
                        a.signum()
                    }
                }
            }
        })
    }

    /// True if `var` occurs anywhere in the tree.
    pub fn depends_on(&self, var: Var) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var(v) => *v == var,
            Expr::Neg(e) => e.depends_on(var),
            Expr::Binary(_, l, r) => l.depends_on(var) || r.depends_on(var),
            Expr::Call(_, args) => args.iter().any(|a| a.depends_on(var)),
        }
    }

    /// The value of the expression if it contains no free variables.
    pub fn as_constant(&self) -> Option<f64> {
        if [Var::X, Var::Y, Var::T, Var::U]
            .iter()
            .any(|&v| self.depends_on(v))
        {
            return None;
        }
        self.eval(&Bindings::default()).ok()
    }

    pub fn differentiate(&self, var: Var) -> Result<Expr, ExprError> {
        diff::differentiate(self, var)
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(op, _, _) => op.precedence(),
            Expr::Neg(_) => 3,
            Expr::Const(c) if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) => 3,
            _ => 5,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => {
                if c.is_sign_negative() {
                    write!(f, "-{}", -c)
                } else {
                    write!(f, "{c}")
                }
            }
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(e) => {
                if e.precedence() < 4 {
                    write!(f, "-({e})")
                } else {
                    write!(f, "-{e}")
                }
            }
            Expr::Binary(op, l, r) => {
                let p = op.precedence();
                // left: strictly tighter for `^`, at least as tight otherwise
                let left_paren = if *op == BinOp::Pow {
                    l.precedence() <= p
                } else {
                    l.precedence() < p
                };
                // right: `^` is right associative and admits a unary minus
                let right_paren = if *op == BinOp::Pow {
                    r.precedence() < 3
                } else {
                    r.precedence() <= p
                };
                if left_paren {
                    write!(f, "({l})")?;
                } else {
                    write!(f, "{l}")?;
                }
                f.write_str(op.symbol())?;
                if right_paren {
                    write!(f, "({r})")
                } else {
                    write!(f, "{r}")
                }
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}
