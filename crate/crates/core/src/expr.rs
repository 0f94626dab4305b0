//! A small closed-form expression grammar for coefficient and data fields:
//! sums, products, quotients and integer powers of numbers, `t`, the spatial
//! variables `x` (alias `x1`) through `x9`, the constant `pi`, and `sin`/`cos`.
//!
//! Grammar:
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := '-' factor | primary ('^' uint)?
//! primary:= number | 'pi' | 't' | 'x' | 'x1'..'x9'
//!         | 'sin' '(' expr ')' | 'cos' '(' expr ')' | '(' expr ')'
//! ```

use thiserror::Error;

use crate::scalar::{cast, Scalar};

#[derive(Debug, Error, PartialEq)]
pub enum ExprError {
    #[error("unexpected character {0:?} at byte {1}")]
    UnexpectedChar(char, usize),
    #[error("unexpected end of expression")]
    UnexpectedEnd,
    #[error("expected {expected} at byte {at}")]
    Expected { expected: &'static str, at: usize },
    #[error("variable {0} exceeds the problem dimension {1}")]
    VariableOutOfRange(String, usize),
    #[error("invalid number literal at byte {0}")]
    BadNumber(usize),
    #[error("trailing input at byte {0}")]
    TrailingInput(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(u8), // 0 = t, 1.. = spatial axis index + 1
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Pow(Box<Expr>, u32),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
}

impl Expr {
    /// Parses an expression for a problem of spatial dimension `dim`.
    pub fn parse(src: &str, dim: usize) -> Result<Self, ExprError> {
        let mut p = Parser {
            src: src.as_bytes(),
            pos: 0,
            dim,
        };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(ExprError::TrailingInput(p.pos));
        }
        Ok(e)
    }

    pub fn eval<T: Scalar>(&self, t: T, x: &[T]) -> T {
        match self {
            Expr::Num(v) => cast(*v),
            Expr::Var(0) => t,
            Expr::Var(a) => x[*a as usize - 1],
            Expr::Add(l, r) => l.eval(t, x) + r.eval(t, x),
            Expr::Sub(l, r) => l.eval(t, x) - r.eval(t, x),
            Expr::Mul(l, r) => l.eval(t, x) * r.eval(t, x),
            Expr::Div(l, r) => l.eval(t, x) / r.eval(t, x),
            Expr::Neg(e) => -e.eval(t, x),
            Expr::Pow(e, k) => e.eval(t, x).powi(*k as i32),
            Expr::Sin(e) => e.eval(t, x).sin(),
            Expr::Cos(e) => e.eval(t, x).cos(),
        }
    }

    /// Whether any spatial variable occurs.
    pub fn uses_space(&self) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(a) => *a != 0,
            Expr::Add(l, r) | Expr::Sub(l, r) | Expr::Mul(l, r) | Expr::Div(l, r) => {
                l.uses_space() || r.uses_space()
            }
            Expr::Neg(e) | Expr::Sin(e) | Expr::Cos(e) => e.uses_space(),
            Expr::Pow(e, _) => e.uses_space(),
        }
    }

    /// Whether `t` occurs.
    pub fn uses_time(&self) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(a) => *a == 0,
            Expr::Add(l, r) | Expr::Sub(l, r) | Expr::Mul(l, r) | Expr::Div(l, r) => {
                l.uses_time() || r.uses_time()
            }
            Expr::Neg(e) | Expr::Sin(e) | Expr::Cos(e) => e.uses_time(),
            Expr::Pow(e, _) => e.uses_time(),
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    dim: usize,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(b'-') => {
                    self.pos += 1;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
                }
                Some(b'/') => {
                    self.pos += 1;
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.factor()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr, ExprError> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.factor()?)));
        }
        let base = self.primary()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let k = self.uint()?;
            return Ok(Expr::Pow(Box::new(base), k));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ExprError> {
        let c = self.peek().ok_or(ExprError::UnexpectedEnd)?;
        if c == b'(' {
            self.pos += 1;
            let inner = self.expr()?;
            self.expect(b')')?;
            return Ok(inner);
        }
        if c.is_ascii_digit() || c == b'.' {
            return self.number();
        }
        if c.is_ascii_alphabetic() {
            let start = self.pos;
            while self.pos < self.src.len()
                && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
            {
                self.pos += 1;
            }
            let word = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
            return match word {
                "pi" => Ok(Expr::Num(std::f64::consts::PI)),
                "t" => Ok(Expr::Var(0)),
                "x" => self.space_var(0, word),
                "sin" => {
                    self.expect(b'(')?;
                    let inner = self.expr()?;
                    self.expect(b')')?;
                    Ok(Expr::Sin(Box::new(inner)))
                }
                "cos" => {
                    self.expect(b'(')?;
                    let inner = self.expr()?;
                    self.expect(b')')?;
                    Ok(Expr::Cos(Box::new(inner)))
                }
                _ => {
                    if let Some(rest) = word.strip_prefix('x') {
                        if let Ok(a) = rest.parse::<usize>() {
                            if a >= 1 {
                                return self.space_var(a - 1, word);
                            }
                        }
                    }
                    Err(ExprError::Expected {
                        expected: "number, variable, pi, sin or cos",
                        at: start,
                    })
                }
            };
        }
        Err(ExprError::UnexpectedChar(c as char, self.pos))
    }

    fn space_var(&mut self, axis: usize, word: &str) -> Result<Expr, ExprError> {
        if axis >= self.dim {
            return Err(ExprError::VariableOutOfRange(word.to_string(), self.dim));
        }
        Ok(Expr::Var(axis as u8 + 1))
    }

    fn number(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        while self.pos < self.src.len() {
            let c = self.src[self.pos];
            if c.is_ascii_digit() || c == b'.' {
                self.pos += 1;
            } else if (c == b'e' || c == b'E') && self.pos > start {
                self.pos += 1;
                if matches!(self.src.get(self.pos), Some(b'+') | Some(b'-')) {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
        std::str::from_utf8(&self.src[start..self.pos])
            .unwrap()
            .parse::<f64>()
            .map(Expr::Num)
            .map_err(|_| ExprError::BadNumber(start))
    }

    fn uint(&mut self) -> Result<u32, ExprError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(ExprError::Expected {
                expected: "integer exponent",
                at: start,
            });
        }
        std::str::from_utf8(&self.src[start..self.pos])
            .unwrap()
            .parse::<u32>()
            .map_err(|_| ExprError::BadNumber(start))
    }

    fn expect(&mut self, c: u8) -> Result<(), ExprError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(ExprError::Expected {
                expected: "delimiter",
                at: self.pos,
            })
        }
    }
}
