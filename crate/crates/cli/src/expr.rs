//! A small arithmetic expression language for user-defined problem data.
//!
//! Grammar (standard precedence, `^` right-associative and binding tighter
//! than unary minus):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | 'pi' | 'x' | 'y' | 'u' | func '(' expr ')' | '(' expr ')'
//! func   := 'sin' | 'cos' | 'exp' | 'sqrt' | 'abs'
//! ```

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("byte {offset}: unexpected character {found:?}")]
    UnexpectedChar { offset: usize, found: char },
    #[error("byte {offset}: malformed number {text:?}")]
    BadNumber { offset: usize, text: String },
    #[error("byte {offset}: unknown identifier {name:?}")]
    UnknownIdentifier { offset: usize, name: String },
    #[error("byte {offset}: function {name} takes 1 argument, found {found}")]
    Arity {
        offset: usize,
        name: &'static str,
        found: usize,
    },
    #[error("byte {offset}: expected {expected}")]
    Expected { offset: usize, expected: String },
    #[error("byte {offset}: unexpected trailing input")]
    Trailing { offset: usize },
}

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("square root of a negative value ({0})")]
    SqrtOfNegative(f64),
    #[error("negative base {base} raised to non-integer exponent {exponent}")]
    FractionalPower { base: f64, exponent: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X,
    Y,
    U,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Abs,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
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

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Pi,
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn eval(&self, x: f64, y: f64, u: f64) -> Result<f64, EvalError> {
        match self {
            Expr::Num(v) => Ok(*v),
            Expr::Pi => Ok(std::f64::consts::PI),
            Expr::Var(Var::X) => Ok(x),
            Expr::Var(Var::Y) => Ok(y),
            Expr::Var(Var::U) => Ok(u),
            Expr::Neg(e) => Ok(-e.eval(x, y, u)?),
            Expr::Bin(op, a, b) => {
                let a = a.eval(x, y, u)?;
                let b = b.eval(x, y, u)?;
                match op {
                    BinOp::Add => Ok(a + b),
                    BinOp::Sub => Ok(a - b),
                    BinOp::Mul => Ok(a * b),
                    BinOp::Div => {
                        if b == 0.0 {
                            Err(EvalError::DivisionByZero)
                        } else {
                            Ok(a / b)
                        }
                    }
                    BinOp::Pow => {
                        if a < 0.0 && b.fract() != 0.0 {
                            Err(EvalError::FractionalPower {
                                base: a,
                                exponent: b,
                            })
                        } else if a == 0.0 && b < 0.0 {
                            Err(EvalError::DivisionByZero)
                        } else {
                            Ok(a.powf(b))
                        }
                    }
                }
            }
            Expr::Call(f, e) => {
                let v = e.eval(x, y, u)?;
                match f {
                    Func::Sin => Ok(v.sin()),
                    Func::Cos => Ok(v.cos()),
                    Func::Exp => Ok(v.exp()),
                    Func::Sqrt => {
                        if v < 0.0 {
                            Err(EvalError::SqrtOfNegative(v))
                        } else {
                            Ok(v.sqrt())
                        }
                    }
                    Func::Abs => Ok(v.abs()),
                }
            }
        }
    }

    /// Whether the expression mentions the given variable anywhere.
    pub fn uses(&self, var: Var) -> bool {
        match self {
            Expr::Num(_) | Expr::Pi => false,
            Expr::Var(v) => *v == var,
            Expr::Neg(e) | Expr::Call(_, e) => e.uses(var),
            Expr::Bin(_, a, b) => a.uses(var) || b.uses(var),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
            Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
            Expr::Neg(_) => 3,
            Expr::Bin(BinOp::Pow, ..) => 4,
            _ => 5,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn child(f: &mut fmt::Formatter<'_>, e: &Expr, needs_paren: bool) -> fmt::Result {
            if needs_paren {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        }
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Pi => write!(f, "pi"),
            Expr::Var(Var::X) => write!(f, "x"),
            Expr::Var(Var::Y) => write!(f, "y"),
            Expr::Var(Var::U) => write!(f, "u"),
            Expr::Neg(e) => {
                write!(f, "-")?;
                child(f, e, e.precedence() < 3)
            }
            Expr::Bin(op, a, b) => {
                let p = self.precedence();
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                // Left child needs parens when looser than us, or equal for
                // the right-associative `^`; mirrored for the right child of
                // the left-associative operators.
                let (left_tight, right_tight) = if *op == BinOp::Pow {
                    (a.precedence() > p, b.precedence() >= p)
                } else {
                    (a.precedence() >= p, b.precedence() > p)
                };
                child(f, a, !left_tight)?;
                write!(f, "{sym}")?;
                child(f, b, !right_tight)
            }
            Expr::Call(func, e) => write!(f, "{}({e})", func.name()),
        }
    }
}

struct Parser<'a> {
    text: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

pub fn parse_expr(text: &str) -> Result<Expr, ParseError> {
    let mut p = Parser {
        text,
        bytes: text.as_bytes(),
        pos: 0,
    };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos < p.bytes.len() {
        return Err(ParseError::Trailing { offset: p.pos });
    }
    Ok(e)
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8, what: &str) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(ParseError::Expected {
                offset: self.pos,
                expected: what.to_string(),
            })
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut acc = self.term()?;
        loop {
            if self.eat(b'+') {
                acc = Expr::Bin(BinOp::Add, Box::new(acc), Box::new(self.term()?));
            } else if self.eat(b'-') {
                acc = Expr::Bin(BinOp::Sub, Box::new(acc), Box::new(self.term()?));
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut acc = self.unary()?;
        loop {
            if self.eat(b'*') {
                acc = Expr::Bin(BinOp::Mul, Box::new(acc), Box::new(self.unary()?));
            } else if self.eat(b'/') {
                acc = Expr::Bin(BinOp::Div, Box::new(acc), Box::new(self.unary()?));
            } else {
                return Ok(acc);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat(b'-') {
            Ok(Expr::Neg(Box::new(self.unary()?)))
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.eat(b'^') {
            // Right-associative; the exponent may carry its own unary minus.
            Ok(Expr::Bin(
                BinOp::Pow,
                Box::new(base),
                Box::new(self.unary()?),
            ))
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')', "closing ')'")?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.identifier(),
            Some(c) => Err(ParseError::UnexpectedChar {
                offset: self.pos,
                found: self.text[self.pos..].chars().next().unwrap_or(c as char),
            }),
            None => Err(ParseError::Expected {
                offset: self.pos,
                expected: "an expression".to_string(),
            }),
        }
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        while self
            .bytes
            .get(self.pos)
            .is_some_and(|c| c.is_ascii_digit() || *c == b'.')
        {
            self.pos += 1;
        }
        // Optional exponent part: e or E, optional sign, digits.
        if self
            .bytes
            .get(self.pos)
            .is_some_and(|c| *c == b'e' || *c == b'E')
        {
            let mut probe = self.pos + 1;
            if self
                .bytes
                .get(probe)
                .is_some_and(|c| *c == b'+' || *c == b'-')
            {
                probe += 1;
            }
            if self.bytes.get(probe).is_some_and(|c| c.is_ascii_digit()) {
                self.pos = probe;
                while self.bytes.get(self.pos).is_some_and(|c| c.is_ascii_digit()) {
                    self.pos += 1;
                }
            }
        }
        let text = &self.text[start..self.pos];
        text.parse::<f64>()
            .map(Expr::Num)
            .map_err(|_| ParseError::BadNumber {
                offset: start,
                text: text.to_string(),
            })
    }

    fn identifier(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        while self
            .bytes
            .get(self.pos)
            .is_some_and(|c| c.is_ascii_alphanumeric() || *c == b'_')
        {
            self.pos += 1;
        }
        let name = &self.text[start..self.pos];
        let func = match name {
            "x" => return Ok(Expr::Var(Var::X)),
            "y" => return Ok(Expr::Var(Var::Y)),
            "u" => return Ok(Expr::Var(Var::U)),
            "pi" => return Ok(Expr::Pi),
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            _ => {
                return Err(ParseError::UnknownIdentifier {
                    offset: start,
                    name: name.to_string(),
                })
            }
        };
        self.expect(b'(', "'(' after function name")?;
        let mut args = vec![self.expr()?];
        while self.eat(b',') {
            args.push(self.expr()?);
        }
        self.expect(b')', "closing ')'")?;
        if args.len() != 1 {
            return Err(ParseError::Arity {
                offset: start,
                name: func.name(),
                found: args.len(),
            });
        }
        Ok(Expr::Call(func, Box::new(args.pop().unwrap())))
    }
}
