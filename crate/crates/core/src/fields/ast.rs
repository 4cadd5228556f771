//! Expression trees for scalar fields of `(t, x1..xd)`.

use std::fmt;

use super::dual::Scalar;

/// Built-in functions of the field DSL.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Sin,
    Cos,
    Sqrt,
    Tanh,
    Abs,
    Min,
    Max,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
            Func::Tanh => "tanh",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sqrt" => Func::Sqrt,
            "tanh" => Func::Tanh,
            "abs" => Func::Abs,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }
}

/// Parsed expression. Variables are the time `t` and coordinates `x1..xd`
/// (stored zero-based in [`Expression::Coord`]).
#[derive(Debug, Clone, PartialEq)]
pub enum Expression {
    Number(f64),
    Time,
    Coord(usize),
    Neg(Box<Expression>),
    Add(Box<Expression>, Box<Expression>),
    Sub(Box<Expression>, Box<Expression>),
    Mul(Box<Expression>, Box<Expression>),
    Div(Box<Expression>, Box<Expression>),
    Pow(Box<Expression>, Box<Expression>),
    Call(Func, Vec<Expression>),
}

/// Where an evaluation left its domain.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("log of non-positive argument in `{0}`")]
    LogDomain(String),
    #[error("sqrt of negative argument in `{0}`")]
    SqrtDomain(String),
    #[error("division by zero in `{0}`")]
    DivByZero(String),
    #[error("power with non-positive base and non-integer exponent in `{0}`")]
    PowDomain(String),
    #[error("coordinate index {index} out of range (dimension {dim}) in `{expr}`")]
    CoordOutOfRange {
        index: usize,
        dim: usize,
        expr: String,
    },
}

impl Expression {
    /// Whether the expression references the time variable.
    pub fn uses_time(&self) -> bool {
        match self {
            Expression::Time => true,
            Expression::Number(_) | Expression::Coord(_) => false,
            Expression::Neg(a) => a.uses_time(),
            Expression::Add(a, b)
            | Expression::Sub(a, b)
            | Expression::Mul(a, b)
            | Expression::Div(a, b)
            | Expression::Pow(a, b) => a.uses_time() || b.uses_time(),
            Expression::Call(_, args) => args.iter().any(|a| a.uses_time()),
        }
    }

    /// Largest coordinate index referenced, as a dimension requirement
    /// (`x3` yields 3); 0 when no coordinate occurs.
    pub fn max_coord(&self) -> usize {
        match self {
            Expression::Number(_) | Expression::Time => 0,
            Expression::Coord(i) => i + 1,
            Expression::Neg(a) => a.max_coord(),
            Expression::Add(a, b)
            | Expression::Sub(a, b)
            | Expression::Mul(a, b)
            | Expression::Div(a, b)
            | Expression::Pow(a, b) => a.max_coord().max(b.max_coord()),
            Expression::Call(_, args) => args.iter().map(|a| a.max_coord()).max().unwrap_or(0),
        }
    }

    /// Evaluate on any [`Scalar`]; dual arguments propagate derivatives.
    pub fn eval<S: Scalar>(&self, t: S, x: &[S]) -> Result<S, EvalError> {
        match self {
            Expression::Number(c) => Ok(S::constant(*c)),
            Expression::Time => Ok(t),
            Expression::Coord(i) => x
                .get(*i)
                .copied()
                .ok_or_else(|| EvalError::CoordOutOfRange {
                    index: i + 1,
                    dim: x.len(),
                    expr: self.to_string(),
                }),
            Expression::Neg(a) => Ok(-a.eval(t, x)?),
            Expression::Add(a, b) => Ok(a.eval(t, x)? + b.eval(t, x)?),
            Expression::Sub(a, b) => Ok(a.eval(t, x)? - b.eval(t, x)?),
            Expression::Mul(a, b) => Ok(a.eval(t, x)? * b.eval(t, x)?),
            Expression::Div(a, b) => {
                let num = a.eval(t, x)?;
                let den = b.eval(t, x)?;
                if den.value() == 0.0 {
                    return Err(EvalError::DivByZero(self.to_string()));
                }
                Ok(num / den)
            }
            Expression::Pow(a, b) => {
                let base = a.eval(t, x)?;
                if let Some(n) = integer_exponent(b) {
                    if n < 0 && base.value() == 0.0 {
                        return Err(EvalError::DivByZero(self.to_string()));
                    }
                    return Ok(base.powi(n));
                }
                let e = b.eval(t, x)?;
                if base.value() <= 0.0 {
                    return Err(EvalError::PowDomain(self.to_string()));
                }
                Ok(base.powf(e))
            }
            Expression::Call(f, args) => {
                let a0 = args[0].eval(t, x)?;
                match f {
                    Func::Exp => Ok(a0.exp()),
                    Func::Log => {
                        if a0.value() <= 0.0 {
                            return Err(EvalError::LogDomain(self.to_string()));
                        }
                        Ok(a0.ln())
                    }
                    Func::Sin => Ok(a0.sin()),
                    Func::Cos => Ok(a0.cos()),
                    Func::Sqrt => {
                        if a0.value() < 0.0 {
                            return Err(EvalError::SqrtDomain(self.to_string()));
                        }
                        Ok(a0.sqrt())
                    }
                    Func::Tanh => Ok(a0.tanh()),
                    Func::Abs => Ok(a0.abs()),
                    Func::Min => Ok(a0.min(args[1].eval(t, x)?)),
                    Func::Max => Ok(a0.max(args[1].eval(t, x)?)),
                }
            }
        }
    }
}

/// Literal integer exponents (optionally negated) are computed by repeated
/// multiplication, which keeps the power differentiable for any base sign.
fn integer_exponent(e: &Expression) -> Option<i32> {
    match e {
        Expression::Number(n) if n.fract() == 0.0 && n.abs() <= 64.0 => Some(*n as i32),
        Expression::Neg(inner) => integer_exponent(inner).map(|n| -n),
        _ => None,
    }
}

// Precedence levels for printing: higher binds tighter.
fn precedence(e: &Expression) -> u8 {
    match e {
        Expression::Add(..) | Expression::Sub(..) => 1,
        Expression::Mul(..) | Expression::Div(..) => 2,
        Expression::Neg(..) => 3,
        Expression::Pow(..) => 4,
        _ => 5,
    }
}

impl fmt::Display for Expression {
    /// Prints a form that re-parses to a structurally equal tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let paren = |f: &mut fmt::Formatter<'_>, e: &Expression, need: bool| -> fmt::Result {
            if need {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        };
        match self {
            Expression::Number(c) => {
                if *c < 0.0 || c.is_nan() {
                    write!(f, "({c})")
                } else {
                    write!(f, "{c}")
                }
            }
            Expression::Time => write!(f, "t"),
            Expression::Coord(i) => write!(f, "x{}", i + 1),
            Expression::Neg(a) => {
                // `-` binds looser than `^`, tighter than `*`.
                write!(f, "-")?;
                paren(f, a, precedence(a) < 3)
            }
            Expression::Add(a, b) => {
                paren(f, a, precedence(a) < 1)?;
                write!(f, " + ")?;
                paren(f, b, precedence(b) <= 1)
            }
            Expression::Sub(a, b) => {
                paren(f, a, precedence(a) < 1)?;
                write!(f, " - ")?;
                // right side of `-` must bind tighter than +/- to survive reparse
                paren(f, b, precedence(b) <= 1)
            }
            Expression::Mul(a, b) => {
                paren(f, a, precedence(a) < 2)?;
                write!(f, "*")?;
                paren(f, b, precedence(b) <= 2)
            }
            Expression::Div(a, b) => {
                paren(f, a, precedence(a) < 2)?;
                write!(f, "/")?;
                paren(f, b, precedence(b) <= 2)
            }
            Expression::Pow(a, b) => {
                // `^` is right-associative and binds tighter than unary minus.
                paren(f, a, precedence(a) <= 4)?;
                write!(f, "^")?;
                paren(f, b, precedence(b) < 3)
            }
            Expression::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}
