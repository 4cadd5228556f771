//! Scalar/vector/matrix fields of `(t, x1..xd)` parsed from a small
//! expression DSL, with exact derivatives by forward-mode dual numbers.
//!
//! Expressions are immutable after parsing and evaluation is reentrant, so
//! fields can be shared freely across worker threads.

mod ast;
mod dual;
mod parser;

pub use ast::{EvalError, Expression, Func};
pub use dual::{Dual, Scalar};
pub use parser::{parse, ParseError};

/// Errors from building or evaluating fields.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FieldError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("expression `{expr}` references x{index} but the dimension is {dim}")]
    DimensionExceeded {
        expr: String,
        index: usize,
        dim: usize,
    },
    #[error("expected {expected} components, got {got}")]
    ComponentCount { expected: usize, got: usize },
}

/// A scalar field `f(t, x)` on a `d`-dimensional chart.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    expr: Expression,
    dim: usize,
}

impl ScalarField {
    /// Wrap a parsed expression, checking that no coordinate beyond `dim` is
    /// referenced.
    pub fn new(expr: Expression, dim: usize) -> Result<Self, FieldError> {
        let max = expr.max_coord();
        if max > dim {
            return Err(FieldError::DimensionExceeded {
                expr: expr.to_string(),
                index: max,
                dim,
            });
        }
        Ok(ScalarField { expr, dim })
    }

    /// Parse a DSL string into a field of the given dimension.
    pub fn parse(source: &str, dim: usize) -> Result<Self, FieldError> {
        Self::new(parser::parse(source)?, dim)
    }

    /// A constant field (any dimension).
    pub fn constant(c: f64, dim: usize) -> Self {
        ScalarField {
            expr: Expression::Number(c),
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn expression(&self) -> &Expression {
        &self.expr
    }

    /// Structural substitution `t := horizon - t`, used for time reversal.
    /// Derivatives of the reversed field pick up their signs from the chain
    /// rule through the dual numbers, not from hand-flipped formulas.
    pub fn reverse_time(&self, horizon: f64) -> Self {
        fn subst(e: &Expression, horizon: f64) -> Expression {
            match e {
                Expression::Time => Expression::Sub(
                    Box::new(Expression::Number(horizon)),
                    Box::new(Expression::Time),
                ),
                Expression::Number(_) | Expression::Coord(_) => e.clone(),
                Expression::Neg(a) => Expression::Neg(Box::new(subst(a, horizon))),
                Expression::Add(a, b) => {
                    Expression::Add(Box::new(subst(a, horizon)), Box::new(subst(b, horizon)))
                }
                Expression::Sub(a, b) => {
                    Expression::Sub(Box::new(subst(a, horizon)), Box::new(subst(b, horizon)))
                }
                Expression::Mul(a, b) => {
                    Expression::Mul(Box::new(subst(a, horizon)), Box::new(subst(b, horizon)))
                }
                Expression::Div(a, b) => {
                    Expression::Div(Box::new(subst(a, horizon)), Box::new(subst(b, horizon)))
                }
                Expression::Pow(a, b) => {
                    Expression::Pow(Box::new(subst(a, horizon)), Box::new(subst(b, horizon)))
                }
                Expression::Call(f, args) => {
                    Expression::Call(*f, args.iter().map(|a| subst(a, horizon)).collect())
                }
            }
        }
        ScalarField {
            expr: subst(&self.expr, horizon),
            dim: self.dim,
        }
    }

    /// Evaluate on any scalar type (plain values or duals).
    #[inline]
    pub fn eval_scalar<S: Scalar>(&self, t: S, x: &[S]) -> Result<S, EvalError> {
        self.expr.eval(t, x)
    }

    /// Field value at `(t, x)`.
    #[inline]
    pub fn value(&self, t: f64, x: &[f64]) -> Result<f64, EvalError> {
        self.expr.eval(t, x)
    }

    /// Exact `∂f/∂t`.
    pub fn dt(&self, t: f64, x: &[f64]) -> Result<f64, EvalError> {
        self.dt_scalar(t, x)
    }

    /// Exact `∂f/∂t` on a generic scalar.
    pub fn dt_scalar<S: Scalar>(&self, t: S, x: &[S]) -> Result<S, EvalError> {
        let mut buf = DualBuf::<S>::new(x);
        Ok(self.expr.eval(Dual::seed(t), buf.slice())?.dot)
    }

    /// Exact `∂f/∂xi` (zero-based `i`).
    pub fn dx(&self, i: usize, t: f64, x: &[f64]) -> Result<f64, EvalError> {
        self.dx_scalar(i, t, x)
    }

    /// Exact `∂f/∂xi` on a generic scalar; this is what lets curvature
    /// differentiate through the Christoffel formula.
    pub fn dx_scalar<S: Scalar>(&self, i: usize, t: S, x: &[S]) -> Result<S, EvalError> {
        let mut buf = DualBuf::<S>::new(x);
        buf.seed(i);
        Ok(self.expr.eval(Dual::lift(t), buf.slice())?.dot)
    }

    /// Exact second spatial derivative `∂²f/∂xi∂xj` by nested duals.
    pub fn d2x(&self, i: usize, j: usize, t: f64, x: &[f64]) -> Result<f64, EvalError> {
        // outer seeds xi, inner seeds xj
        let mut outer = DualBuf::<f64>::new(x);
        outer.seed(i);
        let mut inner = DualBuf::<Dual<f64>>::new(outer.slice());
        inner.seed(j);
        Ok(self
            .expr
            .eval(Dual::lift(Dual::lift(t)), inner.slice())?
            .dot
            .dot)
    }
}

const STACK_DIM: usize = 8;

/// Coordinate buffer lifted to duals, stack-allocated for small dimensions.
struct DualBuf<S: Scalar> {
    stack: [Dual<S>; STACK_DIM],
    heap: Vec<Dual<S>>,
    len: usize,
}

impl<S: Scalar> DualBuf<S> {
    #[inline]
    fn new(x: &[S]) -> Self {
        let len = x.len();
        if len <= STACK_DIM {
            let mut stack = [Dual::lift(S::constant(0.0)); STACK_DIM];
            for (slot, &v) in stack.iter_mut().zip(x) {
                *slot = Dual::lift(v);
            }
            DualBuf {
                stack,
                heap: Vec::new(),
                len,
            }
        } else {
            DualBuf {
                stack: [Dual::lift(S::constant(0.0)); STACK_DIM],
                heap: x.iter().map(|&v| Dual::lift(v)).collect(),
                len,
            }
        }
    }

    #[inline]
    fn seed(&mut self, i: usize) {
        if self.len <= STACK_DIM {
            self.stack[i].dot = S::constant(1.0);
        } else {
            self.heap[i].dot = S::constant(1.0);
        }
    }

    #[inline]
    fn slice(&mut self) -> &[Dual<S>] {
        if self.len <= STACK_DIM {
            &self.stack[..self.len]
        } else {
            &self.heap
        }
    }
}

/// A vector field given componentwise.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub components: Vec<ScalarField>,
}

impl VectorField {
    pub fn parse(sources: &[String], dim: usize) -> Result<Self, FieldError> {
        let components = sources
            .iter()
            .map(|s| ScalarField::parse(s, dim))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(VectorField { components })
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn value_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        for (o, c) in out.iter_mut().zip(&self.components) {
            *o = c.value(t, x)?;
        }
        Ok(())
    }
}

/// A matrix field given entrywise, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixField {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<ScalarField>,
}

impl MatrixField {
    pub fn parse(sources: &[Vec<String>], dim: usize) -> Result<Self, FieldError> {
        let rows = sources.len();
        let cols = sources.first().map_or(0, |r| r.len());
        let mut entries = Vec::with_capacity(rows * cols);
        for row in sources {
            if row.len() != cols {
                return Err(FieldError::ComponentCount {
                    expected: cols,
                    got: row.len(),
                });
            }
            for s in row {
                entries.push(ScalarField::parse(s, dim)?);
            }
        }
        Ok(MatrixField {
            rows,
            cols,
            entries,
        })
    }

    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> &ScalarField {
        &self.entries[i * self.cols + j]
    }

    pub fn value_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        for (o, e) in out.iter_mut().zip(&self.entries) {
            *o = e.value(t, x)?;
        }
        Ok(())
    }
}
