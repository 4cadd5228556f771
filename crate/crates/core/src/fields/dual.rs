//! Forward-mode dual numbers, nestable for higher derivatives.
//!
//! Every quantity the geometry layer needs — metric entries, Christoffel
//! symbols, Hessians, curvature — is obtained by evaluating expression trees
//! on [`Scalar`] values. Seeding a coordinate with unit tangent and reading
//! the tangent of the result gives an exact derivative; nesting `Dual<Dual<_>>`
//! gives exact second derivatives. No step-size tuning, no truncation error
//! beyond floating-point rounding.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Closed arithmetic with the elementary functions the DSL exposes.
///
/// Implemented by `f64` and by [`Dual<T>`] for any `T: Scalar`, so code
/// written against this trait can be differentiated to any order by wrapping
/// its inputs.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn constant(c: f64) -> Self;

    /// Innermost primal value (strips all tangent layers).
    fn value(self) -> f64;

    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn sqrt(self) -> Self;
    fn tanh(self) -> Self;
    fn abs(self) -> Self;
    /// Integer power by repeated multiplication.
    fn powi(self, n: i32) -> Self;
    /// Real power `exp(e * ln(self))`; caller must ensure a positive base.
    fn powf(self, e: Self) -> Self;
    fn max(self, other: Self) -> Self;
    fn min(self, other: Self) -> Self;
}

impl Scalar for f64 {
    #[inline]
    fn constant(c: f64) -> Self {
        c
    }
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    #[inline]
    fn abs(self) -> Self {
        f64::abs(self)
    }
    #[inline]
    fn powi(self, n: i32) -> Self {
        pow_by_mul(self, n)
    }
    #[inline]
    fn powf(self, e: Self) -> Self {
        f64::powf(self, e)
    }
    #[inline]
    fn max(self, other: Self) -> Self {
        f64::max(self, other)
    }
    #[inline]
    fn min(self, other: Self) -> Self {
        f64::min(self, other)
    }
}

/// A value together with one directional derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual<T> {
    pub val: T,
    pub dot: T,
}

impl<T: Scalar> Dual<T> {
    #[inline]
    pub fn new(val: T, dot: T) -> Self {
        Dual { val, dot }
    }

    /// Lift a value with zero tangent.
    #[inline]
    pub fn lift(val: T) -> Self {
        Dual {
            val,
            dot: T::constant(0.0),
        }
    }

    /// Lift a value with unit tangent (the seeded variable).
    #[inline]
    pub fn seed(val: T) -> Self {
        Dual {
            val,
            dot: T::constant(1.0),
        }
    }
}

impl<T: Scalar> Add for Dual<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Dual::new(self.val + o.val, self.dot + o.dot)
    }
}

impl<T: Scalar> Sub for Dual<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Dual::new(self.val - o.val, self.dot - o.dot)
    }
}

impl<T: Scalar> Mul for Dual<T> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Dual::new(self.val * o.val, self.dot * o.val + self.val * o.dot)
    }
}

impl<T: Scalar> Div for Dual<T> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let v = self.val / o.val;
        Dual::new(v, (self.dot - v * o.dot) / o.val)
    }
}

impl<T: Scalar> Neg for Dual<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Dual::new(-self.val, -self.dot)
    }
}

impl<T: Scalar> Scalar for Dual<T> {
    #[inline]
    fn constant(c: f64) -> Self {
        Dual::lift(T::constant(c))
    }

    #[inline]
    fn value(self) -> f64 {
        self.val.value()
    }

    #[inline]
    fn exp(self) -> Self {
        let e = self.val.exp();
        Dual::new(e, e * self.dot)
    }

    #[inline]
    fn ln(self) -> Self {
        Dual::new(self.val.ln(), self.dot / self.val)
    }

    #[inline]
    fn sin(self) -> Self {
        Dual::new(self.val.sin(), self.val.cos() * self.dot)
    }

    #[inline]
    fn cos(self) -> Self {
        Dual::new(self.val.cos(), -(self.val.sin() * self.dot))
    }

    #[inline]
    fn sqrt(self) -> Self {
        let r = self.val.sqrt();
        Dual::new(r, self.dot / (T::constant(2.0) * r))
    }

    #[inline]
    fn tanh(self) -> Self {
        let th = self.val.tanh();
        Dual::new(th, (T::constant(1.0) - th * th) * self.dot)
    }

    #[inline]
    fn abs(self) -> Self {
        if self.val.value() < 0.0 {
            -self
        } else {
            self
        }
    }

    #[inline]
    fn powi(self, n: i32) -> Self {
        pow_by_mul(self, n)
    }

    #[inline]
    fn powf(self, e: Self) -> Self {
        (e * self.ln()).exp()
    }

    #[inline]
    fn max(self, other: Self) -> Self {
        if self.val.value() >= other.val.value() {
            self
        } else {
            other
        }
    }

    #[inline]
    fn min(self, other: Self) -> Self {
        if self.val.value() <= other.val.value() {
            self
        } else {
            other
        }
    }
}

/// `x^n` by repeated multiplication, so dual tangents stay exact products.
fn pow_by_mul<S: Scalar>(x: S, n: i32) -> S {
    if n == 0 {
        return S::constant(1.0);
    }
    let mut acc = x;
    for _ in 1..n.unsigned_abs() {
        acc = acc * x;
    }
    if n < 0 {
        S::constant(1.0) / acc
    } else {
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type D1 = Dual<f64>;
    type D2 = Dual<Dual<f64>>;

    #[test]
    fn first_derivative_of_exp() {
        let x = D1::seed(1.0);
        let y = x.exp();
        assert!((y.val - 1.0f64.exp()).abs() < 1e-15);
        assert!((y.dot - 1.0f64.exp()).abs() < 1e-15);
    }

    #[test]
    fn nested_duals_give_second_derivative() {
        // f(x) = x^3: f''(2) = 12.
        let x = D2::new(Dual::seed(2.0), Dual::lift(1.0));
        let y = x * x * x;
        assert!((y.dot.dot - 12.0).abs() < 1e-12);
    }

    #[test]
    fn powi_matches_repeated_multiplication_and_negative_powers() {
        let x = D1::seed(3.0);
        let y = x.powi(4);
        assert!((y.val - 81.0).abs() < 1e-12);
        assert!((y.dot - 108.0).abs() < 1e-12);
        let z = x.powi(-2);
        assert!((z.val - 1.0 / 9.0).abs() < 1e-15);
        assert!((z.dot - (-2.0 / 27.0)).abs() < 1e-15);
    }

    #[test]
    fn quotient_rule() {
        // f(x) = x / (1 + x): f'(x) = 1/(1+x)^2.
        let x = D1::seed(2.0);
        let y = x / (D1::constant(1.0) + x);
        assert!((y.dot - 1.0 / 9.0).abs() < 1e-15);
    }
}
