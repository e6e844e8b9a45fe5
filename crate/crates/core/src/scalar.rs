//! Scalar abstraction shared by parameters, scoring and the trainers.

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point type the factor models are generic over.
///
/// Implemented for `f32` and `f64`. `Display`/`FromStr` are required so that
/// checkpoints can be written as text and read back bit-exactly.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + FromStr + Default + Send + Sync + 'static
{
    /// Short tag stored in checkpoints.
    const NAME: &'static str;

    fn of(value: f64) -> Self {
        Self::from_f64(value).expect("f64 is representable in every scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";
}

/// Logistic function, evaluated on the branch that cannot overflow.
#[inline]
pub fn sigmoid<F: Scalar>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let z = x.exp();
        z / (F::one() + z)
    }
}

/// `-ln σ(x)`, i.e. `softplus(-x)`, stable for large `|x|`.
#[inline]
pub fn neg_log_sigmoid<F: Scalar>(x: F) -> F {
    let zero = F::zero();
    (-x).max(zero) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(F::zero(), |acc, (&x, &y)| acc + x * y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_complement_identity() {
        let mut r = -30.0f64;
        while r <= 30.0 {
            let lhs = 1.0 - sigmoid(r);
            let rhs = sigmoid(-r);
            assert!((lhs - rhs).abs() <= 1e-12, "r={r}: {lhs} vs {rhs}");
            r += 0.01;
        }
    }

    #[test]
    fn sigmoid_does_not_overflow() {
        assert_eq!(sigmoid(1e4f64), 1.0);
        assert_eq!(sigmoid(-1e4f64), 0.0);
        assert!(sigmoid(-1e4f32).is_finite());
    }

    #[test]
    fn neg_log_sigmoid_matches_naive_in_safe_range() {
        for &x in &[-20.0f64, -3.0, -0.5, 0.0, 0.5, 3.0, 20.0] {
            let naive = -(1.0 / (1.0 + (-x).exp())).ln();
            assert!((neg_log_sigmoid(x) - naive).abs() < 1e-12);
        }
        assert!((neg_log_sigmoid(-1000.0f64) - 1000.0).abs() < 1e-9);
        assert!(neg_log_sigmoid(1000.0f64) >= 0.0);
    }
}
