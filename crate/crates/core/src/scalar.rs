//! Scalar abstraction shared by the evaluation and ground-truth code.
//!
//! Float-only code (the network, the autodiff tape, the optimizer) is generic
//! over [`num_traits::Float`]. Code that only needs field arithmetic and an
//! ordering (Kaplan-Meier weights, Brier scores, the chain dynamic program)
//! is generic over [`Scalar`], which is also implemented for exact rationals so
//! hand-computed fixtures can be reproduced without rounding.

use std::fmt::Debug;

use num_rational::Ratio;
use num_traits::{Float, Num};

/// Field-like number with an ordering and lossy conversions to and from `f64`.
pub trait Scalar: Num + Clone + PartialOrd + Debug + Send + Sync {
    /// Conversion from a float. Exact for rationals when `v` is dyadic.
    fn from_f64(v: f64) -> Self;

    fn to_f64(&self) -> f64;

    fn from_usize(n: usize) -> Self;

    /// Square root when it is representable. Floats always return `Some` for
    /// non-negative input; rationals only for perfect squares.
    fn sqrt_opt(&self) -> Option<Self>;
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn from_usize(n: usize) -> Self {
        n as f64
    }

    fn sqrt_opt(&self) -> Option<Self> {
        (*self >= 0.0).then(|| Float::sqrt(*self))
    }
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }

    fn to_f64(&self) -> f64 {
        f64::from(*self)
    }

    fn from_usize(n: usize) -> Self {
        n as f32
    }

    fn sqrt_opt(&self) -> Option<Self> {
        (*self >= 0.0).then(|| Float::sqrt(*self))
    }
}

macro_rules! impl_rational_scalar {
    ($int:ty) => {
        impl Scalar for Ratio<$int> {
            fn from_f64(v: f64) -> Self {
                // Exact: every finite f64 is m * 2^e.
                assert!(v.is_finite(), "cannot represent {v} as a rational");
                if v == 0.0 {
                    return Ratio::from_integer(0);
                }
                let mut mant = v;
                let mut den: $int = 1;
                while mant.fract() != 0.0 {
                    mant *= 2.0;
                    den = den.checked_mul(2).expect("rational denominator overflow");
                }
                Ratio::new(mant as $int, den)
            }

            fn to_f64(&self) -> f64 {
                *self.numer() as f64 / *self.denom() as f64
            }

            fn from_usize(n: usize) -> Self {
                Ratio::from_integer(n as $int)
            }

            fn sqrt_opt(&self) -> Option<Self> {
                if *self.numer() < 0 {
                    return None;
                }
                let n = isqrt(*self.numer() as u128)?;
                let d = isqrt(*self.denom() as u128)?;
                Some(Ratio::new(n as $int, d as $int))
            }
        }
    };
}

impl_rational_scalar!(i64);
impl_rational_scalar!(i128);

/// Integer square root, `None` unless `v` is a perfect square.
fn isqrt(v: u128) -> Option<u128> {
    let mut r = (v as f64).sqrt() as u128;
    while r * r > v {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= v {
        r += 1;
    }
    (r * r == v).then_some(r)
}
