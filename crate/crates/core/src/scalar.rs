//! Scalar abstraction shared by every numerical module.
//!
//! All model code is written against [`Real`] so the same routines run in
//! `f64` (the default, see the aliases at the crate root) or `f32`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar usable throughout the crate.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Default + Debug + Display + Sum + Send + Sync + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an `f64` literal into the working scalar.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal representable in scalar type")
}

/// Lossy widening used for diagnostics and special functions.
#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Standard normal density.
#[inline]
pub fn norm_pdf<T: Real>(x: T) -> T {
    (-(x * x) / lit(2.0)).exp() / (T::PI() + T::PI()).sqrt()
}

/// Standard normal distribution function, evaluated in `f64` via `erfc`.
#[inline]
pub fn norm_cdf<T: Real>(x: T) -> T {
    let v = 0.5 * libm::erfc(-to_f64(x) / std::f64::consts::SQRT_2);
    lit(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_symmetry_and_known_values() {
        assert_eq!(norm_cdf(0.0_f64), 0.5);
        assert!((norm_cdf(1.96_f64) - 0.975_002_104_851_780).abs() < 1e-14);
        for &x in &[0.1, 0.7, 2.5, 6.0] {
            assert!((norm_cdf(x) + norm_cdf(-x) - 1.0_f64).abs() < 1e-15);
        }
        assert!((norm_pdf(0.0_f64) - 0.398_942_280_401_432_7).abs() < 1e-16);
        assert!((norm_cdf(1.0_f32) - 0.841_344_7).abs() < 1e-6);
    }
}
