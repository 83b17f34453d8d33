//! Scalar traits the rest of the crate is generic over.
//!
//! Convolution, cropping and the explicit matrix need only ring arithmetic,
//! so they accept any [`Scalar`], including exact rationals. The solvers,
//! metrics and simulation need transcendental functions and an ordering with
//! a division guard, so they require [`Real`].

use std::fmt::Debug;
use std::iter::Sum;

use num_rational::Ratio;
use num_traits::{Float, FromPrimitive, Num, ToPrimitive};

/// Ring-like element type for tensors and kernels.
pub trait Scalar: Num + Copy + PartialOrd + Debug + Send + Sync + 'static {
    /// False for NaN and infinities; exact types are always finite.
    fn is_finite_value(self) -> bool;
}

/// Floating-point element type: f32 or f64.
pub trait Real: Scalar + Float + FromPrimitive + ToPrimitive + Sum + std::fmt::Display {
    /// Denominators smaller than this in magnitude divide to zero.
    fn div_epsilon() -> Self;

    /// Lossless for f64, rounding for f32.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 converts to every Real")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Real converts to f64")
    }
}

impl Scalar for f64 {
    #[inline]
    fn is_finite_value(self) -> bool {
        self.is_finite()
    }
}

impl Scalar for f32 {
    #[inline]
    fn is_finite_value(self) -> bool {
        self.is_finite()
    }
}

impl Scalar for Ratio<i64> {
    #[inline]
    fn is_finite_value(self) -> bool {
        true
    }
}

impl Scalar for i64 {
    #[inline]
    fn is_finite_value(self) -> bool {
        true
    }
}

impl Real for f64 {
    fn div_epsilon() -> Self {
        1e-12
    }
}

impl Real for f32 {
    fn div_epsilon() -> Self {
        1e-12
    }
}
