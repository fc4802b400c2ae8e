//! Scalar abstraction for probabilities and weights.
//!
//! Everything that only adds, multiplies, and divides probabilities is
//! generic over [`Scalar`], so the same code runs on `f64`/`f32` and, in
//! tests, on `num_rational::BigRational` for exact arithmetic.

use std::fmt::Debug;

use num_traits::{FromPrimitive, Num, ToPrimitive};

/// Field-like scalar used for probabilities, weights, and counts.
pub trait Scalar: Num + FromPrimitive + ToPrimitive + Clone + PartialOrd + Debug {
    /// Exact conversion of a dataset count.
    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("count representable in scalar type")
    }

    /// Lossy view as `f64`, for logarithms and reporting.
    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where T: Num + FromPrimitive + ToPrimitive + Clone + PartialOrd + Debug {}
