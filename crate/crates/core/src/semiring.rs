//! Commutative semirings for weighted model counting.
//!
//! `wmc` over `f64` gives probabilities, over `BigUint` exact model counts,
//! and over [`ShiftPolynomial`] the full distribution of a signed count of
//! tracked variables in a single pass.

use std::collections::BTreeMap;
use std::fmt::Debug;

use num_bigint::BigUint;

/// A commutative semiring: `(plus, zero)` and `(times, one)` monoids with
/// distributivity. `times` by `zero` must annihilate.
pub trait Semiring: Clone + Debug + PartialEq {
    fn zero() -> Self;
    fn one() -> Self;
    fn plus(&self, other: &Self) -> Self;
    fn times(&self, other: &Self) -> Self;

    fn is_zero(&self) -> bool {
        *self == Self::zero()
    }
}

macro_rules! numeric_semiring {
    ($($t:ty),*) => {$(
        impl Semiring for $t {
            fn zero() -> Self { num_traits::Zero::zero() }
            fn one() -> Self { num_traits::One::one() }
            fn plus(&self, other: &Self) -> Self { self.clone() + other.clone() }
            fn times(&self, other: &Self) -> Self { self.clone() * other.clone() }
        }
    )*};
}

numeric_semiring!(f32, f64, u64, BigUint);

impl Semiring for num_rational::BigRational {
    fn zero() -> Self {
        num_traits::Zero::zero()
    }
    fn one() -> Self {
        num_traits::One::one()
    }
    fn plus(&self, other: &Self) -> Self {
        self + other
    }
    fn times(&self, other: &Self) -> Self {
        self * other
    }
}

/// Polynomial in one formal shift variable with integer exponents of either
/// sign and coefficients in a base semiring.
///
/// Addition is coefficient-wise, multiplication is convolution, the
/// multiplicative identity is `{0 -> 1}`. Exponents track a signed count of
/// designated circuit variables, so the support stays within the number of
/// tracked variables.
#[derive(Clone, Debug, PartialEq)]
pub struct ShiftPolynomial<T> {
    coeffs: BTreeMap<i32, T>,
}

impl<T: Semiring> ShiftPolynomial<T> {
    /// The zero polynomial (empty support).
    pub fn new() -> Self {
        ShiftPolynomial {
            coeffs: BTreeMap::new(),
        }
    }

    /// Constant polynomial `{0 -> c}`.
    pub fn constant(c: T) -> Self {
        Self::monomial(0, c)
    }

    /// Single-term polynomial `{shift -> c}`.
    pub fn monomial(shift: i32, c: T) -> Self {
        let mut coeffs = BTreeMap::new();
        if !c.is_zero() {
            coeffs.insert(shift, c);
        }
        ShiftPolynomial { coeffs }
    }

    /// Coefficient at offset `d` (zero when absent).
    pub fn coeff(&self, d: i32) -> T {
        self.coeffs.get(&d).cloned().unwrap_or_else(T::zero)
    }

    /// Non-zero terms in increasing offset order.
    pub fn terms(&self) -> impl Iterator<Item = (i32, &T)> {
        self.coeffs.iter().map(|(d, c)| (*d, c))
    }

    pub fn support_min(&self) -> Option<i32> {
        self.coeffs.keys().next().copied()
    }

    pub fn support_max(&self) -> Option<i32> {
        self.coeffs.keys().next_back().copied()
    }

    /// Sum of all coefficients: the projection back to the base semiring.
    pub fn total(&self) -> T {
        self.coeffs
            .values()
            .fold(T::zero(), |acc, c| acc.plus(c))
    }

    /// Sum of coefficients at offsets for which `pred` holds.
    pub fn total_where(&self, mut pred: impl FnMut(i32) -> bool) -> T {
        self.coeffs
            .iter()
            .filter(|(d, _)| pred(**d))
            .fold(T::zero(), |acc, (_, c)| acc.plus(c))
    }
}

impl<T: Semiring> Default for ShiftPolynomial<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Semiring> Semiring for ShiftPolynomial<T> {
    fn zero() -> Self {
        Self::new()
    }

    fn one() -> Self {
        Self::constant(T::one())
    }

    fn plus(&self, other: &Self) -> Self {
        let mut coeffs = self.coeffs.clone();
        for (d, c) in &other.coeffs {
            let entry = coeffs.entry(*d).or_insert_with(T::zero);
            *entry = entry.plus(c);
        }
        coeffs.retain(|_, c| !c.is_zero());
        ShiftPolynomial { coeffs }
    }

    fn times(&self, other: &Self) -> Self {
        let mut coeffs: BTreeMap<i32, T> = BTreeMap::new();
        for (da, ca) in &self.coeffs {
            for (db, cb) in &other.coeffs {
                let term = ca.times(cb);
                if term.is_zero() {
                    continue;
                }
                let entry = coeffs.entry(da + db).or_insert_with(T::zero);
                *entry = entry.plus(&term);
            }
        }
        coeffs.retain(|_, c| !c.is_zero());
        ShiftPolynomial { coeffs }
    }

    fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type P = ShiftPolynomial<f64>;

    #[test]
    fn monomial_product_adds_shifts() {
        let a = P::monomial(1, 0.5);
        let b = P::monomial(-2, 4.0);
        let p = a.times(&b);
        assert_eq!(p.coeff(-1), 2.0);
        assert_eq!(p.terms().count(), 1);
    }

    #[test]
    fn identity_and_zero() {
        let a = P::monomial(3, 0.25).plus(&P::constant(0.5));
        assert_eq!(a.times(&P::one()), a);
        assert!(a.times(&P::zero()).is_zero());
        assert_eq!(a.plus(&P::zero()), a);
    }

    #[test]
    fn binomial_square() {
        // (z^0 * 0.5 + z^1 * 0.5)^2 = 0.25 + 0.5 z + 0.25 z^2
        let coin = P::constant(0.5).plus(&P::monomial(1, 0.5));
        let sq = coin.times(&coin);
        assert_eq!(sq.coeff(0), 0.25);
        assert_eq!(sq.coeff(1), 0.5);
        assert_eq!(sq.coeff(2), 0.25);
        assert_eq!(sq.total(), 1.0);
    }

    #[test]
    fn total_where_splits_support() {
        let p = P::monomial(-1, 0.25)
            .plus(&P::constant(0.25))
            .plus(&P::monomial(2, 0.5));
        assert_eq!(p.total_where(|d| d > 0), 0.5);
        assert_eq!(p.total_where(|d| d <= 0), 0.5);
        assert_eq!(p.support_min(), Some(-1));
        assert_eq!(p.support_max(), Some(2));
    }
}
