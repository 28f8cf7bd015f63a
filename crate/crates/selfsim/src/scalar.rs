//! Scalar abstraction for all numeric kernels.
//!
//! Every algorithm in this crate is generic over a floating-point scalar.
//! The concrete type fixes the rounding model: certified interval endpoints
//! are inflated by [`Scalar::cert_eps`] to absorb accumulated floating-point
//! error, and strict inequalities are enforced through the
//! [`Scalar::strict_shrink`] factor. Both constants are per-type because a
//! slack that is honest for `f64` is below one ulp for `f32`.

use num_traits::{Float, FromPrimitive, ToPrimitive};
use std::fmt::{Debug, Display};

/// Floating-point scalar usable by the certified kernels.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
    /// Absolute inflation applied to every certified interval endpoint.
    ///
    /// Chosen so that the rounding error of the short dot products, norms
    /// and power evaluations feeding an endpoint stays well below it at
    /// desk scale (coordinates of order one).
    fn cert_eps() -> Self;

    /// Multiplicative shrink `(1 - delta)` used to turn a certified
    /// non-strict lower bound into a strict one.
    fn strict_shrink() -> Self;

    /// Entrywise tolerance for orthogonality checks on rotation matrices.
    fn ortho_tol() -> Self;
}

impl Scalar for f64 {
    fn cert_eps() -> Self {
        1e-12
    }
    fn strict_shrink() -> Self {
        1.0 - 1e-9
    }
    fn ortho_tol() -> Self {
        1e-12
    }
}

impl Scalar for f32 {
    fn cert_eps() -> Self {
        1e-5
    }
    fn strict_shrink() -> Self {
        1.0 - 1e-4
    }
    fn ortho_tol() -> Self {
        1e-5
    }
}

/// Converts an `f64` literal into the working scalar type.
///
/// Panics only if the target type cannot represent the value at all, which
/// does not happen for the finite literals used in this crate.
#[inline]
pub fn cst<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("literal not representable in scalar type")
}

/// Inflates a certified lower endpoint downward.
#[inline]
pub fn inflate_down<T: Scalar>(x: T) -> T {
    x - T::cert_eps() * T::one().max(x.abs())
}

/// Inflates a certified upper endpoint upward.
#[inline]
pub fn inflate_up<T: Scalar>(x: T) -> T {
    x + T::cert_eps() * T::one().max(x.abs())
}

/// Compensated (Kahan) accumulator for long sums of small weights.
///
/// Keeps the branch-and-bound mass bookkeeping deterministic and accurate
/// independently of how many nodes are expanded.
#[derive(Debug, Clone, Copy)]
pub struct KahanSum<T> {
    sum: T,
    carry: T,
}

impl<T: Scalar> KahanSum<T> {
    pub fn new() -> Self {
        KahanSum {
            sum: T::zero(),
            carry: T::zero(),
        }
    }

    #[inline]
    pub fn add(&mut self, x: T) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    #[inline]
    pub fn sub(&mut self, x: T) {
        self.add(-x);
    }

    #[inline]
    pub fn value(&self) -> T {
        self.sum
    }
}

impl<T: Scalar> Default for KahanSum<T> {
    fn default() -> Self {
        Self::new()
    }
}
