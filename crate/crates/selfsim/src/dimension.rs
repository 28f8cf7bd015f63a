//! Similarity exponent: the unique root of `sum_i ratio_i^s = 1`.
//!
//! `phi(s) = sum r_i^s` is strictly decreasing with `phi(0) = N > 1` and
//! `phi(s) -> 0`, so the root is unique. It is bracketed by bisection on
//! `[0, log N / log(1/max r)]` and polished by Newton steps.

use crate::error::{Error, Result};
use crate::scalar::{cst, Scalar};
use serde::{Deserialize, Serialize};

/// Default residual tolerance for the `f64` solver.
pub const DEFAULT_DIM_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DimensionResult<T> {
    /// The similarity exponent.
    pub s: T,
    /// `sum r_i^s - 1` at the returned `s`.
    pub residual: T,
    pub iterations: u32,
}

fn check_ratios<T: Scalar>(ratios: &[T]) -> Result<()> {
    if ratios.len() < 2 {
        return Err(Error::Domain(format!(
            "need at least 2 ratios, got {}",
            ratios.len()
        )));
    }
    for &r in ratios {
        if !(r > T::zero() && r < T::one()) {
            return Err(Error::Domain(format!("ratio {r} outside (0, 1)")));
        }
    }
    Ok(())
}

/// `sum_i ratio_i^s - 1`.
pub fn moran_residual<T: Scalar>(ratios: &[T], s: T) -> T {
    ratios
        .iter()
        .fold(T::zero(), |acc, &r| acc + r.powf(s))
        - T::one()
}

/// Derivative `sum_i ratio_i^s ln(ratio_i)` (always negative).
pub fn moran_derivative<T: Scalar>(ratios: &[T], s: T) -> T {
    ratios
        .iter()
        .fold(T::zero(), |acc, &r| acc + r.powf(s) * r.ln())
}

/// Solves the similarity exponent to the requested residual tolerance.
pub fn similarity_dimension<T: Scalar>(ratios: &[T], tol: T) -> Result<DimensionResult<T>> {
    check_ratios(ratios)?;
    if !(tol > T::zero()) {
        return Err(Error::Parameter(format!("tol must be positive, got {tol}")));
    }
    let n = cst::<T>(ratios.len() as f64);
    let r_max = ratios.iter().fold(T::zero(), |a, &b| a.max(b));
    // phi(upper) <= N * r_max^upper = 1, so the root lies in [0, upper].
    let mut lo = T::zero();
    let mut hi = n.ln() / (T::one() / r_max).ln();
    let mut iterations = 0u32;

    // Bisection until the bracket is tight, guaranteeing global convergence.
    let width_goal = T::epsilon() * cst::<T>(64.0) * hi.max(T::one());
    while hi - lo > width_goal && iterations < 20_000 {
        let mid = (lo + hi) * cst::<T>(0.5);
        if mid <= lo || mid >= hi {
            break;
        }
        if moran_residual(ratios, mid) > T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }

    // Newton polish from the midpoint.
    let mut s = (lo + hi) * cst::<T>(0.5);
    for _ in 0..8 {
        let f = moran_residual(ratios, s);
        if f.abs() <= tol {
            break;
        }
        let df = moran_derivative(ratios, s);
        let next = s - f / df;
        if !(next > lo - (hi - lo) && next < hi + (hi - lo)) || !next.is_finite() {
            break;
        }
        s = next;
        iterations += 1;
    }

    let residual = moran_residual(ratios, s);
    if residual.abs() > tol {
        return Err(Error::Precision {
            context: format!("similarity exponent residual {residual}"),
            lo: lo.to_f64().unwrap_or(f64::NAN),
            hi: hi.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(DimensionResult {
        s,
        residual,
        iterations,
    })
}

/// `f64` solver at the default tolerance.
pub fn similarity_dimension_default<T: Scalar>(ratios: &[T]) -> Result<DimensionResult<T>> {
    similarity_dimension(ratios, cst::<T>(DEFAULT_DIM_TOL).max(T::epsilon() * cst::<T>(64.0)))
}

/// First-order sensitivity `ds/dr_i` of the exponent to each ratio,
/// from implicit differentiation of the defining equation.
pub fn dimension_sensitivity<T: Scalar>(ratios: &[T], s: T) -> Vec<T> {
    let dphi_ds = moran_derivative(ratios, s);
    ratios
        .iter()
        .map(|&r| -(s * r.powf(s - T::one())) / dphi_ds)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn cantor_exponent_closed_form() {
        let r = similarity_dimension_default(&[1.0 / 3.0, 1.0 / 3.0]).unwrap();
        assert_abs_diff_eq!(r.s, (2.0f64).ln() / (3.0f64).ln(), epsilon = 1e-12);
        assert!(r.residual.abs() <= 1e-13);
    }

    #[test]
    fn halves_give_exponent_one() {
        let r = similarity_dimension_default(&[0.5f64, 0.5]).unwrap();
        assert_abs_diff_eq!(r.s, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn mixed_ratios_match_quadratic_solution() {
        // (1/2)^s + (1/4)^s = 1 with y = (1/2)^s gives y = (sqrt(5)-1)/2.
        let y = (5.0f64.sqrt() - 1.0) / 2.0;
        let expect = y.ln() / 0.5f64.ln();
        let r = similarity_dimension_default(&[0.5f64, 0.25]).unwrap();
        assert_abs_diff_eq!(r.s, expect, epsilon = 1e-12);
        assert_abs_diff_eq!(r.s, 0.6942419136306174, epsilon = 1e-10);
    }

    #[test]
    fn residual_examples() {
        assert_abs_diff_eq!(moran_residual(&[0.5f64, 0.5], 1.0), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            moran_residual(&[1.0 / 3.0f64, 1.0 / 3.0], 0.0),
            1.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            moran_residual(&[1.0 / 3.0f64, 1.0 / 3.0], 1.0),
            -1.0 / 3.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn domain_and_parameter_errors() {
        assert!(similarity_dimension(&[0.5f64], 1e-12).is_err());
        assert!(similarity_dimension(&[0.5f64, 1.0], 1e-12).is_err());
        assert!(similarity_dimension(&[0.5f64, -0.1], 1e-12).is_err());
        assert!(similarity_dimension(&[0.5f64, 0.5], 0.0).is_err());
    }

    #[test]
    fn root_is_bracketed_by_sign_change() {
        let ratios = [0.5f64, 0.25, 0.125];
        let r = similarity_dimension_default(&ratios).unwrap();
        let lo = moran_residual(&ratios, r.s - 1e-9);
        let hi = moran_residual(&ratios, r.s + 1e-9);
        assert!(lo > 0.0 && hi < 0.0 || r.residual.abs() <= 1e-13);
    }

    #[test]
    fn sensitivity_matches_finite_differences() {
        let ratios = [0.3f64, 0.2, 0.15];
        let s = similarity_dimension_default(&ratios).unwrap().s;
        let grad = dimension_sensitivity(&ratios, s);
        let h = 1e-7;
        for i in 0..ratios.len() {
            let mut up = ratios;
            up[i] += h;
            let mut dn = ratios;
            dn[i] -= h;
            let fd = (similarity_dimension_default(&up).unwrap().s
                - similarity_dimension_default(&dn).unwrap().s)
                / (2.0 * h);
            assert_abs_diff_eq!(grad[i], fd, epsilon = 1e-5 * grad[i].abs().max(1.0));
        }
    }

    proptest! {
        #[test]
        fn residual_is_strictly_decreasing(
            ratios in proptest::collection::vec(0.05f64..0.9, 2..6),
            s1 in 0.0f64..3.0,
            ds in 0.01f64..1.0,
        ) {
            let s2 = s1 + ds;
            prop_assert!(moran_residual(&ratios, s1) > moran_residual(&ratios, s2));
        }

        #[test]
        fn equal_ratio_scale_coherence(r in 0.05f64..0.45, n in 2usize..6) {
            let ratios = vec![r; n];
            let got = similarity_dimension_default(&ratios).unwrap().s;
            let closed = (n as f64).ln() / (1.0 / r).ln();
            prop_assert!((got - closed).abs() <= 1e-10);
        }
    }
}
