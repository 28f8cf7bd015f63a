//! Small dense vector/matrix helpers for ambient dimensions 1..=3 (any d works,
//! but everything is O(d^3) with tiny constants, tuned for desk-scale d).
//!
//! Matrices are row-major `Vec<T>` of length `d*d`. No external linear
//! algebra dependency: the only solve needed is a d-by-d system for the
//! fixed point of a contraction.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

#[inline]
pub fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

#[inline]
pub fn dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| {
            let d = x - y;
            acc + d * d
        })
        .sqrt()
}

pub fn sub<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

/// Row-major d x d identity.
pub fn identity<T: Scalar>(d: usize) -> Vec<T> {
    let mut m = vec![T::zero(); d * d];
    for i in 0..d {
        m[i * d + i] = T::one();
    }
    m
}

/// `m * v` for row-major `m`.
pub fn mat_vec<T: Scalar>(m: &[T], v: &[T], d: usize) -> Vec<T> {
    debug_assert_eq!(m.len(), d * d);
    debug_assert_eq!(v.len(), d);
    (0..d).map(|i| dot(&m[i * d..(i + 1) * d], v)).collect()
}

/// `a * b` for row-major d x d matrices.
pub fn mat_mul<T: Scalar>(a: &[T], b: &[T], d: usize) -> Vec<T> {
    let mut out = vec![T::zero(); d * d];
    for i in 0..d {
        for k in 0..d {
            let aik = a[i * d + k];
            if aik != T::zero() {
                for j in 0..d {
                    out[i * d + j] = out[i * d + j] + aik * b[k * d + j];
                }
            }
        }
    }
    out
}

pub fn transpose<T: Scalar>(m: &[T], d: usize) -> Vec<T> {
    let mut out = vec![T::zero(); d * d];
    for i in 0..d {
        for j in 0..d {
            out[j * d + i] = m[i * d + j];
        }
    }
    out
}

/// Max entrywise deviation of `m^T m` from the identity.
pub fn orthogonality_defect<T: Scalar>(m: &[T], d: usize) -> T {
    let mtm = mat_mul(&transpose(m, d), m, d);
    let mut worst = T::zero();
    for i in 0..d {
        for j in 0..d {
            let target = if i == j { T::one() } else { T::zero() };
            worst = worst.max((mtm[i * d + j] - target).abs());
        }
    }
    worst
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
///
/// `a` is consumed as a workspace copy. Fails only on a (numerically)
/// singular matrix, which for `I - r O` with `r < 1` cannot happen.
pub fn solve<T: Scalar>(a: &[T], b: &[T], d: usize) -> Result<Vec<T>> {
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    for col in 0..d {
        let mut piv = col;
        let mut best = m[col * d + col].abs();
        for row in col + 1..d {
            let v = m[row * d + col].abs();
            if v > best {
                best = v;
                piv = row;
            }
        }
        if best == T::zero() {
            return Err(Error::Domain("singular linear system".into()));
        }
        if piv != col {
            for j in 0..d {
                m.swap(col * d + j, piv * d + j);
            }
            x.swap(col, piv);
        }
        let inv = T::one() / m[col * d + col];
        for row in col + 1..d {
            let f = m[row * d + col] * inv;
            if f != T::zero() {
                for j in col..d {
                    m[row * d + j] = m[row * d + j] - f * m[col * d + j];
                }
                x[row] = x[row] - f * x[col];
            }
        }
    }
    for col in (0..d).rev() {
        let mut v = x[col];
        for j in col + 1..d {
            v = v - m[col * d + j] * x[j];
        }
        x[col] = v / m[col * d + col];
    }
    Ok(x)
}

/// 2-D rotation matrix for the given angle.
pub fn rotation_2d<T: Scalar>(angle: T) -> Vec<T> {
    let (sin, cos) = angle.sin_cos();
    vec![cos, -sin, sin, cos]
}
