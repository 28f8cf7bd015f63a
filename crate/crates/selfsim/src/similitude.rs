//! Similarity maps `f(x) = ratio * (rotation * x) + translation`.

use crate::ball::Ball;
use crate::error::{Error, Result};
use crate::linalg::{self, mat_mul, mat_vec, transpose};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};

/// A similarity map of `R^d`: every distance is scaled by exactly `ratio`.
///
/// The type admits any positive ratio so that identities (empty-word
/// compositions, ratio 1) and expanding conjugations exist; membership in
/// an iterated function system additionally requires `ratio < 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Similitude<T> {
    ratio: T,
    /// Row-major d x d orthogonal matrix.
    rotation: Vec<T>,
    translation: Vec<T>,
}

impl<T: Scalar> Similitude<T> {
    /// Validates ratio positivity, shape, and orthogonality of the rotation.
    pub fn new(ratio: T, rotation: Vec<T>, translation: Vec<T>) -> Result<Self> {
        let d = translation.len();
        if d == 0 {
            return Err(Error::InvalidSimilitude("empty translation".into()));
        }
        if !(ratio > T::zero()) || !ratio.is_finite() {
            return Err(Error::InvalidSimilitude(format!(
                "ratio must be positive and finite, got {ratio}"
            )));
        }
        if rotation.len() != d * d {
            return Err(Error::InvalidSimilitude(format!(
                "rotation has {} entries, expected {}",
                rotation.len(),
                d * d
            )));
        }
        let defect = linalg::orthogonality_defect(&rotation, d);
        if !(defect <= T::ortho_tol()) {
            return Err(Error::InvalidSimilitude(format!(
                "rotation is not orthogonal (defect {defect})"
            )));
        }
        Ok(Similitude {
            ratio,
            rotation,
            translation,
        })
    }

    /// Identity map of `R^d`.
    pub fn identity(d: usize) -> Self {
        Similitude {
            ratio: T::one(),
            rotation: linalg::identity(d),
            translation: vec![T::zero(); d],
        }
    }

    /// 1-D constructor from sign and offset: `x -> ratio * sign * x + t`.
    pub fn line(ratio: T, sign: T, t: T) -> Result<Self> {
        Similitude::new(ratio, vec![sign], vec![t])
    }

    pub fn dim(&self) -> usize {
        self.translation.len()
    }

    pub fn ratio(&self) -> T {
        self.ratio
    }

    pub fn rotation(&self) -> &[T] {
        &self.rotation
    }

    pub fn translation(&self) -> &[T] {
        &self.translation
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let d = self.dim();
        let rx = mat_vec(&self.rotation, x, d);
        (0..d)
            .map(|i| self.ratio * rx[i] + self.translation[i])
            .collect()
    }

    /// Inverse map `x -> rotation^T (x - translation) / ratio`.
    pub fn apply_inverse(&self, y: &[T]) -> Vec<T> {
        let d = self.dim();
        let shifted: Vec<T> = (0..d).map(|i| y[i] - self.translation[i]).collect();
        let rt = transpose(&self.rotation, d);
        mat_vec(&rt, &shifted, d)
            .into_iter()
            .map(|v| v / self.ratio)
            .collect()
    }

    /// Composition `self ∘ other` (apply `other` first).
    pub fn compose(&self, other: &Similitude<T>) -> Similitude<T> {
        let d = self.dim();
        debug_assert_eq!(d, other.dim());
        Similitude {
            ratio: self.ratio * other.ratio,
            rotation: mat_mul(&self.rotation, &other.rotation, d),
            translation: self.apply(&other.translation),
        }
    }

    /// Image of a ball: similitudes map balls to balls.
    pub fn map_ball(&self, ball: &Ball<T>) -> Ball<T> {
        Ball {
            center: self.apply(&ball.center),
            radius: self.ratio * ball.radius,
        }
    }

    /// Preimage of a ball.
    pub fn unmap_ball(&self, ball: &Ball<T>) -> Ball<T> {
        Ball {
            center: self.apply_inverse(&ball.center),
            radius: ball.radius / self.ratio,
        }
    }

    /// Fixed point, the solution of `(I - ratio * rotation) x = translation`.
    ///
    /// Exists and is unique for `ratio < 1`.
    pub fn fixed_point(&self) -> Result<Vec<T>> {
        let d = self.dim();
        let mut a = linalg::identity::<T>(d);
        for (i, r) in self.rotation.iter().enumerate() {
            a[i] = a[i] - self.ratio * *r;
        }
        linalg::solve(&a, &self.translation, d)
    }

    /// Conjugation `phi ∘ self ∘ phi^{-1}` by another similitude.
    pub fn conjugate(&self, phi: &Similitude<T>) -> Similitude<T> {
        let d = self.dim();
        // phi(x) = c Q x + b, self(x) = r O x + t.
        // phi ∘ self ∘ phi^{-1} has ratio r, rotation Q O Q^T,
        // translation c Q t + b - r (Q O Q^T) b.
        let q = &phi.rotation;
        let qt = transpose(q, d);
        let rot = mat_mul(&mat_mul(q, &self.rotation, d), &qt, d);
        let qt_term = mat_vec(q, &self.translation, d);
        let rot_b = mat_vec(&rot, &phi.translation, d);
        let translation: Vec<T> = (0..d)
            .map(|i| phi.ratio * qt_term[i] + phi.translation[i] - self.ratio * rot_b[i])
            .collect();
        Similitude {
            ratio: self.ratio,
            rotation: rot,
            translation,
        }
    }
}
