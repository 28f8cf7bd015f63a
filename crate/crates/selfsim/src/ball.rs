//! Closed balls in the ambient space.

use crate::error::{Error, Result};
use crate::linalg::dist;
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};

/// A closed ball `{ y : |y - center| <= radius }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball<T> {
    pub center: Vec<T>,
    pub radius: T,
}

impl<T: Scalar> Ball<T> {
    pub fn new(center: Vec<T>, radius: T) -> Result<Self> {
        if !(radius >= T::zero()) || !radius.is_finite() {
            return Err(Error::Parameter(format!(
                "ball radius must be finite and nonnegative, got {radius}"
            )));
        }
        Ok(Ball { center, radius })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn contains_point(&self, y: &[T]) -> bool {
        dist(&self.center, y) <= self.radius
    }

    /// `other` lies inside `self` (closed-in-closed containment).
    pub fn contains_ball(&self, other: &Ball<T>) -> bool {
        dist(&self.center, &other.center) + other.radius <= self.radius
    }
}
