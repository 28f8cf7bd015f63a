//! Certified numerics for self-similar sets: similarity exponents, strong
//! separation certificates, two-sided bounds on the natural self-similar
//! measure, and certified global optimization of reciprocal densities,
//! giving rigorous brackets for packing and (1-D) Hausdorff measures.
//!
//! Everything is generic over the working scalar (`f64` by default; see the
//! type aliases at the crate root). All brackets are sound: floating-point
//! rounding is absorbed by a per-type endpoint inflation rather than full
//! interval arithmetic.

// `!(x >= c)` rejects NaN along with out-of-range values; partial_cmp would
// obscure that.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ball;
pub mod continuity;
pub mod dimension;
pub mod error;
pub mod hausdorff;
pub mod ifs;
mod linalg;
pub mod measure;
pub mod packing;
mod pq;
pub mod scalar;
pub mod schema;
pub mod separation;
pub mod similitude;
pub mod word;

pub use ball::Ball;
pub use continuity::{
    continuity_sweep, modulus_report, perturb, ModulusReport, PerturbMode, SweepConfig,
    SweepOutput, SweepRecord,
};
pub use dimension::{similarity_dimension, similarity_dimension_default, DimensionResult};
pub use error::{Error, Result};
pub use hausdorff::{hausdorff_measure_1d, hausdorff_upper_bound_balls, HausdorffParams};
pub use ifs::{AmbientBox, CylinderNode, Ifs};
pub use measure::{
    ball_measure, blowup, box_measure, cylinder_union_identity_check, interval_measure,
    lambda_floor, MeasureBound,
};
pub use packing::{
    check_density_theorem, density_bounds, density_scan, fold_to_window, packing_measure,
    packing_measure_with, DensityResult, PackingParams, SearchCell,
};
pub use scalar::Scalar;
pub use schema::IfsFile;
pub use separation::{certify_ssc, default_gap_tol, Location, SeparationCert, SoscOpenSet};
pub use similitude::Similitude;
pub use word::Word;

/// Concrete `f64` aliases (the tested, default configuration).
pub type BallF64 = Ball<f64>;
pub type IfsF64 = Ifs<f64>;
pub type SimilitudeF64 = Similitude<f64>;
pub type DimensionResultF64 = DimensionResult<f64>;
pub type SeparationCertF64 = SeparationCert<f64>;
pub type MeasureBoundF64 = MeasureBound<f64>;
pub type DensityResultF64 = DensityResult<f64>;

/// Concrete `f32` aliases (looser certified inflation; see `Scalar`).
pub type BallF32 = Ball<f32>;
pub type IfsF32 = Ifs<f32>;
pub type SimilitudeF32 = Similitude<f32>;
