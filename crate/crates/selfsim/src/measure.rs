//! Two-sided bounds on the natural self-similar measure.
//!
//! The attractor carries the unique probability measure with
//! `λ = Σ_i r_i^s · λ ∘ f_i^{-1}`, so every cylinder has exact mass
//! `r_w^s`. A query set is measured by branch-and-bound over the cylinder
//! tree: a cylinder whose hull ball lies inside the query contributes its
//! full weight to both bounds, a disjoint one contributes nothing, and
//! straddling cylinders are split until the unresolved mass drops below
//! the tolerance. Closed-ball query semantics; sphere mass is null, so
//! open/closed discrepancies are absorbed by the bound width.

use crate::ball::Ball;
use crate::error::{Error, Result};
use crate::ifs::{CylinderNode, Ifs, DEFAULT_ENUM_CAP};
use crate::linalg::dist;
use crate::pq::MaxEntry;
use crate::scalar::{cst, inflate_down, inflate_up, KahanSum, Scalar};
use crate::separation::{SeparationCert, SoscOpenSet};
use crate::similitude::Similitude;
use crate::word::{words_of_length, Word};
use serde::{Deserialize, Serialize};
use std::collections::BinaryHeap;

/// Default unresolved-mass tolerance.
pub const DEFAULT_MEASURE_TOL: f64 = 1e-7;
/// Default cylinder depth cap.
pub const DEFAULT_MEASURE_DEPTH_CAP: usize = 60;
/// Straddlers lighter than `tol / LEAF_BUDGET` are frozen into the upper
/// bound instead of being refined further.
const LEAF_BUDGET: f64 = 65536.0;

/// Certified bracket `[lo, hi]` of the measure of a query set.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MeasureBound<T> {
    pub lo: T,
    pub hi: T,
    pub depth_used: usize,
    pub leaves: usize,
}

impl<T: Scalar> MeasureBound<T> {
    pub fn width(&self) -> T {
        self.hi - self.lo
    }

    /// True when the bracket met the requested tolerance.
    pub fn meets(&self, tol: T) -> bool {
        self.width() <= tol + T::cert_eps() * cst::<T>(4.0)
    }

    pub fn overlaps(&self, other: &MeasureBound<T>) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }
}

/// Query region for the measure engine.
#[derive(Debug, Clone)]
pub enum Query<'q, T> {
    Ball { center: &'q [T], radius: T },
    Box { lo: &'q [T], hi: &'q [T] },
}

enum Class {
    Inside,
    Outside,
    Straddle,
}

impl<'q, T: Scalar> Query<'q, T> {
    /// Classifies a hull ball against the query. `Inside`/`Outside` are
    /// certified; everything undetermined is a straddler. The box test
    /// separates per axis, which in dimension one is exact.
    fn classify(&self, center: &[T], radius: T) -> Class {
        match self {
            Query::Ball {
                center: qc,
                radius: qr,
            } => {
                let d = dist(center, qc);
                if d + radius <= *qr {
                    Class::Inside
                } else if d - radius > *qr {
                    Class::Outside
                } else {
                    Class::Straddle
                }
            }
            Query::Box { lo, hi } => {
                let mut inside = true;
                for k in 0..center.len() {
                    if center[k] + radius < lo[k] || center[k] - radius > hi[k] {
                        return Class::Outside;
                    }
                    if !(center[k] - radius >= lo[k] && center[k] + radius <= hi[k]) {
                        inside = false;
                    }
                }
                if inside {
                    Class::Inside
                } else {
                    Class::Straddle
                }
            }
        }
    }
}

/// Cylinder node in scale/offset form: the composed map is
/// `x -> scale * (rotation * x) + offset`, with `rotation` tracked only on
/// the general path (axis-aligned systems skip it entirely).
struct MassNode<T> {
    scale: T,
    offset: Vec<T>,
    rotation: Option<Vec<T>>,
    weight: T,
    depth: usize,
}

fn rotation_is_identity<T: Scalar>(rot: &[T], d: usize) -> bool {
    for i in 0..d {
        for j in 0..d {
            let want = if i == j { T::one() } else { T::zero() };
            if rot[i * d + j] != want {
                return false;
            }
        }
    }
    true
}

/// Core engine: measures `query` within the cylinder rooted at `root_map`
/// (the whole attractor for the identity), to unresolved mass `tol`.
fn measure_from<T: Scalar>(
    ifs: &Ifs<T>,
    s: T,
    root_map: Similitude<T>,
    root_depth: usize,
    root_weight: T,
    query: &Query<'_, T>,
    tol: T,
    depth_cap: usize,
) -> MeasureBound<T> {
    let base = ifs.invariant_ball();
    let d = ifs.dim();
    let aligned = ifs
        .maps()
        .iter()
        .all(|f| rotation_is_identity(f.rotation(), d))
        && rotation_is_identity(root_map.rotation(), d);
    // Per-letter ratio, translation, rotation and exact weight factor.
    let letters: Vec<(T, &[T], &[T], T)> = ifs
        .maps()
        .iter()
        .map(|f| (f.ratio(), f.translation(), f.rotation(), f.ratio().powf(s)))
        .collect();

    let mut lo = KahanSum::<T>::new();
    let mut straddle = KahanSum::<T>::new();
    let mut frozen = KahanSum::<T>::new();
    let mut heap: BinaryHeap<MaxEntry<MassNode<T>>> = BinaryHeap::new();
    let mut seq = 0u64;
    let mut leaves = 0usize;
    let mut depth_used = root_depth;
    let weight_cutoff = tol / cst::<T>(LEAF_BUDGET);

    let mut center_buf = vec![T::zero(); d];
    let mut offset_buf = vec![T::zero(); d];

    macro_rules! account {
        ($scale:expr, $offset:expr, $rotation:expr, $weight:expr, $depth:expr) => {{
            let scale = $scale;
            let weight = $weight;
            for k in 0..d {
                center_buf[k] = scale * base.center[k] + $offset[k];
            }
            // With a rotation the center is scale * R * c0 + offset.
            if let Some(rot) = &$rotation {
                let rc = crate::linalg::mat_vec::<T>(rot, &base.center, d);
                for k in 0..d {
                    center_buf[k] = scale * rc[k] + $offset[k];
                }
            }
            match query.classify(&center_buf, scale * base.radius) {
                Class::Inside => {
                    lo.add(weight);
                    leaves += 1;
                }
                Class::Outside => {
                    leaves += 1;
                }
                Class::Straddle => {
                    straddle.add(weight);
                    seq += 1;
                    let key = weight.to_f64().unwrap_or(0.0);
                    heap.push(MaxEntry::new(
                        key,
                        seq,
                        MassNode {
                            scale,
                            offset: $offset.to_vec(),
                            rotation: $rotation,
                            weight,
                            depth: $depth,
                        },
                    ));
                }
            }
        }};
    }

    let root_rotation: Option<Vec<T>> = if aligned {
        None
    } else {
        Some(root_map.rotation().to_vec())
    };
    account!(
        root_map.ratio(),
        root_map.translation(),
        root_rotation,
        root_weight,
        root_depth
    );

    while straddle.value() + frozen.value() > tol {
        let node = match heap.pop() {
            Some(e) => e.item,
            None => break,
        };
        straddle.sub(node.weight);
        if node.depth >= depth_cap || node.weight < weight_cutoff {
            frozen.add(node.weight);
            continue;
        }
        depth_used = depth_used.max(node.depth + 1);
        for &(r_l, t_l, rot_l, w_l) in &letters {
            // Composition (scale, R, offset) ∘ f_l: child offset is the
            // parent map applied to t_l.
            let child_rotation = match &node.rotation {
                None => {
                    for k in 0..d {
                        offset_buf[k] = node.scale * t_l[k] + node.offset[k];
                    }
                    None
                }
                Some(rot) => {
                    let rt = crate::linalg::mat_vec::<T>(rot, t_l, d);
                    for k in 0..d {
                        offset_buf[k] = node.scale * rt[k] + node.offset[k];
                    }
                    Some(crate::linalg::mat_mul::<T>(rot, rot_l, d))
                }
            };
            account!(
                node.scale * r_l,
                offset_buf,
                child_rotation,
                node.weight * w_l,
                node.depth + 1
            );
        }
    }

    // Exact unresolved mass from the surviving straddlers.
    let mut unresolved = KahanSum::<T>::new();
    for e in heap.iter() {
        unresolved.add(e.item.weight);
    }
    unresolved.add(frozen.value());

    let lo_val = lo.value();
    let hi_val = lo_val + unresolved.value();
    let lo_out = inflate_down(lo_val).max(T::zero());
    let hi_out = inflate_up(hi_val).min(root_weight.min(T::one())).max(lo_out);
    MeasureBound {
        lo: lo_out,
        hi: hi_out,
        depth_used,
        leaves,
    }
}

fn check_tol<T: Scalar>(tol: T) -> Result<()> {
    if !(tol > T::zero()) {
        return Err(Error::Parameter(format!("tol must be positive, got {tol}")));
    }
    Ok(())
}

/// Certified bracket of the measure of a closed ball.
pub fn ball_measure<T: Scalar>(
    ifs: &Ifs<T>,
    s: T,
    ball: &Ball<T>,
    tol: T,
    depth_cap: usize,
) -> Result<MeasureBound<T>> {
    check_tol(tol)?;
    if !(ball.radius > T::zero()) {
        return Err(Error::Parameter(format!(
            "ball radius must be positive, got {}",
            ball.radius
        )));
    }
    if ball.dim() != ifs.dim() {
        return Err(Error::Parameter("ball dimension mismatch".into()));
    }
    Ok(measure_from(
        ifs,
        s,
        Similitude::identity(ifs.dim()),
        0,
        T::one(),
        &Query::Ball {
            center: &ball.center,
            radius: ball.radius,
        },
        tol,
        depth_cap,
    ))
}

/// Certified bracket of the measure of a closed axis-aligned box.
pub fn box_measure<T: Scalar>(
    ifs: &Ifs<T>,
    s: T,
    lo: &[T],
    hi: &[T],
    tol: T,
    depth_cap: usize,
) -> Result<MeasureBound<T>> {
    check_tol(tol)?;
    if lo.len() != ifs.dim() || hi.len() != ifs.dim() {
        return Err(Error::Parameter("box dimension mismatch".into()));
    }
    if lo.iter().zip(hi).any(|(&a, &b)| !(a <= b)) {
        return Err(Error::Parameter("box has lo > hi".into()));
    }
    Ok(measure_from(
        ifs,
        s,
        Similitude::identity(ifs.dim()),
        0,
        T::one(),
        &Query::Box { lo, hi },
        tol,
        depth_cap,
    ))
}

/// Certified bracket of the measure of a closed interval (dimension one).
pub fn interval_measure<T: Scalar>(
    ifs: &Ifs<T>,
    s: T,
    a: T,
    b: T,
    tol: T,
    depth_cap: usize,
) -> Result<MeasureBound<T>> {
    if ifs.dim() != 1 {
        return Err(Error::Parameter(format!(
            "interval queries need dimension 1, got {}",
            ifs.dim()
        )));
    }
    if !(a < b) {
        return Err(Error::Parameter(format!("need a < b, got [{a}, {b}]")));
    }
    box_measure(ifs, s, &[a], &[b], tol, depth_cap)
}

/// Measure of `query ∩ K_w`: the engine restricted to one cylinder.
pub fn ball_measure_restricted<T: Scalar>(
    ifs: &Ifs<T>,
    s: T,
    word: &Word,
    ball: &Ball<T>,
    tol: T,
    depth_cap: usize,
) -> Result<MeasureBound<T>> {
    check_tol(tol)?;
    let node: CylinderNode<T> = ifs.cylinder(word, s)?;
    Ok(measure_from(
        ifs,
        s,
        node.map,
        word.len(),
        node.weight,
        &Query::Ball {
            center: &ball.center,
            radius: ball.radius,
        },
        tol,
        depth_cap,
    ))
}

/// A positive lower bound for `λ(B(x, t))` valid for every `x` on the
/// attractor: following the branch of `x` down the cylinder tree, the first
/// cylinder whose hull diameter drops below `t` is contained in the ball
/// and its ratio product is still at least `r_* t / (2 R_0)`.
pub fn lambda_floor<T: Scalar>(ifs: &Ifs<T>, s: T, t: T) -> T {
    let two_r0 = cst::<T>(2.0) * ifs.invariant_ball().radius;
    if t <= T::zero() {
        return T::zero();
    }
    if t >= two_r0 {
        return T::one();
    }
    (ifs.min_ratio() * t / two_r0).powf(s).min(T::one())
}

/// Pulls a ball back through one map when the preimage certifiably lies in
/// the open set of the separation certificate; the reciprocal densities of
/// the two balls then agree exactly.
///
/// Errors with [`Error::PreconditionUnverified`] when containment cannot
/// be certified.
pub fn blowup<T: Scalar>(
    ifs: &Ifs<T>,
    cert: &SeparationCert<T>,
    letter: u8,
    ball: &Ball<T>,
) -> Result<Ball<T>> {
    if letter as usize >= ifs.n_maps() {
        return Err(Error::InvalidWord {
            letter: letter as usize + 1,
            n: ifs.n_maps(),
        });
    }
    let pre = ifs.map(letter).unmap_ball(ball);
    let open_set = SoscOpenSet::new(ifs, cert);
    if !open_set.ball_inside(&pre) {
        return Err(Error::PreconditionUnverified(format!(
            "preimage ball (radius {}) not certified inside the open set (half-gap {})",
            pre.radius, cert.r_hi
        )));
    }
    Ok(pre)
}

/// Per-term report of the cylinder-union identity check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UnionIdentityReport<T> {
    pub base: MeasureBound<T>,
    pub terms: Vec<(Word, MeasureBound<T>)>,
    pub sum_lo: T,
    pub sum_hi: T,
    pub holds: bool,
}

/// Verifies that the images of a ball under all level-`k` cylinder maps
/// carry the same total mass as the ball itself. Requires the ball to be
/// certified inside the open set, which makes the images pairwise disjoint
/// up to null sets.
pub fn cylinder_union_identity_check<T: Scalar>(
    ifs: &Ifs<T>,
    s: T,
    cert: &SeparationCert<T>,
    ball: &Ball<T>,
    k: usize,
    tol: T,
    depth_cap: usize,
) -> Result<UnionIdentityReport<T>> {
    check_tol(tol)?;
    let count = (ifs.n_maps() as f64).powi(k as i32);
    if !(count <= DEFAULT_ENUM_CAP as f64) {
        return Err(Error::BudgetExceeded(format!(
            "{}^{} level-{k} terms exceed cap",
            ifs.n_maps(),
            k
        )));
    }
    let open_set = SoscOpenSet::new(ifs, cert);
    if !open_set.ball_inside(ball) {
        return Err(Error::PreconditionUnverified(
            "ball not certified inside the open set".into(),
        ));
    }
    let base = ball_measure(ifs, s, ball, tol, depth_cap)?;
    let mut terms = Vec::with_capacity(count as usize);
    let mut sum_lo = KahanSum::<T>::new();
    let mut sum_hi = KahanSum::<T>::new();
    for word in words_of_length(ifs.n_maps(), k) {
        let map = ifs.compose(&word)?;
        let image = map.map_ball(ball);
        let m = ball_measure(ifs, s, &image, tol, depth_cap)?;
        sum_lo.add(m.lo);
        sum_hi.add(m.hi);
        terms.push((word, m));
    }
    let sum_lo = inflate_down(sum_lo.value()).max(T::zero());
    let sum_hi = inflate_up(sum_hi.value());
    let holds = sum_lo <= base.hi && base.lo <= sum_hi;
    Ok(UnionIdentityReport {
        base,
        terms,
        sum_lo,
        sum_hi,
        holds,
    })
}
