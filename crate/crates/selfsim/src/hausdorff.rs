//! Certified brackets on the Hausdorff measure side.
//!
//! In dimension one the measure equals the infimum of
//! `diam(I)^s / λ(I)` over intervals of diameter at least the certified
//! gap that meet the attractor. Shrinking an interval to the convex hull
//! of its attractor part never increases the objective, so endpoints are
//! localized in cylinder pairs; intervals whose hull drops below the gap
//! are clamped to diameter exactly the gap.
//!
//! For arbitrary dimension only the ball-restricted infimum is computed.
//! Restricting the infimum family can only increase it, so the result is
//! an upper bound on the Hausdorff measure and is labeled as such.

use crate::ball::Ball;
use crate::error::{Error, Result};
use crate::ifs::Ifs;
use crate::measure::{
    ball_measure, interval_measure, lambda_floor, DEFAULT_MEASURE_DEPTH_CAP,
};
use crate::packing::DensityResult;
use crate::pq::MinEntry;
use crate::scalar::{cst, inflate_down, inflate_up, Scalar};
use crate::separation::SeparationCert;
use crate::similitude::Similitude;
use crate::word::Word;
use serde::{Deserialize, Serialize};
use std::collections::BinaryHeap;

/// One endpoint-pair cell of the interval search: left endpoint in the
/// left cylinder, right endpoint in the right cylinder, with a sound
/// lower bound for the objective over every candidate in the cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntervalCell<T> {
    pub left_word: Word,
    pub right_word: Word,
    pub diam_lo: T,
    pub diam_hi: T,
    pub lower_bound: T,
}

/// Tuning for the interval / ball minimizers.
#[derive(Debug, Clone)]
pub struct HausdorffParams {
    pub max_cells: u64,
    pub measure_depth_cap: usize,
}

impl Default for HausdorffParams {
    fn default() -> Self {
        HausdorffParams {
            max_cells: 400_000,
            measure_depth_cap: DEFAULT_MEASURE_DEPTH_CAP,
        }
    }
}

struct PairCell<T> {
    left: Word,
    map_l: Similitude<T>,
    right: Word,
    map_r: Similitude<T>,
    lb: T,
}

const CELL_WORD_CAP: usize = 100;

/// Certified bracket of the 1-D Hausdorff measure, with a witness interval
/// encoded as a ball (center = midpoint, radius = half diameter).
pub fn hausdorff_measure_1d<T: Scalar>(
    ifs: &Ifs<T>,
    s: T,
    cert: &SeparationCert<T>,
    eps: T,
) -> Result<DensityResult<T>> {
    hausdorff_measure_1d_with(ifs, s, cert, eps, &HausdorffParams::default())
}

pub fn hausdorff_measure_1d_with<T: Scalar>(
    ifs: &Ifs<T>,
    s: T,
    cert: &SeparationCert<T>,
    eps: T,
    params: &HausdorffParams,
) -> Result<DensityResult<T>> {
    if ifs.dim() != 1 {
        return Err(Error::Parameter(format!(
            "interval minimizer needs dimension 1, got {}",
            ifs.dim()
        )));
    }
    if !(eps > T::zero()) {
        return Err(Error::Parameter(format!("eps must be positive, got {eps}")));
    }
    let delta = cert.delta_lb;
    let base = ifs.invariant_ball();
    let r0 = base.radius;
    let c0 = base.center[0];
    let two = cst::<T>(2.0);
    let half = cst::<T>(0.5);
    let depth_cap = params.measure_depth_cap;

    // Survivors have objective at most the initial incumbent, hence mass at
    // least delta^s / U0; U0 itself is bounded by the static floor of the
    // centered window at the base point.
    let floor_half_delta = lambda_floor(ifs, s, delta * half);
    let diam_max = two * r0;
    let tol = (eps / cst::<T>(10.0) * floor_half_delta * floor_half_delta
        / diam_max.powf(s).max(T::one()))
    .max(cst::<T>(1e-13));

    let mut heap: BinaryHeap<MinEntry<PairCell<T>>> = BinaryHeap::new();
    let mut seq = 0u64;
    let mut cells_explored = 0u64;
    let mut inc_hi = T::infinity();
    let mut inc_lo = T::zero();
    let mut witness = Ball::new(vec![c0], delta * half)?;
    let mut lb_envelope = T::zero();

    // Sound objective lower bound over a pair cell.
    let cell_lb = |map_l: &Similitude<T>, map_r: &Similitude<T>| -> Result<T> {
        let cl = map_l.apply(&base.center)[0];
        let rl = map_l.ratio() * r0;
        let cr = map_r.apply(&base.center)[0];
        let rr = map_r.ratio() * r0;
        let (a_u, b_u) = (cl - rl, cl + rl);
        let (a_v, b_v) = (cr - rr, cr + rr);
        if b_v < a_u {
            // No pair with left endpoint <= right endpoint.
            return Ok(T::infinity());
        }
        let diam_eff = (a_v - b_u).max(delta);
        let span_measure_hi = if a_u < b_v {
            interval_measure(ifs, s, a_u, b_v, tol, depth_cap)?.hi
        } else {
            T::zero()
        };
        if !(span_measure_hi > T::zero()) {
            return Ok(T::infinity());
        }
        Ok(inflate_down(diam_eff.powf(s) / span_measure_hi).max(T::zero()))
    };

    // Honest candidate evaluation at the cell's attractor endpoints.
    // Returns a certified (lo, hi) bracket of an actual candidate interval.
    let evaluate = |map_l: &Similitude<T>, map_r: &Similitude<T>| -> Result<Option<(T, T, Ball<T>)>> {
        let u = map_l.apply(&base.center)[0];
        let v = map_r.apply(&base.center)[0];
        let (u, v) = if u <= v { (u, v) } else { (v, u) };
        let d = v - u;
        if d >= delta {
            let m = interval_measure(ifs, s, u, v, tol, depth_cap)?;
            if !(m.lo > T::zero()) {
                return Ok(None);
            }
            let num = d.powf(s);
            let ball = Ball::new(vec![(u + v) * half], d * half)?;
            Ok(Some((
                inflate_down(num / m.hi).max(T::zero()),
                inflate_up(num / m.lo),
                ball,
            )))
        } else {
            // Clamp to a centered window of diameter exactly delta; it
            // contains a one-sided ball around the attractor point u, so
            // the static floor applies.
            let mid = (u + v) * half;
            let (a, b) = (mid - delta * half, mid + delta * half);
            let m = interval_measure(ifs, s, a, b, tol, depth_cap)?;
            let slack = delta * half - d * half;
            let m_lo = m.lo.max(lambda_floor(ifs, s, slack));
            if !(m_lo > T::zero()) {
                return Ok(None);
            }
            let num = delta.powf(s);
            let ball = Ball::new(vec![mid], delta * half)?;
            Ok(Some((
                inflate_down(num / m.hi.min(T::one())).max(T::zero()),
                inflate_up(num / m_lo),
                ball,
            )))
        }
    };

    let id = Similitude::identity(1);
    let root_lb = cell_lb(&id, &id)?;
    seq += 1;
    heap.push(MinEntry::new(
        root_lb.to_f64().unwrap_or(f64::INFINITY),
        seq,
        PairCell {
            left: Word::empty(),
            map_l: id.clone(),
            right: Word::empty(),
            map_r: id,
            lb: root_lb,
        },
    ));

    loop {
        let top = match heap.pop() {
            Some(e) => e.item,
            None => {
                lb_envelope = lb_envelope.max(inc_lo.min(inc_hi));
                break;
            }
        };
        lb_envelope = lb_envelope.max(top.lb.min(inc_hi));
        if inc_hi - top.lb <= eps {
            break;
        }
        cells_explored += 1;
        if cells_explored > params.max_cells {
            return Err(Error::Precision {
                context: format!("interval minimizer exceeded {} cells", params.max_cells),
                lo: lb_envelope.to_f64().unwrap_or(f64::NAN),
                hi: inc_hi.to_f64().unwrap_or(f64::NAN),
            });
        }

        if let Some((lo, hi, ball)) = evaluate(&top.map_l, &top.map_r)? {
            if hi < inc_hi {
                inc_hi = hi;
                inc_lo = lo;
                witness = ball;
            }
        }

        // Refine the wider hull.
        let split_left = top.map_l.ratio() >= top.map_r.ratio();
        if (split_left && top.left.len() >= CELL_WORD_CAP)
            || (!split_left && top.right.len() >= CELL_WORD_CAP)
        {
            return Err(Error::Precision {
                context: "cell word depth cap reached".into(),
                lo: lb_envelope.to_f64().unwrap_or(f64::NAN),
                hi: inc_hi.to_f64().unwrap_or(f64::NAN),
            });
        }
        for l in 0..ifs.n_maps() {
            let f = ifs.map(l as u8);
            let (left, map_l, right, map_r) = if split_left {
                (
                    top.left.child(l as u8),
                    top.map_l.compose(f),
                    top.right.clone(),
                    top.map_r.clone(),
                )
            } else {
                (
                    top.left.clone(),
                    top.map_l.clone(),
                    top.right.child(l as u8),
                    top.map_r.compose(f),
                )
            };
            let lb = cell_lb(&map_l, &map_r)?;
            if lb.is_finite() && lb < inc_hi {
                seq += 1;
                heap.push(MinEntry::new(
                    lb.to_f64().unwrap_or(f64::INFINITY),
                    seq,
                    PairCell {
                        left,
                        map_l,
                        right,
                        map_r,
                        lb,
                    },
                ));
            }
        }
    }

    let value_lo = lb_envelope.min(inc_hi);
    let value_hi = inc_hi.max(value_lo);
    Ok(DensityResult {
        value_lo,
        value_hi,
        witness,
        witness_density_lo: inc_lo,
        cells_explored,
        eps,
        eval_floor: floor_half_delta,
    })
}

struct BallCell<T> {
    box_lo: Vec<T>,
    box_hi: Vec<T>,
    r_a: T,
    r_b: T,
    lb: T,
}

/// Certified bracket of the infimum of `(2r)^s / λ(B(x,r))` over balls
/// with `2r` at least the certified gap that meet the attractor.
///
/// This is an UPPER BOUND on the Hausdorff measure only: balls are a
/// sub-family of the convex sets defining the measure, and restricting an
/// infimum can only increase it. Valid in any ambient dimension.
pub fn hausdorff_upper_bound_balls<T: Scalar>(
    ifs: &Ifs<T>,
    s: T,
    cert: &SeparationCert<T>,
    eps: T,
) -> Result<DensityResult<T>> {
    hausdorff_upper_bound_balls_with(ifs, s, cert, eps, &HausdorffParams::default())
}

pub fn hausdorff_upper_bound_balls_with<T: Scalar>(
    ifs: &Ifs<T>,
    s: T,
    cert: &SeparationCert<T>,
    eps: T,
    params: &HausdorffParams,
) -> Result<DensityResult<T>> {
    if !(eps > T::zero()) {
        return Err(Error::Parameter(format!("eps must be positive, got {eps}")));
    }
    let delta = cert.delta_lb;
    let base = ifs.invariant_ball();
    let two = cst::<T>(2.0);
    let half = cst::<T>(0.5);
    let depth_cap = params.measure_depth_cap;
    let d = ifs.dim();

    // Beyond r_cap the ball swallows the whole attractor from anywhere in
    // the ambient box and the objective grows monotonically.
    let bx = ifs.ambient_box();
    let corner_reach = bx
        .corners()
        .iter()
        .map(|c| crate::linalg::dist(c, &base.center))
        .fold(T::zero(), T::max);
    let r_cap = corner_reach + base.radius;
    let r_min = delta * half;
    if !(r_min < r_cap) {
        return Err(Error::Parameter("gap exceeds attractor reach".into()));
    }

    // Bootstrap the measure floor from one coarse witness: surviving cells
    // have mass at least (2 r_min)^s / incumbent, usually far above the
    // static worst case.
    let floor_static = lambda_floor(ifs, s, r_min);
    let bootstrap = {
        let center = base.center.clone();
        let r_mid = (r_min + r_cap) * half;
        let wb = Ball::new(center, r_mid)?;
        let m = ball_measure(ifs, s, &wb, cst::<T>(1e-3), depth_cap)?;
        if m.lo > T::zero() {
            (two * r_min).powf(s) / inflate_up((two * r_mid).powf(s) / m.lo)
        } else {
            T::zero()
        }
    };
    let floor_min = floor_static.max(bootstrap);
    let tol = (eps / cst::<T>(10.0) * floor_min * floor_min
        / (two * r_cap).powf(s).max(T::one()))
    .max(cst::<T>(1e-13));

    let mut heap: BinaryHeap<MinEntry<BallCell<T>>> = BinaryHeap::new();
    let mut seq = 0u64;
    let mut cells_explored = 0u64;
    let mut inc_hi = T::infinity();
    let mut inc_lo = T::zero();
    let mut witness = Ball::new(base.center.clone(), r_min)?;
    let mut lb_envelope = T::zero();

    let halfdiag = |lo: &[T], hi: &[T]| -> T {
        let mut acc = T::zero();
        for k in 0..lo.len() {
            let h = (hi[k] - lo[k]) * half;
            acc = acc + h * h;
        }
        acc.sqrt()
    };
    let mid_of = |lo: &[T], hi: &[T]| -> Vec<T> {
        lo.iter().zip(hi).map(|(&a, &b)| (a + b) * half).collect()
    };

    let cell_lb = |lo: &[T], hi: &[T], r_a: T, r_b: T| -> Result<T> {
        let mid = mid_of(lo, hi);
        let rho = halfdiag(lo, hi);
        let probe = Ball::new(mid, r_b + rho)?;
        let m = ball_measure(ifs, s, &probe, tol, depth_cap)?;
        let m_hi = m.hi.min(T::one());
        if !(m_hi > T::zero()) {
            // Entire cell misses the attractor: no valid candidates.
            return Ok(T::infinity());
        }
        Ok(inflate_down((two * r_a).powf(s) / m_hi).max(T::zero()))
    };

    let root = BallCell {
        box_lo: bx.lo.clone(),
        box_hi: bx.hi.clone(),
        r_a: r_min,
        r_b: r_cap,
        lb: cell_lb(&bx.lo, &bx.hi, r_min, r_cap)?,
    };
    seq += 1;
    heap.push(MinEntry::new(
        root.lb.to_f64().unwrap_or(f64::INFINITY),
        seq,
        root,
    ));

    loop {
        let top = match heap.pop() {
            Some(e) => e.item,
            None => {
                lb_envelope = lb_envelope.max(inc_lo.min(inc_hi));
                break;
            }
        };
        lb_envelope = lb_envelope.max(top.lb.min(inc_hi));
        if inc_hi - top.lb <= eps {
            break;
        }
        cells_explored += 1;
        if cells_explored > params.max_cells {
            return Err(Error::Precision {
                context: format!("ball minimizer exceeded {} cells", params.max_cells),
                lo: lb_envelope.to_f64().unwrap_or(f64::NAN),
                hi: inc_hi.to_f64().unwrap_or(f64::NAN),
            });
        }

        // Witness at the box center, midpoint radius.
        let r_mid = (top.r_a + top.r_b) * half;
        let center = mid_of(&top.box_lo, &top.box_hi);
        let wb = Ball::new(center, r_mid)?;
        let m = ball_measure(ifs, s, &wb, tol, depth_cap)?;
        if m.lo > T::zero() {
            let num = (two * r_mid).powf(s);
            let hi = inflate_up(num / m.lo);
            if hi < inc_hi {
                inc_hi = hi;
                inc_lo = inflate_down(num / m.hi.min(T::one())).max(T::zero());
                witness = wb;
            }
        }

        // Split the wider of: longest box axis vs radius interval.
        let (axis, extent) = (0..d)
            .map(|k| (k, top.box_hi[k] - top.box_lo[k]))
            .fold((0usize, T::neg_infinity()), |best, cur| {
                if cur.1 > best.1 {
                    cur
                } else {
                    best
                }
            });
        let radius_extent = top.r_b - top.r_a;
        let children: Vec<BallCell<T>> = if extent >= radius_extent {
            let cut = (top.box_lo[axis] + top.box_hi[axis]) * half;
            if !(cut > top.box_lo[axis] && cut < top.box_hi[axis]) {
                return Err(Error::Precision {
                    context: "center box at floating-point resolution".into(),
                    lo: lb_envelope.to_f64().unwrap_or(f64::NAN),
                    hi: inc_hi.to_f64().unwrap_or(f64::NAN),
                });
            }
            let mut left_hi = top.box_hi.clone();
            left_hi[axis] = cut;
            let mut right_lo = top.box_lo.clone();
            right_lo[axis] = cut;
            vec![
                BallCell {
                    box_lo: top.box_lo.clone(),
                    box_hi: left_hi,
                    r_a: top.r_a,
                    r_b: top.r_b,
                    lb: T::zero(),
                },
                BallCell {
                    box_lo: right_lo,
                    box_hi: top.box_hi.clone(),
                    r_a: top.r_a,
                    r_b: top.r_b,
                    lb: T::zero(),
                },
            ]
        } else {
            let cut = (top.r_a + top.r_b) * half;
            if !(cut > top.r_a && cut < top.r_b) {
                return Err(Error::Precision {
                    context: "radius interval at floating-point resolution".into(),
                    lo: lb_envelope.to_f64().unwrap_or(f64::NAN),
                    hi: inc_hi.to_f64().unwrap_or(f64::NAN),
                });
            }
            vec![
                BallCell {
                    box_lo: top.box_lo.clone(),
                    box_hi: top.box_hi.clone(),
                    r_a: top.r_a,
                    r_b: cut,
                    lb: T::zero(),
                },
                BallCell {
                    box_lo: top.box_lo,
                    box_hi: top.box_hi,
                    r_a: cut,
                    r_b: top.r_b,
                    lb: T::zero(),
                },
            ]
        };
        for mut child in children {
            child.lb = cell_lb(&child.box_lo, &child.box_hi, child.r_a, child.r_b)?;
            if child.lb.is_finite() && child.lb < inc_hi {
                seq += 1;
                heap.push(MinEntry::new(
                    child.lb.to_f64().unwrap_or(f64::INFINITY),
                    seq,
                    child,
                ));
            }
        }
    }

    let value_lo = lb_envelope.min(inc_hi);
    let value_hi = inc_hi.max(value_lo);
    Ok(DensityResult {
        value_lo,
        value_hi,
        witness,
        witness_density_lo: inc_lo,
        cells_explored,
        eps,
        eval_floor: floor_min,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dimension::similarity_dimension_default;
    use crate::ifs::presets::{cantor, gasket04, quarters};
    use crate::separation::{certify_ssc, default_gap_tol, DEFAULT_SEP_DEPTH_CAP};

    fn setup(ifs: &Ifs<f64>) -> (f64, SeparationCert<f64>) {
        let s = similarity_dimension_default(&ifs.ratios()).unwrap().s;
        let cert = certify_ssc(ifs, s, default_gap_tol(ifs), DEFAULT_SEP_DEPTH_CAP).unwrap();
        (s, cert)
    }

    #[test]
    fn cantor_measure_is_one() {
        let ifs = cantor::<f64>();
        let (s, cert) = setup(&ifs);
        let result = hausdorff_measure_1d(&ifs, s, &cert, 1e-3).unwrap();
        assert!(
            result.value_lo <= 1.0 && 1.0 <= result.value_hi,
            "bracket [{}, {}] misses 1",
            result.value_lo,
            result.value_hi
        );
        assert!(result.value_hi - result.value_lo <= 1e-3);
        // Witness should be essentially the whole-set interval [0, 1].
        let w = &result.witness;
        let (a, b) = (w.center[0] - w.radius, w.center[0] + w.radius);
        assert!(a <= 1e-3 && b >= 1.0 - 1e-3, "witness [{a}, {b}]");
    }

    #[test]
    fn whole_interval_objective_is_one() {
        let ifs = cantor::<f64>();
        let (s, _) = setup(&ifs);
        let m = interval_measure(&ifs, s, 0.0, 1.0, 1e-8, 60).unwrap();
        let obj_hi = 1.0f64.powf(s) / m.lo;
        let obj_lo = 1.0f64.powf(s) / m.hi;
        assert!(obj_lo <= 1.0 && 1.0 <= obj_hi + 1e-9);
    }

    #[test]
    fn hull_shrink_never_increases_objective() {
        use rand::{Rng, SeedableRng};
        let ifs = cantor::<f64>();
        let (s, cert) = setup(&ifs);
        let delta = cert.delta_lb;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let a = rng.gen_range(-0.2..0.5);
            let b = a + rng.gen_range(delta..1.2);
            let m = interval_measure(&ifs, s, a, b, 1e-9, 60).unwrap();
            if m.lo <= 0.0 {
                continue;
            }
            let obj = (b - a).powf(s) / m.lo;
            // Shrink to the sampled attractor hull within [a, b].
            let pts = ifs.attractor_sample(10).unwrap();
            let inside: Vec<f64> = pts
                .iter()
                .map(|p| p[0])
                .filter(|&x| x >= a && x <= b)
                .collect();
            if inside.is_empty() {
                continue;
            }
            let u = inside.iter().cloned().fold(f64::INFINITY, f64::min);
            let v = inside.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let (u, v) = if v - u < delta {
                let mid = (u + v) / 2.0;
                (mid - delta / 2.0, mid + delta / 2.0)
            } else {
                (u, v)
            };
            let m2 = interval_measure(&ifs, s, u, v, 1e-9, 60).unwrap();
            if m2.lo <= 0.0 {
                continue;
            }
            let obj2 = (v - u).powf(s) / m2.lo;
            assert!(
                obj2 <= obj * (1.0 + 1e-6) + 1e-6,
                "shrink increased objective: {obj2} > {obj}"
            );
        }
    }

    #[test]
    fn quarters_bracket_contains_endpoint_oracle() {
        let ifs = quarters::<f64>();
        let (s, cert) = setup(&ifs);
        let result = hausdorff_measure_1d(&ifs, s, &cert, 1e-3).unwrap();
        assert!(result.value_hi - result.value_lo <= 1e-3);
        // Exhaustive endpoint oracle at depth 6.
        let delta = cert.delta_lb;
        let mut endpoints = Vec::new();
        for w in crate::word::words_of_length(2, 6) {
            let map = ifs.compose(&w).unwrap();
            endpoints.push(map.apply(&[0.0])[0]);
            endpoints.push(map.apply(&[1.0])[0]);
        }
        endpoints.sort_by(|a, b| a.partial_cmp(b).unwrap());
        endpoints.dedup();
        let mut best = f64::INFINITY;
        for (i, &u) in endpoints.iter().enumerate() {
            for &v in endpoints.iter().skip(i + 1) {
                if v - u < delta {
                    continue;
                }
                let m = interval_measure(&ifs, s, u, v, 1e-9, 60).unwrap();
                if m.lo > 0.0 {
                    best = best.min((v - u).powf(s) / m.lo);
                }
            }
        }
        assert!(
            result.value_lo <= best + 1e-6,
            "oracle {best} below bracket lo {}",
            result.value_lo
        );
        assert!(
            best <= result.value_hi + 1e-2,
            "oracle {best} far above bracket hi {}",
            result.value_hi
        );
    }

    #[test]
    fn balls_upper_bound_matches_interval_result_in_1d() {
        let ifs = cantor::<f64>();
        let (s, cert) = setup(&ifs);
        let intervals = hausdorff_measure_1d(&ifs, s, &cert, 1e-3).unwrap();
        let balls = hausdorff_upper_bound_balls(&ifs, s, &cert, 1e-3).unwrap();
        // Balls are intervals in 1-D: the two infima coincide.
        assert!(balls.value_lo <= intervals.value_hi + 1e-9);
        assert!(intervals.value_lo <= balls.value_hi + 1e-9);
        // And the ball infimum upper-bounds the measure.
        assert!(balls.value_hi >= 1.0 - 1e-3);
    }

    #[test]
    fn gasket_balls_bound_is_finite_positive() {
        let ifs = gasket04::<f64>();
        let (s, cert) = setup(&ifs);
        let bound = hausdorff_upper_bound_balls(&ifs, s, &cert, 0.05).unwrap();
        assert!(bound.value_hi.is_finite());
        assert!(bound.value_lo > 0.0);
        assert!(bound.value_hi - bound.value_lo <= 0.05);
    }
}
