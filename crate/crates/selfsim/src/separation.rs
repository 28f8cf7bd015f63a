//! Strong-separation certification.
//!
//! Certifies a lower bound on the minimal gap `min_{i != j} d(K_i, K_j)`
//! between first-level pieces of the attractor by branch-and-bound over
//! pairs of cylinder hull balls, derives the admissible radius window
//! `[r_* Δ/2, Δ/2]` used by the density optimizers, and realizes the
//! associated open set `O = ∪_{x in K} B(x, Δ/2)` as a certified
//! membership predicate.
//!
//! Lower bounds come from hull-ball geometry (`|c - c'| - R - R'`), upper
//! bounds from distances between exact attractor points (hull centers are
//! images of the base point, hence lie on the attractor). Bounds therefore
//! converge to the true gap from both sides as hulls are refined.

use crate::ball::Ball;
use crate::error::{Error, Result};
use crate::ifs::Ifs;
use crate::linalg::dist;
use crate::pq::MinEntry;
use crate::scalar::{cst, Scalar};
use crate::similitude::Similitude;
use serde::{Deserialize, Serialize};
use std::collections::BinaryHeap;

/// Default gap tolerance as a fraction of the ambient box diameter.
pub const DEFAULT_GAP_TOL_FACTOR: f64 = 1e-9;
/// Default cap on cylinder word depth during gap refinement.
pub const DEFAULT_SEP_DEPTH_CAP: usize = 40;
/// Hard cap on branch-and-bound pops, a safety net only.
const MAX_PAIR_POPS: u64 = 50_000_000;

/// Certificate that the system satisfies the strong separation condition.
///
/// `delta_lb` is a certified strict lower bound: every pair distance
/// exceeds it. `delta_raw` is the best two-sided estimate of the gap
/// itself (an attained distance between attractor points).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeparationCert<T> {
    pub delta_lb: T,
    pub delta_raw: T,
    pub r_star: T,
    pub depth_used: usize,
    pub r_lo: T,
    pub r_hi: T,
}

impl<T: Scalar> SeparationCert<T> {
    /// Admissible radius window `[r_* Δ/2, Δ/2]` with `Δ = delta_lb`.
    pub fn radius_range(&self) -> (T, T) {
        (self.r_lo, self.r_hi)
    }

    /// Builds a certificate from a known admissible gap (used when a
    /// perturbed system is re-certified against the original gap).
    pub fn with_delta(&self, delta: T, r_star: T) -> SeparationCert<T> {
        let half = cst::<T>(0.5);
        SeparationCert {
            delta_lb: delta,
            delta_raw: self.delta_raw,
            r_star,
            depth_used: self.depth_used,
            r_lo: r_star * delta * half,
            r_hi: delta * half,
        }
    }
}

/// Default gap tolerance for a system: `1e-9 * diam(ambient box)`.
pub fn default_gap_tol<T: Scalar>(ifs: &Ifs<T>) -> T {
    cst::<T>(DEFAULT_GAP_TOL_FACTOR) * ifs.ambient_box().diameter()
}

#[derive(Clone)]
struct Side<T> {
    map: Similitude<T>,
    center: Vec<T>,
    letter_count: usize,
}

struct PairItem<T> {
    a: Side<T>,
    b: Side<T>,
    lb: T,
}

/// Certifies the strong separation condition.
///
/// On success the certificate satisfies `d(K_i, K_j) > delta_lb` strictly
/// for every pair: the certified bound is shrunk by a per-type factor so
/// the inequality cannot degenerate to equality.
///
/// Errors: [`Error::SscUncertified`] if the refined lower bound is still
/// nonpositive at the depth cap (pieces may touch or overlap);
/// [`Error::Precision`] if the cap is hit before `gap_tol` is met.
pub fn certify_ssc<T: Scalar>(
    ifs: &Ifs<T>,
    _s: T,
    gap_tol: T,
    depth_cap: usize,
) -> Result<SeparationCert<T>> {
    if !(gap_tol > T::zero()) {
        return Err(Error::Parameter(format!(
            "gap_tol must be positive, got {gap_tol}"
        )));
    }
    let root = ifs.invariant_ball();
    let r0 = root.radius;
    let c0 = root.center.clone();
    let n = ifs.n_maps();

    let sides: Vec<Side<T>> = (0..n)
        .map(|i| {
            let map = ifs.map(i as u8).clone();
            let center = map.apply(&c0);
            Side {
                map,
                center,
                letter_count: 1,
            }
        })
        .collect();

    let mut ub = T::infinity();
    for i in 0..n {
        for j in i + 1..n {
            ub = ub.min(dist(&sides[i].center, &sides[j].center));
        }
    }

    let mut heap: BinaryHeap<MinEntry<PairItem<T>>> = BinaryHeap::new();
    let mut seq = 0u64;
    let push = |heap: &mut BinaryHeap<MinEntry<PairItem<T>>>, seq: &mut u64, item: PairItem<T>| {
        *seq += 1;
        let key = item.lb.to_f64().unwrap_or(f64::NAN);
        heap.push(MinEntry::new(key, *seq, item));
    };
    for i in 0..n {
        for j in i + 1..n {
            let a = sides[i].clone();
            let b = sides[j].clone();
            let lb = dist(&a.center, &b.center) - (a.map.ratio() + b.map.ratio()) * r0;
            push(&mut heap, &mut seq, PairItem { a, b, lb });
        }
    }

    let mut depth_used = 1usize;
    let mut pops = 0u64;
    let mut stuck = false;
    let lb_final;

    loop {
        let top_lb = match heap.peek() {
            Some(e) => e.item.lb,
            None => {
                // Everything pruned against ub: the gap equals ub exactly.
                lb_final = ub;
                break;
            }
        };
        if ub - top_lb <= gap_tol {
            lb_final = top_lb;
            break;
        }
        pops += 1;
        if pops > MAX_PAIR_POPS {
            lb_final = top_lb;
            stuck = true;
            break;
        }
        let entry = heap.pop().expect("peeked entry");
        let PairItem { a, b, lb } = entry.item;
        if lb >= ub {
            continue;
        }
        // Split the side with the larger hull; fall back to the other side
        // at the depth cap.
        let split_a = {
            let ra = a.map.ratio();
            let rb = b.map.ratio();
            if a.letter_count >= depth_cap && b.letter_count >= depth_cap {
                // Cannot refine further.
                push(&mut heap, &mut seq, PairItem { a, b, lb });
                lb_final = lb;
                stuck = true;
                break;
            } else if a.letter_count >= depth_cap {
                false
            } else if b.letter_count >= depth_cap {
                true
            } else {
                ra >= rb
            }
        };
        let (split, keep) = if split_a { (a, b) } else { (b, a) };
        depth_used = depth_used.max(split.letter_count + 1);
        for l in 0..n {
            let map = split.map.compose(ifs.map(l as u8));
            let center = map.apply(&c0);
            let d = dist(&center, &keep.center);
            ub = ub.min(d);
            let lb_child = d - (map.ratio() + keep.map.ratio()) * r0;
            if lb_child < ub {
                push(
                    &mut heap,
                    &mut seq,
                    PairItem {
                        a: Side {
                            map,
                            center,
                            letter_count: split.letter_count + 1,
                        },
                        b: keep.clone(),
                        lb: lb_child,
                    },
                );
            }
        }
    }

    if lb_final <= T::zero() {
        return Err(Error::SscUncertified(format!(
            "gap lower bound {} (upper bound {}) at depth {}",
            lb_final, ub, depth_used
        )));
    }
    if stuck {
        return Err(Error::Precision {
            context: format!("gap refinement stopped at depth {depth_used} above gap_tol"),
            lo: lb_final.to_f64().unwrap_or(f64::NAN),
            hi: ub.to_f64().unwrap_or(f64::NAN),
        });
    }

    let delta_lb = T::strict_shrink() * lb_final;
    let r_star = ifs.min_ratio();
    let half = cst::<T>(0.5);
    Ok(SeparationCert {
        delta_lb,
        delta_raw: ub,
        r_star,
        depth_used,
        r_lo: r_star * delta_lb * half,
        r_hi: delta_lb * half,
    })
}

/// Two-sided bracket of `dist(y, K)` refined incrementally.
///
/// Lower bounds are hull-ball distances, upper bounds distances to exact
/// attractor points; both are monotone along refinement.
pub struct DistanceRefiner<'a, T> {
    ifs: &'a Ifs<T>,
    y: Vec<T>,
    heap: BinaryHeap<MinEntry<DistNode<T>>>,
    seq: u64,
    ub: T,
    frozen_lb: T,
    depth_cap: usize,
    pub depth_used: usize,
}

struct DistNode<T> {
    map: Similitude<T>,
    depth: usize,
    lb: T,
}

impl<'a, T: Scalar> DistanceRefiner<'a, T> {
    pub fn new(ifs: &'a Ifs<T>, y: &[T], depth_cap: usize) -> Self {
        let root = ifs.invariant_ball();
        let d0 = dist(y, &root.center);
        let mut r = DistanceRefiner {
            ifs,
            y: y.to_vec(),
            heap: BinaryHeap::new(),
            seq: 0,
            ub: d0,
            frozen_lb: T::infinity(),
            depth_cap,
            depth_used: 0,
        };
        let lb = (d0 - root.radius).max(T::zero());
        r.push(DistNode {
            map: Similitude::identity(ifs.dim()),
            depth: 0,
            lb,
        });
        r
    }

    fn push(&mut self, node: DistNode<T>) {
        self.seq += 1;
        let key = node.lb.to_f64().unwrap_or(f64::NAN);
        self.heap.push(MinEntry::new(key, self.seq, node));
    }

    /// Current certified bracket `[lo, hi]` of `dist(y, K)`.
    pub fn bounds(&self) -> (T, T) {
        let heap_lb = self
            .heap
            .peek()
            .map(|e| e.item.lb)
            .unwrap_or(T::infinity());
        (heap_lb.min(self.frozen_lb).min(self.ub), self.ub)
    }

    /// Refines once; returns false when no further refinement is possible.
    pub fn step(&mut self) -> bool {
        let entry = match self.heap.pop() {
            Some(e) => e,
            None => return false,
        };
        let DistNode { map, depth, lb } = entry.item;
        if lb >= self.ub {
            // Cannot improve the minimum; drop.
            return !self.heap.is_empty();
        }
        if depth >= self.depth_cap {
            self.frozen_lb = self.frozen_lb.min(lb);
            return !self.heap.is_empty();
        }
        let root = self.ifs.invariant_ball();
        self.depth_used = self.depth_used.max(depth + 1);
        for l in 0..self.ifs.n_maps() {
            let child = map.compose(self.ifs.map(l as u8));
            let center = child.apply(&root.center);
            let d = dist(&self.y, &center);
            self.ub = self.ub.min(d);
            let lb_child = (d - child.ratio() * root.radius).max(T::zero());
            if lb_child < self.ub {
                self.push(DistNode {
                    map: child,
                    depth: depth + 1,
                    lb: lb_child,
                });
            }
        }
        !self.heap.is_empty()
    }
}

/// Computes a bracket of `dist(y, K)` to the requested width.
pub fn attractor_distance<T: Scalar>(
    ifs: &Ifs<T>,
    y: &[T],
    tol: T,
    depth_cap: usize,
) -> (T, T) {
    let mut refiner = DistanceRefiner::new(ifs, y, depth_cap);
    loop {
        let (lo, hi) = refiner.bounds();
        if hi - lo <= tol || !refiner.step() {
            return refiner.bounds();
        }
    }
}

/// Certified location of a query relative to the open set
/// `O = ∪_{x in K} B(x, half_gap * 2 / 2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Location {
    Inside,
    Outside,
    Unknown,
}

/// The open set `O = ∪_{x in K} B(x, Δ/2)` as a membership predicate with
/// certified one-sided answers.
pub struct SoscOpenSet<'a, T> {
    ifs: &'a Ifs<T>,
    /// `Δ/2`, the ball radius of the union.
    pub half_gap: T,
    margin: T,
    depth_cap: usize,
}

impl<'a, T: Scalar> SoscOpenSet<'a, T> {
    pub fn new(ifs: &'a Ifs<T>, cert: &SeparationCert<T>) -> Self {
        SoscOpenSet {
            ifs,
            half_gap: cert.r_hi,
            margin: T::zero(),
            depth_cap: 60,
        }
    }

    pub fn with_margin(mut self, margin: T) -> Self {
        self.margin = margin;
        self
    }

    pub fn with_depth_cap(mut self, cap: usize) -> Self {
        self.depth_cap = cap;
        self
    }

    /// Membership of a point: `y` lies in `O` iff `dist(y, K) < Δ/2`.
    pub fn locate_point(&self, y: &[T]) -> Location {
        let mut refiner = DistanceRefiner::new(self.ifs, y, self.depth_cap);
        loop {
            let (lo, hi) = refiner.bounds();
            if hi < self.half_gap - self.margin {
                return Location::Inside;
            }
            if lo > self.half_gap + self.margin {
                return Location::Outside;
            }
            if !refiner.step() {
                return Location::Unknown;
            }
        }
    }

    /// Certified location of a whole ball relative to `O`.
    ///
    /// `Inside` certifies `ball ⊆ O` (via `dist(center,K) + radius < Δ/2`),
    /// `Outside` certifies `ball ∩ O = ∅`; `Unknown` decides nothing.
    pub fn locate_ball(&self, ball: &Ball<T>) -> Location {
        let mut refiner = DistanceRefiner::new(self.ifs, &ball.center, self.depth_cap);
        loop {
            let (lo, hi) = refiner.bounds();
            if hi + ball.radius < self.half_gap - self.margin {
                return Location::Inside;
            }
            if lo - ball.radius > self.half_gap + self.margin {
                return Location::Outside;
            }
            // Neither side can ever be certified once the bracket is tight
            // around the threshold.
            if lo + ball.radius >= self.half_gap - self.margin
                && hi - ball.radius <= self.half_gap + self.margin
            {
                return Location::Unknown;
            }
            if !refiner.step() {
                return Location::Unknown;
            }
        }
    }

    /// Convenience: certified `ball ⊆ O`.
    pub fn ball_inside(&self, ball: &Ball<T>) -> bool {
        self.locate_ball(ball) == Location::Inside
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dimension::similarity_dimension_default;
    use crate::ifs::presets::{cantor, cantor_like, gasket04, touching};

    fn cantor_cert() -> SeparationCert<f64> {
        let ifs = cantor::<f64>();
        let s = similarity_dimension_default(&ifs.ratios()).unwrap().s;
        certify_ssc(&ifs, s, default_gap_tol(&ifs), DEFAULT_SEP_DEPTH_CAP).unwrap()
    }

    #[test]
    fn cantor_gap_is_one_third() {
        let cert = cantor_cert();
        assert!((cert.delta_raw - 1.0 / 3.0).abs() <= 2e-9);
        assert!(cert.delta_lb < cert.delta_raw);
        assert!(cert.delta_lb > 1.0 / 3.0 - 1e-8);
        assert!((cert.r_star - 1.0 / 3.0).abs() < 1e-15);
        // Radius window [r_* Δ/2, Δ/2] ≈ [1/18, 1/6].
        let (r_lo, r_hi) = cert.radius_range();
        assert!((r_lo - 1.0 / 18.0).abs() <= 1e-8);
        assert!((r_hi - 1.0 / 6.0).abs() <= 1e-8);
        assert!(r_lo < r_hi);
    }

    #[test]
    fn touching_system_is_uncertified() {
        let ifs = touching::<f64>();
        let err = certify_ssc(&ifs, 1.0, default_gap_tol(&ifs), DEFAULT_SEP_DEPTH_CAP).unwrap_err();
        assert!(matches!(err, Error::SscUncertified(_)));
    }

    #[test]
    fn cantor_family_matches_exact_gap() {
        for r in [0.2f64, 0.3, 0.45] {
            let ifs = cantor_like(r);
            let s = similarity_dimension_default(&ifs.ratios()).unwrap().s;
            let tol = default_gap_tol(&ifs);
            let cert = certify_ssc(&ifs, s, tol, DEFAULT_SEP_DEPTH_CAP).unwrap();
            let exact = 1.0 - 2.0 * r;
            assert!(
                (cert.delta_raw - exact).abs() <= tol,
                "r={r}: raw {} vs exact {exact}",
                cert.delta_raw
            );
            assert!(cert.delta_lb < exact && exact <= cert.delta_raw + tol);
        }
    }

    #[test]
    fn gasket_certifies_with_positive_gap() {
        let ifs = gasket04::<f64>();
        let s = similarity_dimension_default(&ifs.ratios()).unwrap().s;
        let cert = certify_ssc(&ifs, s, 1e-7, DEFAULT_SEP_DEPTH_CAP).unwrap();
        assert!(cert.delta_lb > 0.0);
        // Brute-force cross-check: pairwise distances between depth-7
        // attractor points from different first letters can only
        // overestimate the gap.
        let pts = ifs.attractor_sample(7).unwrap();
        let block = pts.len() / 3;
        let mut bf = f64::INFINITY;
        for gi in 0..3 {
            for gj in gi + 1..3 {
                for p in &pts[gi * block..(gi + 1) * block] {
                    for q in &pts[gj * block..(gj + 1) * block] {
                        bf = bf.min(dist(p, q));
                    }
                }
            }
        }
        assert!(bf >= cert.delta_lb);
        assert!(bf - cert.delta_raw <= 0.01);
        // Known geometry: bottom-edge gap is 0.2.
        assert!((cert.delta_raw - 0.2).abs() <= 1e-6);
    }

    #[test]
    fn precision_error_carries_monotone_bounds() {
        let ifs = gasket04::<f64>();
        let mut last_lb = f64::NEG_INFINITY;
        let mut last_ub = f64::INFINITY;
        for cap in 2..8 {
            match certify_ssc(&ifs, 1.0, 1e-15, cap) {
                Err(Error::Precision { lo, hi, .. }) => {
                    assert!(lo >= last_lb - 1e-12, "lb regressed at cap {cap}");
                    assert!(hi <= last_ub + 1e-12, "ub regressed at cap {cap}");
                    assert!(lo <= hi);
                    last_lb = lo;
                    last_ub = hi;
                }
                Ok(cert) => {
                    // Converged early; bounds must still bracket.
                    assert!(cert.delta_lb <= cert.delta_raw);
                    break;
                }
                Err(e) => panic!("unexpected error {e}"),
            }
        }
    }

    #[test]
    fn distance_refiner_brackets_shrink_monotonically() {
        let ifs = cantor::<f64>();
        let mut refiner = DistanceRefiner::new(&ifs, &[0.5], 50);
        let (mut lo, mut hi) = refiner.bounds();
        assert!(lo <= hi);
        for _ in 0..200 {
            if !refiner.step() {
                break;
            }
            let (nlo, nhi) = refiner.bounds();
            assert!(nlo >= lo - 1e-15 && nhi <= hi + 1e-15 && nlo <= nhi);
            lo = nlo;
            hi = nhi;
        }
        // dist(1/2, K) = 1/6.
        assert!((lo - 1.0 / 6.0).abs() <= 1e-9 && (hi - 1.0 / 6.0).abs() <= 1e-9);
    }

    #[test]
    fn open_set_membership_on_landmark_points() {
        let ifs = cantor::<f64>();
        let cert = cantor_cert();
        let o = SoscOpenSet::new(&ifs, &cert);
        // Attractor point: distance zero.
        assert_eq!(o.locate_point(&[2.0 / 3.0]), Location::Inside);
        // Center of the main gap: dist = 1/6 > Δ/2 (Δ shrunk strictly below 1/3).
        assert_eq!(o.locate_point(&[0.5]), Location::Outside);
        // Close to the attractor.
        assert_eq!(o.locate_point(&[0.01]), Location::Inside);
        // Far outside.
        assert_eq!(o.locate_point(&[5.0]), Location::Outside);
    }

    #[test]
    fn ball_location_is_one_sided_certified() {
        let ifs = cantor::<f64>();
        let cert = cantor_cert();
        let o = SoscOpenSet::new(&ifs, &cert);
        let inside = Ball::new(vec![0.0], cert.r_hi * 0.5).unwrap();
        assert_eq!(o.locate_ball(&inside), Location::Inside);
        let outside = Ball::new(vec![5.0], 0.1).unwrap();
        assert_eq!(o.locate_ball(&outside), Location::Outside);
        // Balls straddling the boundary of O can never certify. The gap
        // center is such a case: O covers all of the gap except a sliver
        // of width ~ (1/3 - Δ) around 1/2, thinner than any test ball.
        let straddle = Ball::new(vec![0.0], cert.r_hi * 1.5).unwrap();
        assert_eq!(o.locate_ball(&straddle), Location::Unknown);
        assert_eq!(o.locate_ball(&Ball::new(vec![0.5], 0.01).unwrap()), Location::Unknown);
    }
}
