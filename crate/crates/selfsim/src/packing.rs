//! Certified bracket of the packing measure.
//!
//! Under strong separation the packing measure of the attractor equals the
//! supremum of the reciprocal density `(2r)^s / λ(B(x,r))` over centers
//! `x` on the attractor and radii in the compact window
//! `[r_* Δ/2, Δ/2]` from the separation certificate. The supremum is
//! bracketed by branch-and-bound: cells localize the center in a cylinder
//! and the radius in an interval; a sound per-cell upper bound comes from
//! measure lower bounds on shrunken balls, and witness evaluations at
//! exact attractor points push the incumbent lower bound up. Radii below
//! the window fold into it by pulling balls back through maps (the
//! reciprocal density is invariant under such pullbacks), which is why
//! the compact window suffices.

use crate::ball::Ball;
use crate::error::{Error, Result};
use crate::ifs::{Ifs, DEFAULT_ENUM_CAP};
use crate::measure::{ball_measure, lambda_floor, MeasureBound, DEFAULT_MEASURE_DEPTH_CAP};
use crate::pq::MaxEntry;
use crate::scalar::{cst, inflate_down, inflate_up, Scalar};
use crate::separation::{Location, SeparationCert, SoscOpenSet};
use crate::similitude::Similitude;
use crate::word::{words_of_length, Word};
use serde::{Deserialize, Serialize};
use std::collections::BinaryHeap;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Certified reciprocal-density bracket of a single ball.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityBounds<T> {
    pub lo: T,
    pub hi: T,
    pub measure: MeasureBound<T>,
}

/// Reciprocal density `(2r)^s / λ(B)` with the measure bracket propagated
/// to a certified density bracket.
///
/// Errors with [`Error::UnboundedDensity`] when the measure lower bound is
/// zero at this tolerance (center too far from the attractor).
pub fn density_bounds<T: Scalar>(
    ifs: &Ifs<T>,
    s: T,
    ball: &Ball<T>,
    tol: T,
    depth_cap: usize,
) -> Result<DensityBounds<T>> {
    let measure = ball_measure(ifs, s, ball, tol, depth_cap)?;
    if !(measure.lo > T::zero()) {
        return Err(Error::UnboundedDensity);
    }
    let num = (cst::<T>(2.0) * ball.radius).powf(s);
    Ok(DensityBounds {
        lo: inflate_down(num / measure.hi).max(T::zero()),
        hi: inflate_up(num / measure.lo),
        measure,
    })
}

/// Certified bracket of the attained supremum together with the witness.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityResult<T> {
    pub value_lo: T,
    pub value_hi: T,
    pub witness: Ball<T>,
    pub witness_density_lo: T,
    pub cells_explored: u64,
    pub eps: T,
    /// Static measure floor used to validate evaluation balls.
    pub eval_floor: T,
}

/// One branch-and-bound cell: center localized in a cylinder, radius in an
/// interval, with a sound upper bound for the density over the whole cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchCell<T> {
    pub word: Word,
    pub radius_lo: T,
    pub radius_hi: T,
    pub upper_bound: T,
}

/// Tuning for the packing optimizer.
#[derive(Debug, Clone)]
pub struct PackingParams<T> {
    /// Abort with a precision error after this many cell pops.
    pub max_cells: u64,
    /// Depth cap for inner measure evaluations.
    pub measure_depth_cap: usize,
    /// Extend the radius window downward by this many factors of `r_*`.
    /// The extension is redundant for the supremum (small radii fold into
    /// the window) and exists to verify exactly that.
    pub extra_window_scales: u32,
    _marker: std::marker::PhantomData<T>,
}

impl<T> Default for PackingParams<T> {
    fn default() -> Self {
        PackingParams {
            max_cells: 400_000,
            measure_depth_cap: DEFAULT_MEASURE_DEPTH_CAP,
            extra_window_scales: 0,
            _marker: std::marker::PhantomData,
        }
    }
}

struct Cell<T> {
    word: Word,
    map: Similitude<T>,
    center: Vec<T>,
    hull_r: T,
    r_a: T,
    r_b: T,
    ub: T,
}

const CELL_WORD_CAP: usize = 100;

/// Inner measure tolerance keeping density-bound width proportional to the
/// requested gap: an error `t` in the measure moves a density by at most
/// `(2 r_hi)^s t / floor^2`.
fn eval_tolerance<T: Scalar>(eps: T, floor: T, r_hi: T, s: T) -> T {
    let num_max = (cst::<T>(2.0) * r_hi).powf(s).max(T::one());
    (eps / cst::<T>(10.0) * floor * floor / num_max).max(cst::<T>(1e-13))
}

fn cell_upper_bound<T: Scalar>(
    ifs: &Ifs<T>,
    s: T,
    center: &[T],
    hull_r: T,
    r_a: T,
    r_b: T,
    tol: T,
    depth_cap: usize,
) -> Result<T> {
    let num = (cst::<T>(2.0) * r_b).powf(s);
    if hull_r > r_a * cst::<T>(0.5) {
        // Hull too large to shrink the ball around the cylinder center;
        // fall back to the static floor, valid for any attractor center.
        return Ok(inflate_up(num / lambda_floor(ifs, s, r_a)));
    }
    let t = r_a - hull_r;
    let probe = Ball::new(center.to_vec(), t)?;
    let mb = ball_measure(ifs, s, &probe, tol, depth_cap)?;
    if mb.hi < cst::<T>(1e-12) {
        // Impossible for attractor centers with positive radius; treat as
        // a dead cell rather than dividing by ~0.
        return Ok(T::zero());
    }
    let lo = mb.lo.max(lambda_floor(ifs, s, t));
    Ok(inflate_up(num / lo))
}

/// Packing-measure bracket over the certified window, default tuning.
pub fn packing_measure<T: Scalar>(
    ifs: &Ifs<T>,
    s: T,
    cert: &SeparationCert<T>,
    eps: T,
) -> Result<DensityResult<T>> {
    packing_measure_with(ifs, s, cert, eps, &PackingParams::default())
}

/// Packing-measure bracket with explicit tuning.
pub fn packing_measure_with<T: Scalar>(
    ifs: &Ifs<T>,
    s: T,
    cert: &SeparationCert<T>,
    eps: T,
    params: &PackingParams<T>,
) -> Result<DensityResult<T>> {
    let mut trace = Vec::new();
    packing_measure_core(ifs, s, cert, eps, params, &mut trace)
}

/// As [`packing_measure_with`], also returning the per-iteration
/// `(upper envelope, incumbent)` trace.
pub fn packing_measure_traced<T: Scalar>(
    ifs: &Ifs<T>,
    s: T,
    cert: &SeparationCert<T>,
    eps: T,
    params: &PackingParams<T>,
) -> Result<(DensityResult<T>, Vec<(f64, f64)>)> {
    let mut trace = Vec::new();
    let result = packing_measure_core(ifs, s, cert, eps, params, &mut trace)?;
    Ok((result, trace))
}

fn packing_measure_core<T: Scalar>(
    ifs: &Ifs<T>,
    s: T,
    cert: &SeparationCert<T>,
    eps: T,
    params: &PackingParams<T>,
    trace: &mut Vec<(f64, f64)>,
) -> Result<DensityResult<T>> {
    if !(eps > T::zero()) {
        return Err(Error::Parameter(format!("eps must be positive, got {eps}")));
    }
    if !(s > T::zero()) {
        return Err(Error::Parameter(format!("s must be positive, got {s}")));
    }
    let r_hi = cert.r_hi;
    let mut search_lo = cert.r_lo;
    for _ in 0..params.extra_window_scales {
        search_lo = search_lo * cert.r_star;
    }
    if !(search_lo > T::zero() && search_lo < r_hi) {
        return Err(Error::Parameter("degenerate radius window".into()));
    }
    let eval_floor = lambda_floor(ifs, s, search_lo * cst::<T>(0.5));
    let tol = eval_tolerance(eps, eval_floor, r_hi, s);
    let depth_cap = params.measure_depth_cap;
    let base = ifs.invariant_ball();

    let mut heap: BinaryHeap<MaxEntry<Cell<T>>> = BinaryHeap::new();
    let mut seq = 0u64;
    let mut cells_explored = 0u64;
    let mut inc_lo = T::zero();
    let mut witness = Ball::new(base.center.clone(), r_hi)?;
    let mut envelope = T::infinity();

    let root = Cell {
        word: Word::empty(),
        map: Similitude::identity(ifs.dim()),
        center: base.center.clone(),
        hull_r: base.radius,
        r_a: search_lo,
        r_b: r_hi,
        ub: cell_upper_bound(ifs, s, &base.center, base.radius, search_lo, r_hi, tol, depth_cap)?,
    };
    seq += 1;
    let key = root.ub.to_f64().unwrap_or(f64::INFINITY);
    heap.push(MaxEntry::new(key, seq, root));

    loop {
        let top = match heap.pop() {
            Some(e) => e.item,
            None => {
                // Every cell resolved against the incumbent.
                envelope = envelope.min(inc_lo);
                break;
            }
        };
        envelope = envelope.min(top.ub.max(inc_lo));
        trace.push((
            envelope.to_f64().unwrap_or(f64::NAN),
            inc_lo.to_f64().unwrap_or(f64::NAN),
        ));
        if top.ub - inc_lo <= eps {
            break;
        }
        cells_explored += 1;
        if cells_explored > params.max_cells {
            return Err(Error::Precision {
                context: format!("packing optimizer exceeded {} cells", params.max_cells),
                lo: inc_lo.to_f64().unwrap_or(f64::NAN),
                hi: envelope.to_f64().unwrap_or(f64::NAN),
            });
        }

        // Witness at the cell's attractor point and midpoint radius.
        let r_mid = (top.r_a + top.r_b) * cst::<T>(0.5);
        let wb = Ball::new(top.center.clone(), r_mid)?;
        let mb = ball_measure(ifs, s, &wb, tol, depth_cap)?;
        let lam_hi = mb.hi.min(T::one());
        if lam_hi > T::zero() {
            let d_lo = inflate_down((cst::<T>(2.0) * r_mid).powf(s) / lam_hi);
            if d_lo > inc_lo {
                inc_lo = d_lo;
                witness = wb;
            }
        }

        // Split: word refinement until the hull is small against the
        // radius, then the wider of radius interval vs hull diameter.
        let split_word = if top.hull_r > top.r_a * cst::<T>(0.5) {
            true
        } else if top.r_b - top.r_a >= cst::<T>(2.0) * top.hull_r {
            false
        } else {
            true
        };
        if split_word && top.word.len() >= CELL_WORD_CAP {
            return Err(Error::Precision {
                context: "cell word depth cap reached".into(),
                lo: inc_lo.to_f64().unwrap_or(f64::NAN),
                hi: envelope.to_f64().unwrap_or(f64::NAN),
            });
        }
        let children: Vec<Cell<T>> = if split_word {
            (0..ifs.n_maps())
                .map(|l| {
                    let f = ifs.map(l as u8);
                    let map = top.map.compose(f);
                    let center = map.apply(&base.center);
                    let hull_r = map.ratio() * base.radius;
                    let ub =
                        cell_upper_bound(ifs, s, &center, hull_r, top.r_a, top.r_b, tol, depth_cap)?;
                    Ok(Cell {
                        word: top.word.child(l as u8),
                        map,
                        center,
                        hull_r,
                        r_a: top.r_a,
                        r_b: top.r_b,
                        ub,
                    })
                })
                .collect::<Result<_>>()?
        } else {
            let mid = (top.r_a + top.r_b) * cst::<T>(0.5);
            if !(mid > top.r_a && mid < top.r_b) {
                // Radius interval is at floating-point resolution; keep the
                // cell frozen at its bound by re-pushing with the word split.
                return Err(Error::Precision {
                    context: "radius interval at floating-point resolution".into(),
                    lo: inc_lo.to_f64().unwrap_or(f64::NAN),
                    hi: envelope.to_f64().unwrap_or(f64::NAN),
                });
            }
            [(top.r_a, mid), (mid, top.r_b)]
                .into_iter()
                .map(|(a, b)| {
                    let ub =
                        cell_upper_bound(ifs, s, &top.center, top.hull_r, a, b, tol, depth_cap)?;
                    Ok(Cell {
                        word: top.word.clone(),
                        map: top.map.clone(),
                        center: top.center.clone(),
                        hull_r: top.hull_r,
                        r_a: a,
                        r_b: b,
                        ub,
                    })
                })
                .collect::<Result<_>>()?
        };
        for child in children {
            if child.ub > inc_lo {
                seq += 1;
                let key = child.ub.to_f64().unwrap_or(f64::INFINITY);
                heap.push(MaxEntry::new(key, seq, child));
            }
        }
    }

    let value_lo = inc_lo;
    let value_hi = envelope.max(value_lo);
    let witness_density_lo = value_lo;
    Ok(DensityResult {
        value_lo,
        value_hi,
        witness,
        witness_density_lo,
        cells_explored,
        eps,
        eval_floor,
    })
}

/// Pulls a ball with radius below the window back through the leading
/// letters of its center's word until the radius lands in
/// `[r_lo, r_hi]`. Each pullback preserves the reciprocal density, which
/// is what makes the compact window sufficient.
pub fn fold_to_window<T: Scalar>(
    ifs: &Ifs<T>,
    cert: &SeparationCert<T>,
    word: &Word,
    ball: &Ball<T>,
) -> Result<(Ball<T>, Word)> {
    let mut current = ball.clone();
    let mut letters = word.0.clone();
    let open_set = SoscOpenSet::new(ifs, cert);
    while current.radius < cert.r_lo {
        let Some(&letter) = letters.first() else {
            return Err(Error::PreconditionUnverified(
                "radius below window but center word exhausted".into(),
            ));
        };
        let pre = ifs.map(letter).unmap_ball(&current);
        if open_set.locate_ball(&pre) != Location::Inside {
            return Err(Error::PreconditionUnverified(format!(
                "pullback through letter {} not certified inside the open set",
                letter + 1
            )));
        }
        current = pre;
        letters.remove(0);
    }
    if current.radius > cert.r_hi {
        return Err(Error::PreconditionUnverified(
            "pullback overshot the radius window".into(),
        ));
    }
    Ok((current, Word(letters)))
}

/// Report of the sampled density upper-bound property: for balls in the
/// open set centered on the attractor, `(2r)^s` never exceeds the packing
/// value times the ball's mass.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TheoremCheckReport<T> {
    pub samples: usize,
    pub skipped: usize,
    pub violations: usize,
    /// Largest observed `(2r)^s / (value_hi * λ_hi)`; at most `1 + 1e-9`
    /// when the property holds.
    pub max_ratio: T,
}

/// Samples seeded balls `B(x, r)` with `x` a random attractor point and
/// `r` uniform in the certificate window, certifies containment in the
/// open set, and checks `(2r)^s <= value_hi * λ_hi(B) * (1 + 1e-9)`.
pub fn check_density_theorem<T: Scalar>(
    ifs: &Ifs<T>,
    s: T,
    cert: &SeparationCert<T>,
    result: &DensityResult<T>,
    n_samples: usize,
    seed: u64,
) -> Result<TheoremCheckReport<T>> {
    use rand::{Rng, SeedableRng};
    let word_len = sample_word_len(ifs, cert);
    let value_hi = result.value_hi;
    let run_one = |i: usize| -> (bool, bool, T) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ splitmix(i as u64));
        let mut letters = Vec::with_capacity(word_len);
        for _ in 0..word_len {
            letters.push(rng.gen_range(0..ifs.n_maps() as u8));
        }
        let x = ifs
            .compose(&Word(letters))
            .expect("letters in range")
            .apply(ifs.base_point());
        let r_lo_f = cert.r_lo.to_f64().unwrap_or(0.0);
        let r_hi_f = cert.r_hi.to_f64().unwrap_or(1.0);
        let r = cst::<T>(rng.gen_range(r_lo_f..r_hi_f));
        let ball = Ball::new(x, r).expect("positive radius");
        let open_set = SoscOpenSet::new(ifs, cert);
        if open_set.locate_ball(&ball) != Location::Inside {
            return (true, false, T::zero());
        }
        let mb = ball_measure(ifs, s, &ball, cst::<T>(1e-7), DEFAULT_MEASURE_DEPTH_CAP)
            .expect("valid ball");
        let lam_hi = mb.hi.min(T::one());
        let lhs = (cst::<T>(2.0) * r).powf(s);
        let rhs = value_hi * lam_hi;
        let ratio = lhs / rhs;
        let violated = lhs > rhs * (T::one() + cst::<T>(1e-9));
        (false, violated, ratio)
    };

    #[cfg(feature = "parallel")]
    let outcomes: Vec<(bool, bool, T)> = (0..n_samples).into_par_iter().map(run_one).collect();
    #[cfg(not(feature = "parallel"))]
    let outcomes: Vec<(bool, bool, T)> = (0..n_samples).map(run_one).collect();

    let mut skipped = 0;
    let mut violations = 0;
    let mut max_ratio = T::zero();
    for (skip, violated, ratio) in outcomes {
        if skip {
            skipped += 1;
        } else {
            if violated {
                violations += 1;
            }
            max_ratio = max_ratio.max(ratio);
        }
    }
    Ok(TheoremCheckReport {
        samples: n_samples,
        skipped,
        violations,
        max_ratio,
    })
}

/// Word length making the cylinder diameter negligible against the window.
fn sample_word_len<T: Scalar>(ifs: &Ifs<T>, cert: &SeparationCert<T>) -> usize {
    let r0 = ifs.invariant_ball().radius.to_f64().unwrap_or(1.0);
    let target = cert.r_lo.to_f64().unwrap_or(1e-3) * 1e-9;
    let rmax = ifs.max_ratio().to_f64().unwrap_or(0.5);
    let len = ((target / r0.max(1e-300)).ln() / rmax.ln()).ceil();
    (len.max(8.0) as usize).min(400)
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// One row of a density scan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanRecord<T> {
    pub center: Vec<T>,
    pub radius: T,
    pub density_lo: T,
    pub density_hi: T,
}

/// Evaluates density brackets on the grid of all depth-`center_depth`
/// cylinder points times the given radii. The maximum of `density_lo`
/// over the stream is a valid lower bound for the packing value.
pub fn density_scan<T: Scalar>(
    ifs: &Ifs<T>,
    s: T,
    center_depth: usize,
    radius_grid: &[T],
    tol: T,
    depth_cap: usize,
) -> Result<Vec<ScanRecord<T>>> {
    let count = (ifs.n_maps() as f64).powi(center_depth as i32);
    if !(count <= DEFAULT_ENUM_CAP as f64) {
        return Err(Error::BudgetExceeded(format!(
            "{}^{center_depth} scan centers exceed cap",
            ifs.n_maps()
        )));
    }
    for &r in radius_grid {
        if !(r > T::zero()) {
            return Err(Error::Parameter(format!("scan radius {r} not positive")));
        }
    }
    let centers: Vec<Vec<T>> = words_of_length(ifs.n_maps(), center_depth)
        .map(|w| Ok(ifs.compose(&w)?.apply(ifs.base_point())))
        .collect::<Result<_>>()?;

    let run_one = |center: &Vec<T>| -> Result<Vec<ScanRecord<T>>> {
        radius_grid
            .iter()
            .map(|&radius| {
                let ball = Ball::new(center.clone(), radius)?;
                let mb = ball_measure(ifs, s, &ball, tol, depth_cap)?;
                // Attractor centers admit the static floor, so the density
                // stays finite even if the measured lower bound is slack.
                let lam_lo = mb.lo.max(lambda_floor(ifs, s, radius));
                let lam_hi = mb.hi.min(T::one());
                let num = (cst::<T>(2.0) * radius).powf(s);
                Ok(ScanRecord {
                    center: center.clone(),
                    radius,
                    density_lo: inflate_down(num / lam_hi).max(T::zero()),
                    density_hi: inflate_up(num / lam_lo),
                })
            })
            .collect()
    };

    #[cfg(feature = "parallel")]
    let rows: Vec<Vec<ScanRecord<T>>> = centers
        .par_iter()
        .map(run_one)
        .collect::<Result<_>>()?;
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<Vec<ScanRecord<T>>> = centers.iter().map(run_one).collect::<Result<_>>()?;

    Ok(rows.into_iter().flatten().collect())
}
