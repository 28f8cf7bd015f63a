//! Perturbation sweeps: how the certified packing bracket moves as the
//! system moves in the sup metric.
//!
//! A sweep perturbs the maps at a ladder of magnitudes, re-derives the
//! exponent, re-certifies membership in the class of the original gap
//! (systems whose perturbed pieces fall below that gap are recorded as
//! uncertified, not errors), and recomputes the packing bracket with the
//! original gap's radius window so values are comparable across systems.
//! The summary reports interval-safe deviations: zero whenever brackets
//! overlap, so optimizer slack never fakes a discontinuity.

use crate::dimension::similarity_dimension_default;
use crate::error::{Error, Result};
use crate::ifs::Ifs;
use crate::packing::{packing_measure_with, DensityResult, PackingParams};
use crate::scalar::{cst, Scalar};
use crate::separation::{certify_ssc, default_gap_tol, DEFAULT_SEP_DEPTH_CAP};
use crate::similitude::Similitude;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Which map parameters the jitter touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PerturbMode {
    Translations,
    Ratios,
    Both,
}

const PERTURB_RETRIES: usize = 8;
const RATIO_CLAMP: f64 = 1e-6;

/// Jitters the system so that the sup-metric distance to the original is
/// at most `magnitude`, deterministically in `seed`.
///
/// Translation jitter moves maps directly; ratio jitter is scaled by the
/// box corner norm (the Lipschitz factor from ratio to sup distance). The
/// result is rescaled toward the original if the drawn jitter overshoots,
/// and regenerated with shrunken jitter if box invariance breaks.
pub fn perturb<T: Scalar>(
    ifs: &Ifs<T>,
    magnitude: T,
    mode: PerturbMode,
    seed: u64,
) -> Result<Ifs<T>> {
    if !(magnitude > T::zero()) {
        return Err(Error::Parameter(format!(
            "magnitude must be positive, got {magnitude}"
        )));
    }
    let d = ifs.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let corner_norm = ifs.box_corner_norm().max(T::epsilon());
    let mag_f = magnitude.to_f64().unwrap_or(0.0);

    let mut shrink = 1.0f64;
    for _attempt in 0..PERTURB_RETRIES {
        // Budget split between the two jitter sources when both are active.
        let (t_budget, r_budget) = match mode {
            PerturbMode::Translations => (mag_f * shrink, 0.0),
            PerturbMode::Ratios => (0.0, mag_f * shrink),
            PerturbMode::Both => (mag_f * shrink * 0.5, mag_f * shrink * 0.5),
        };
        let per_coord = t_budget / (d as f64).sqrt();
        let corners = ifs.ambient_box().corners();
        let maps: Result<Vec<Similitude<T>>> = ifs
            .maps()
            .iter()
            .map(|f| {
                let ratio = if r_budget > 0.0 {
                    let scale = r_budget / corner_norm.to_f64().unwrap_or(1.0);
                    let j = rng.gen_range(-scale..scale);
                    let r = f.ratio().to_f64().unwrap_or(0.5) + j;
                    cst::<T>(r.clamp(RATIO_CLAMP, 1.0 - RATIO_CLAMP))
                } else {
                    f.ratio()
                };
                // Feasible translations keep every corner image in the box:
                // per axis, t_k ∈ [lo_k - min_c (rOc)_k, hi_k - max_c (rOc)_k].
                // Clamping into that (convex) set keeps invariance without
                // rejecting boundary-touching systems.
                let mut translation = f.translation().to_vec();
                for k in 0..d {
                    let mut img_lo = T::infinity();
                    let mut img_hi = T::neg_infinity();
                    for c in &corners {
                        let rc = crate::linalg::mat_vec::<T>(f.rotation(), c, d);
                        let v = ratio * rc[k];
                        img_lo = img_lo.min(v);
                        img_hi = img_hi.max(v);
                    }
                    let f_lo = ifs.ambient_box().lo[k] - img_lo;
                    let f_hi = ifs.ambient_box().hi[k] - img_hi;
                    if !(f_lo <= f_hi) {
                        return Err(Error::Parameter("ratio jitter exceeds box room".into()));
                    }
                    let j = if per_coord > 0.0 {
                        rng.gen_range(-per_coord..per_coord)
                    } else {
                        0.0
                    };
                    translation[k] = (translation[k] + cst::<T>(j)).max(f_lo).min(f_hi);
                }
                Similitude::new(ratio, f.rotation().to_vec(), translation)
            })
            .collect();
        let Ok(maps) = maps else {
            shrink *= 0.5;
            continue;
        };
        let candidate = match ifs.with_maps(maps) {
            Ok(c) => c,
            Err(_) => {
                shrink *= 0.5;
                continue;
            }
        };
        let d_actual = ifs.distance(&candidate)?;
        if d_actual <= magnitude {
            return Ok(candidate);
        }
        // Affine differences scale linearly: pull the candidate toward the
        // original to land exactly inside the budget.
        let factor = (magnitude / d_actual) * T::strict_shrink();
        let pulled: Result<Vec<Similitude<T>>> = ifs
            .maps()
            .iter()
            .zip(candidate.maps())
            .map(|(f, g)| {
                let ratio = f.ratio() + (g.ratio() - f.ratio()) * factor;
                let translation: Vec<T> = f
                    .translation()
                    .iter()
                    .zip(g.translation())
                    .map(|(&a, &b)| a + (b - a) * factor)
                    .collect();
                Similitude::new(ratio, f.rotation().to_vec(), translation)
            })
            .collect();
        if let Ok(pulled) = pulled {
            if let Ok(c) = ifs.with_maps(pulled) {
                if ifs.distance(&c)? <= magnitude {
                    return Ok(c);
                }
            }
        }
        shrink *= 0.5;
    }
    Err(Error::BudgetExceeded(format!(
        "could not draw a box-invariant perturbation at magnitude {magnitude}"
    )))
}

/// Outcome of one perturbed trial.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRecord<T> {
    pub delta_req: T,
    pub d_actual: T,
    pub s_g: T,
    pub packing_lo: T,
    pub packing_hi: T,
    /// Perturbed system re-certified against the original gap.
    pub cert_ok: bool,
    pub seed: u64,
    /// Optimizer hit its precision budget; excluded from summaries.
    pub flagged: bool,
}

/// Sweep configuration. Magnitudes must be positive and descending.
#[derive(Debug, Clone)]
pub struct SweepConfig<T> {
    pub magnitudes: Vec<T>,
    pub trials_per_magnitude: usize,
    pub eps: T,
    pub seed: u64,
    pub mode: PerturbMode,
}

/// Sweep output: the baseline bracket of the unperturbed system plus one
/// record per (magnitude, trial).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepOutput<T> {
    pub baseline: DensityResult<T>,
    pub baseline_s: T,
    pub records: Vec<SweepRecord<T>>,
}

/// Runs the sweep. Per-trial work is independent and deterministically
/// seeded, so records are identical regardless of thread count.
pub fn continuity_sweep<T: Scalar>(
    ifs: &Ifs<T>,
    config: &SweepConfig<T>,
) -> Result<SweepOutput<T>> {
    if config.magnitudes.is_empty() {
        return Err(Error::Parameter("no magnitudes".into()));
    }
    for w in config.magnitudes.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::Parameter("magnitudes must be descending".into()));
        }
    }
    if !(config.eps > T::zero()) {
        return Err(Error::Parameter("eps must be positive".into()));
    }
    let s_f = similarity_dimension_default(&ifs.ratios())?.s;
    let cert_f = certify_ssc(ifs, s_f, default_gap_tol(ifs), DEFAULT_SEP_DEPTH_CAP)?;
    let params = PackingParams::default();
    let baseline = packing_measure_with(ifs, s_f, &cert_f, config.eps, &params)?;

    let jobs: Vec<(usize, usize)> = config
        .magnitudes
        .iter()
        .enumerate()
        .flat_map(|(mi, _)| (0..config.trials_per_magnitude).map(move |ti| (mi, ti)))
        .collect();

    let run_one = |&(mi, ti): &(usize, usize)| -> Result<SweepRecord<T>> {
        let magnitude = config.magnitudes[mi];
        let trial_seed = config
            .seed
            .wrapping_add((mi as u64) << 32)
            .wrapping_add(ti as u64);
        let g = perturb(ifs, magnitude, config.mode, trial_seed)?;
        let d_actual = ifs.distance(&g)?;
        let s_g = similarity_dimension_default(&g.ratios())?.s;
        // Re-certify against the ORIGINAL gap: the class of systems with
        // pairwise piece distance above delta_lb(f) is open, so small
        // perturbations stay inside; those that fall out are recorded.
        let (cert_ok, cert_g) = match certify_ssc(&g, s_g, default_gap_tol(&g), DEFAULT_SEP_DEPTH_CAP)
        {
            Ok(c) if c.delta_lb >= cert_f.delta_lb => {
                // Use the original gap for the radius window so brackets
                // are comparable across trials.
                (true, Some(c.with_delta(cert_f.delta_lb, g.min_ratio())))
            }
            Ok(_) | Err(Error::SscUncertified(_)) => (false, None),
            Err(e) => return Err(e),
        };
        let (packing_lo, packing_hi, flagged) = match &cert_g {
            None => (T::zero(), T::infinity(), false),
            Some(c) => match packing_measure_with(&g, s_g, c, config.eps, &params) {
                Ok(r) => (r.value_lo, r.value_hi, false),
                Err(Error::Precision { lo, hi, .. }) => {
                    (cst::<T>(lo), cst::<T>(hi), true)
                }
                Err(e) => return Err(e),
            },
        };
        Ok(SweepRecord {
            delta_req: magnitude,
            d_actual,
            s_g,
            packing_lo,
            packing_hi,
            cert_ok,
            seed: trial_seed,
            flagged,
        })
    };

    #[cfg(feature = "parallel")]
    let records: Vec<SweepRecord<T>> = jobs.par_iter().map(run_one).collect::<Result<_>>()?;
    #[cfg(not(feature = "parallel"))]
    let records: Vec<SweepRecord<T>> = jobs.iter().map(run_one).collect::<Result<_>>()?;

    Ok(SweepOutput {
        baseline,
        baseline_s: s_f,
        records,
    })
}

/// Distance between two brackets; zero when they overlap.
pub fn interval_deviation<T: Scalar>(lo_a: T, hi_a: T, lo_b: T, hi_b: T) -> T {
    (lo_a - hi_b).max(lo_b - hi_a).max(T::zero())
}

/// Per-magnitude summary row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModulusRow<T> {
    pub magnitude: T,
    pub n_certified: usize,
    pub max_dev: T,
    pub mean_dev: T,
}

/// Sweep summary: per-magnitude worst/mean interval-safe deviation from
/// the baseline bracket, and a trend verdict.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModulusReport<T> {
    pub rows: Vec<ModulusRow<T>>,
    /// Max deviations nonincreasing (descending magnitudes) within slack.
    pub trend_nonincreasing: bool,
    pub slack: T,
}

/// Builds the summary table. Rows follow the magnitude order of the
/// records; uncertified or flagged trials are excluded, magnitudes with
/// no usable trial are dropped.
pub fn modulus_report<T: Scalar>(
    output: &SweepOutput<T>,
    slack: T,
) -> Result<ModulusReport<T>> {
    let mut rows: Vec<ModulusRow<T>> = Vec::new();
    let mut current: Option<(T, Vec<T>)> = None;
    let mut any = false;
    let flush = |cur: &mut Option<(T, Vec<T>)>, rows: &mut Vec<ModulusRow<T>>| {
        if let Some((mag, devs)) = cur.take() {
            if !devs.is_empty() {
                let max_dev = devs.iter().cloned().fold(T::zero(), T::max);
                let sum = devs.iter().cloned().fold(T::zero(), |a, b| a + b);
                rows.push(ModulusRow {
                    magnitude: mag,
                    n_certified: devs.len(),
                    max_dev,
                    mean_dev: sum / cst::<T>(devs.len() as f64),
                });
            }
        }
    };
    for rec in &output.records {
        match &mut current {
            Some((mag, devs)) if *mag == rec.delta_req => {
                if rec.cert_ok && !rec.flagged {
                    devs.push(interval_deviation(
                        output.baseline.value_lo,
                        output.baseline.value_hi,
                        rec.packing_lo,
                        rec.packing_hi,
                    ));
                    any = true;
                }
            }
            _ => {
                flush(&mut current, &mut rows);
                let mut devs = Vec::new();
                if rec.cert_ok && !rec.flagged {
                    devs.push(interval_deviation(
                        output.baseline.value_lo,
                        output.baseline.value_hi,
                        rec.packing_lo,
                        rec.packing_hi,
                    ));
                    any = true;
                }
                current = Some((rec.delta_req, devs));
            }
        }
    }
    flush(&mut current, &mut rows);
    if !any {
        return Err(Error::EmptySummary);
    }
    let trend_nonincreasing = rows
        .windows(2)
        .all(|w| w[1].max_dev <= w[0].max_dev + slack);
    Ok(ModulusReport {
        rows,
        trend_nonincreasing,
        slack,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dimension::{dimension_sensitivity, similarity_dimension_default};
    use crate::ifs::presets::cantor;

    #[test]
    fn perturbation_respects_magnitude() {
        let ifs = cantor::<f64>();
        for (i, mag) in [1e-15, 1e-6, 1e-3, 1e-2].into_iter().enumerate() {
            for mode in [
                PerturbMode::Translations,
                PerturbMode::Ratios,
                PerturbMode::Both,
            ] {
                let g = perturb(&ifs, mag, mode, 40 + i as u64).unwrap();
                let d = ifs.distance(&g).unwrap();
                assert!(d <= mag * (1.0 + 1e-9), "mode {mode:?}: {d} > {mag}");
                if mode == PerturbMode::Translations {
                    // Ratios untouched.
                    assert_eq!(g.ratios(), ifs.ratios());
                }
            }
        }
    }

    #[test]
    fn perturbation_is_deterministic_in_seed() {
        let ifs = cantor::<f64>();
        let a = perturb(&ifs, 1e-3, PerturbMode::Both, 7).unwrap();
        let b = perturb(&ifs, 1e-3, PerturbMode::Both, 7).unwrap();
        assert_eq!(a, b);
        let c = perturb(&ifs, 1e-3, PerturbMode::Both, 8).unwrap();
        assert!(ifs.distance(&c).unwrap() != ifs.distance(&a).unwrap());
    }

    #[test]
    fn exponent_moves_within_first_order_prediction() {
        let ifs = cantor::<f64>();
        let s_f = similarity_dimension_default(&ifs.ratios()).unwrap().s;
        let grad = dimension_sensitivity(&ifs.ratios(), s_f);
        let mag = 1e-6;
        for seed in 0..5 {
            let g = perturb(&ifs, mag, PerturbMode::Ratios, seed).unwrap();
            let s_g = similarity_dimension_default(&g.ratios()).unwrap().s;
            let predicted: f64 = grad
                .iter()
                .zip(ifs.ratios().iter().zip(g.ratios()))
                .map(|(dsdr, (r_f, r_g))| (dsdr * (r_g - r_f)).abs())
                .sum();
            assert!(
                (s_g - s_f).abs() <= 10.0 * predicted + 1e-12,
                "seed {seed}: |ds| = {} vs predicted {predicted}",
                (s_g - s_f).abs()
            );
        }
    }

    #[test]
    fn min_ratio_is_stable_under_small_jitter() {
        let ifs = cantor::<f64>();
        for seed in 0..10 {
            let g = perturb(&ifs, 1e-4, PerturbMode::Ratios, seed).unwrap();
            assert!(g.min_ratio() >= 0.5 * ifs.min_ratio());
        }
    }

    #[test]
    fn interval_deviation_is_zero_on_overlap() {
        assert_eq!(interval_deviation(1.0f64, 2.0, 1.5, 3.0), 0.0);
        assert_eq!(interval_deviation(1.0f64, 2.0, 2.0, 3.0), 0.0);
        assert!((interval_deviation(1.0f64, 2.0, 2.5, 3.0) - 0.5).abs() < 1e-15);
        assert!((interval_deviation(2.5f64, 3.0, 1.0, 2.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn tiny_sweep_produces_overlapping_brackets() {
        let ifs = cantor::<f64>();
        let config = SweepConfig {
            magnitudes: vec![1e-5, 1e-6],
            trials_per_magnitude: 2,
            eps: 1e-2,
            seed: 11,
            mode: PerturbMode::Both,
        };
        let out = continuity_sweep(&ifs, &config).unwrap();
        assert_eq!(out.records.len(), 4);
        let report = modulus_report(&out, 2e-2).unwrap();
        assert!(report.trend_nonincreasing);
        for row in &report.rows {
            assert!(row.max_dev <= 2e-2, "deviation {} too large", row.max_dev);
        }
    }

    #[test]
    fn synthetic_constant_records_have_zero_deviation() {
        let ifs = cantor::<f64>();
        let s = similarity_dimension_default(&ifs.ratios()).unwrap().s;
        let cert = certify_ssc(&ifs, s, default_gap_tol(&ifs), DEFAULT_SEP_DEPTH_CAP).unwrap();
        let baseline = packing_measure_with(&ifs, s, &cert, 1e-2, &PackingParams::default()).unwrap();
        let mk = |mag: f64| SweepRecord {
            delta_req: mag,
            d_actual: mag,
            s_g: s,
            packing_lo: baseline.value_lo,
            packing_hi: baseline.value_hi,
            cert_ok: true,
            seed: 0,
            flagged: false,
        };
        let out = SweepOutput {
            baseline: baseline.clone(),
            baseline_s: s,
            records: vec![mk(1e-2), mk(1e-2), mk(1e-3)],
        };
        let report = modulus_report(&out, 0.0).unwrap();
        assert_eq!(report.rows.len(), 2);
        assert!(report.rows.iter().all(|r| r.max_dev == 0.0));
        assert!(report.trend_nonincreasing);
        // All-uncertified records give an empty summary error.
        let mut rec = mk(1e-2);
        rec.cert_ok = false;
        let out2 = SweepOutput {
            baseline,
            baseline_s: s,
            records: vec![rec],
        };
        assert!(matches!(modulus_report(&out2, 0.0), Err(Error::EmptySummary)));
    }
}
