//! Iterated function systems of contractive similitudes, their cylinders,
//! and the sup-metric on systems sharing an ambient box.

use crate::ball::Ball;
use crate::error::{Error, Result};
use crate::linalg::{dist, norm, sub};
use crate::scalar::{cst, Scalar};
use crate::similitude::Similitude;
use crate::word::{words_of_length, Word};
use serde::{Deserialize, Serialize};

/// Default cap on `N^depth` for exhaustive enumerations.
pub const DEFAULT_ENUM_CAP: usize = 1 << 21;

/// Axis-aligned box `[lo_1, hi_1] x ... x [lo_d, hi_d]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbientBox<T> {
    pub lo: Vec<T>,
    pub hi: Vec<T>,
}

impl<T: Scalar> AmbientBox<T> {
    pub fn new(lo: Vec<T>, hi: Vec<T>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::InvalidIfs("box endpoint dimensions differ".into()));
        }
        if lo.iter().zip(&hi).any(|(&a, &b)| !(a <= b)) {
            return Err(Error::InvalidIfs("box has lo > hi on some axis".into()));
        }
        Ok(AmbientBox { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn diameter(&self) -> T {
        norm(&sub(&self.hi, &self.lo))
    }

    /// All `2^d` corners, in a fixed bitmask order.
    pub fn corners(&self) -> Vec<Vec<T>> {
        let d = self.dim();
        (0..(1usize << d))
            .map(|mask| {
                (0..d)
                    .map(|k| if mask >> k & 1 == 1 { self.hi[k] } else { self.lo[k] })
                    .collect()
            })
            .collect()
    }

    pub fn contains(&self, x: &[T], slack: T) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(&v, (&lo, &hi))| v >= lo - slack && v <= hi + slack)
    }
}

/// An iterated function system of `N >= 2` contractions together with an
/// invariant ambient box and a precomputed invariant ball for the attractor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ifs<T> {
    maps: Vec<Similitude<T>>,
    ambient_box: AmbientBox<T>,
    root_center: Vec<T>,
    root_radius: T,
}

/// A cylinder of the attractor: composed map, certified bounding ball,
/// and exact natural-measure weight `ratio^s`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CylinderNode<T> {
    pub word: Word,
    pub map: Similitude<T>,
    pub hull: Ball<T>,
    pub weight: T,
}

impl<T: Scalar> Ifs<T> {
    /// Validates the system and precomputes the invariant ball.
    ///
    /// Each map must be a strict contraction and must send the ambient box
    /// into itself; since the maps are affine and the box is convex it is
    /// enough to check the images of the corners.
    pub fn new(maps: Vec<Similitude<T>>, ambient_box: AmbientBox<T>) -> Result<Self> {
        if maps.len() < 2 {
            return Err(Error::InvalidIfs(format!(
                "need at least 2 maps, got {}",
                maps.len()
            )));
        }
        if maps.len() > u8::MAX as usize {
            return Err(Error::InvalidIfs("more than 255 maps".into()));
        }
        let d = ambient_box.dim();
        for (i, f) in maps.iter().enumerate() {
            if f.dim() != d {
                return Err(Error::InvalidIfs(format!(
                    "map {} has dimension {}, box has {}",
                    i + 1,
                    f.dim(),
                    d
                )));
            }
            if !(f.ratio() < T::one()) {
                return Err(Error::InvalidIfs(format!(
                    "map {} is not a contraction (ratio {})",
                    i + 1,
                    f.ratio()
                )));
            }
        }
        let slack = T::cert_eps() * T::one().max(ambient_box.diameter());
        for (i, f) in maps.iter().enumerate() {
            for corner in ambient_box.corners() {
                let img = f.apply(&corner);
                if !ambient_box.contains(&img, slack) {
                    return Err(Error::InvalidIfs(format!(
                        "map {} sends a box corner outside the ambient box",
                        i + 1
                    )));
                }
            }
        }

        // Invariant ball: center at the fixed point of the first map
        // (deterministic choice), radius covering every first image.
        let root_center = maps[0].fixed_point()?;
        let mut root_radius = T::zero();
        for f in &maps {
            let moved = dist(&f.apply(&root_center), &root_center);
            root_radius = root_radius.max(moved / (T::one() - f.ratio()));
        }
        Ok(Ifs {
            maps,
            ambient_box,
            root_center,
            root_radius,
        })
    }

    pub fn n_maps(&self) -> usize {
        self.maps.len()
    }

    pub fn dim(&self) -> usize {
        self.ambient_box.dim()
    }

    pub fn maps(&self) -> &[Similitude<T>] {
        &self.maps
    }

    pub fn map(&self, letter: u8) -> &Similitude<T> {
        &self.maps[letter as usize]
    }

    pub fn ambient_box(&self) -> &AmbientBox<T> {
        &self.ambient_box
    }

    pub fn ratios(&self) -> Vec<T> {
        self.maps.iter().map(|f| f.ratio()).collect()
    }

    pub fn min_ratio(&self) -> T {
        self.maps
            .iter()
            .map(|f| f.ratio())
            .fold(T::infinity(), T::min)
    }

    pub fn max_ratio(&self) -> T {
        self.maps
            .iter()
            .map(|f| f.ratio())
            .fold(T::zero(), T::max)
    }

    /// Ball `B_0` with `f_i(B_0) ⊆ B_0` for every map, hence containing the
    /// attractor. Center is the fixed point of the first map.
    pub fn invariant_ball(&self) -> Ball<T> {
        Ball {
            center: self.root_center.clone(),
            radius: self.root_radius,
        }
    }

    /// Fixed point of the first map; an exact attractor point used as the
    /// base point for all cylinder sampling.
    pub fn base_point(&self) -> &[T] {
        &self.root_center
    }

    fn check_word(&self, word: &Word) -> Result<()> {
        for &l in &word.0 {
            if l as usize >= self.maps.len() {
                return Err(Error::InvalidWord {
                    letter: l as usize + 1,
                    n: self.maps.len(),
                });
            }
        }
        Ok(())
    }

    /// Composition along a word, left letter applied last; the empty word
    /// composes to the identity.
    pub fn compose(&self, word: &Word) -> Result<Similitude<T>> {
        self.check_word(word)?;
        let mut acc = Similitude::identity(self.dim());
        for &l in &word.0 {
            acc = acc.compose(&self.maps[l as usize]);
        }
        Ok(acc)
    }

    /// Cylinder node for a word: hull is the image of the invariant ball,
    /// weight is `ratio^s`.
    pub fn cylinder(&self, word: &Word, s: T) -> Result<CylinderNode<T>> {
        if !(s > T::zero()) {
            return Err(Error::Parameter(format!("exponent s must be positive, got {s}")));
        }
        let map = self.compose(word)?;
        let hull = map.map_ball(&self.invariant_ball());
        let weight = map.ratio().powf(s);
        Ok(CylinderNode {
            word: word.clone(),
            map,
            hull,
            weight,
        })
    }

    /// Exact attractor points `{ f_w(p_0) : |w| = depth }` in lexicographic
    /// order of the words.
    pub fn attractor_sample(&self, depth: usize) -> Result<Vec<Vec<T>>> {
        self.attractor_sample_capped(depth, DEFAULT_ENUM_CAP)
    }

    pub fn attractor_sample_capped(&self, depth: usize, cap: usize) -> Result<Vec<Vec<T>>> {
        let count = (self.n_maps() as f64).powi(depth as i32);
        if !(count <= cap as f64) {
            return Err(Error::BudgetExceeded(format!(
                "attractor sample of {}^{} points exceeds cap {}",
                self.n_maps(),
                depth,
                cap
            )));
        }
        let mut out = Vec::with_capacity(count as usize);
        for word in words_of_length(self.n_maps(), depth) {
            let map = self.compose(&word)?;
            out.push(map.apply(&self.root_center));
        }
        Ok(out)
    }

    /// Sup-distance `max_i sup_{x in X} |f_i(x) - g_i(x)|` over the shared
    /// ambient box. Differences of similitudes are affine, so the supremum
    /// over the convex box is attained at a corner.
    pub fn distance(&self, other: &Ifs<T>) -> Result<T> {
        if self.n_maps() != other.n_maps() {
            return Err(Error::IncompatibleSystems(format!(
                "map counts differ: {} vs {}",
                self.n_maps(),
                other.n_maps()
            )));
        }
        if self.dim() != other.dim() {
            return Err(Error::IncompatibleSystems(format!(
                "dimensions differ: {} vs {}",
                self.dim(),
                other.dim()
            )));
        }
        if self.ambient_box != other.ambient_box {
            return Err(Error::IncompatibleSystems(
                "ambient boxes differ".into(),
            ));
        }
        let corners = self.ambient_box.corners();
        let mut worst = T::zero();
        for (f, g) in self.maps.iter().zip(&other.maps) {
            for corner in &corners {
                worst = worst.max(dist(&f.apply(corner), &g.apply(corner)));
            }
        }
        Ok(worst)
    }

    /// Conjugates every map by `phi(x) = c x + shift` with `c > 0` and
    /// transports the ambient box. The conjugated system has the same
    /// ratios; its attractor is the `phi`-image of the original one.
    pub fn conjugate_scaled(&self, c: T, shift: &[T]) -> Result<Ifs<T>> {
        if !(c > T::zero()) {
            return Err(Error::Parameter(format!("scale must be positive, got {c}")));
        }
        if shift.len() != self.dim() {
            return Err(Error::Parameter("shift dimension mismatch".into()));
        }
        let phi = Similitude::new(c, crate::linalg::identity(self.dim()), shift.to_vec())?;
        let maps: Vec<Similitude<T>> = self.maps.iter().map(|f| f.conjugate(&phi)).collect();
        let lo = phi.apply(&self.ambient_box.lo);
        let hi = phi.apply(&self.ambient_box.hi);
        Ifs::new(maps, AmbientBox::new(lo, hi)?)
    }

    /// Replaces the maps, revalidating everything (used by perturbation).
    pub fn with_maps(&self, maps: Vec<Similitude<T>>) -> Result<Ifs<T>> {
        Ifs::new(maps, self.ambient_box.clone())
    }

    /// Max corner norm of the ambient box, the Lipschitz factor relating a
    /// ratio perturbation to the sup-metric.
    pub fn box_corner_norm(&self) -> T {
        self.ambient_box
            .corners()
            .iter()
            .map(|c| norm(c))
            .fold(T::zero(), T::max)
    }
}

/// Classic example systems used across tests and documentation.
pub mod presets {
    use super::*;
    use crate::linalg::identity;

    /// Middle-thirds Cantor system `{x/3, x/3 + 2/3}` on `[0, 1]`.
    pub fn cantor<T: Scalar>() -> Ifs<T> {
        let r = cst::<T>(1.0 / 3.0);
        let maps = vec![
            Similitude::line(r, T::one(), T::zero()).unwrap(),
            Similitude::line(r, T::one(), cst::<T>(2.0 / 3.0)).unwrap(),
        ];
        Ifs::new(maps, AmbientBox::new(vec![T::zero()], vec![T::one()]).unwrap()).unwrap()
    }

    /// Two-map line system `{rx, rx + (1 - r)}` on `[0, 1]`; strongly
    /// separated for `r < 1/2` with first-level gap `1 - 2r`.
    pub fn cantor_like<T: Scalar>(r: T) -> Ifs<T> {
        let maps = vec![
            Similitude::line(r, T::one(), T::zero()).unwrap(),
            Similitude::line(r, T::one(), T::one() - r).unwrap(),
        ];
        Ifs::new(maps, AmbientBox::new(vec![T::zero()], vec![T::one()]).unwrap()).unwrap()
    }

    /// Two maps of ratio 1/4 at translations 0 and 3/4 on `[0, 1]`.
    pub fn quarters<T: Scalar>() -> Ifs<T> {
        let r = cst::<T>(0.25);
        let maps = vec![
            Similitude::line(r, T::one(), T::zero()).unwrap(),
            Similitude::line(r, T::one(), cst::<T>(0.75)).unwrap(),
        ];
        Ifs::new(maps, AmbientBox::new(vec![T::zero()], vec![T::one()]).unwrap()).unwrap()
    }

    /// Three-map planar system contracting toward the given triangle
    /// vertices with a common ratio.
    pub fn gasket<T: Scalar>(ratio: T, vertices: [[T; 2]; 3]) -> Ifs<T> {
        let maps = vertices
            .iter()
            .map(|v| {
                // Fixed point at the vertex: t = (1 - ratio) v.
                let t = vec![(T::one() - ratio) * v[0], (T::one() - ratio) * v[1]];
                Similitude::new(ratio, identity(2), t).unwrap()
            })
            .collect();
        let lo = vec![
            vertices.iter().map(|v| v[0]).fold(T::infinity(), T::min),
            vertices.iter().map(|v| v[1]).fold(T::infinity(), T::min),
        ];
        let hi = vec![
            vertices.iter().map(|v| v[0]).fold(T::neg_infinity(), T::max),
            vertices.iter().map(|v| v[1]).fold(T::neg_infinity(), T::max),
        ];
        Ifs::new(maps, AmbientBox::new(lo, hi).unwrap()).unwrap()
    }

    /// Standard gasket-0.4 instance on vertices (0,0), (1,0), (0.5,0.9).
    pub fn gasket04<T: Scalar>() -> Ifs<T> {
        gasket(
            cst::<T>(0.4),
            [
                [T::zero(), T::zero()],
                [T::one(), T::zero()],
                [cst::<T>(0.5), cst::<T>(0.9)],
            ],
        )
    }

    /// Touching system `{x/2, x/2 + 1/2}` whose first-level pieces meet;
    /// strong separation fails.
    pub fn touching<T: Scalar>() -> Ifs<T> {
        let h = cst::<T>(0.5);
        let maps = vec![
            Similitude::line(h, T::one(), T::zero()).unwrap(),
            Similitude::line(h, T::one(), h).unwrap(),
        ];
        Ifs::new(maps, AmbientBox::new(vec![T::zero()], vec![T::one()]).unwrap()).unwrap()
    }

    /// Three maps of ratio 1/3 tiling `[0, 1]`; similarity exponent 1.
    pub fn three_thirds<T: Scalar>() -> Ifs<T> {
        let r = cst::<T>(1.0 / 3.0);
        let maps = vec![
            Similitude::line(r, T::one(), T::zero()).unwrap(),
            Similitude::line(r, T::one(), r).unwrap(),
            Similitude::line(r, T::one(), r + r).unwrap(),
        ];
        Ifs::new(maps, AmbientBox::new(vec![T::zero()], vec![T::one()]).unwrap()).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::presets::*;
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn rejects_too_few_maps_and_expansions() {
        let one = vec![Similitude::line(0.5f64, 1.0, 0.0).unwrap()];
        let bx = AmbientBox::new(vec![0.0], vec![1.0]).unwrap();
        assert!(matches!(Ifs::new(one, bx.clone()), Err(Error::InvalidIfs(_))));
        let bad = vec![
            Similitude::line(0.5f64, 1.0, 0.0).unwrap(),
            Similitude::line(1.0, 1.0, 0.0).unwrap(),
        ];
        assert!(Ifs::new(bad, bx).is_err());
    }

    #[test]
    fn rejects_maps_leaving_the_box() {
        let maps = vec![
            Similitude::line(0.5f64, 1.0, 0.0).unwrap(),
            Similitude::line(0.5, 1.0, 5.0).unwrap(),
        ];
        let bx = AmbientBox::new(vec![0.0], vec![1.0]).unwrap();
        assert!(Ifs::new(maps, bx).is_err());
    }

    #[test]
    fn cantor_invariant_ball_is_unit_ball_at_origin() {
        let ifs = cantor::<f64>();
        let b = ifs.invariant_ball();
        assert_abs_diff_eq!(b.center[0], 0.0, epsilon = 1e-14);
        // max over maps of |f_i(0)| / (1 - 1/3) = (2/3) / (2/3) = 1.
        assert_abs_diff_eq!(b.radius, 1.0, epsilon = 1e-14);
        for f in ifs.maps() {
            assert!(b.contains_ball(&f.map_ball(&b)));
        }
    }

    #[test]
    fn gasket_invariant_ball_contains_vertices() {
        let ifs = gasket04::<f64>();
        let b = ifs.invariant_ball();
        for v in [[0.0, 0.0], [1.0, 0.0], [0.5, 0.9]] {
            assert!(b.contains_point(&v));
        }
        for f in ifs.maps() {
            assert!(b.contains_ball(&f.map_ball(&b)));
        }
    }

    #[test]
    fn compose_empty_word_is_identity() {
        let ifs = cantor::<f64>();
        let id = ifs.compose(&Word::empty()).unwrap();
        assert_eq!(id.ratio(), 1.0);
        assert_eq!(id.apply(&[0.37]), vec![0.37]);
    }

    #[test]
    fn compose_single_letter_and_pair() {
        let ifs = cantor::<f64>();
        let f2 = ifs.compose(&Word::from_one_based(&[2])).unwrap();
        assert_abs_diff_eq!(f2.ratio(), 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(f2.apply(&[0.0])[0], 2.0 / 3.0, epsilon = 1e-15);
        let f21 = ifs.compose(&Word::from_one_based(&[2, 1])).unwrap();
        assert_abs_diff_eq!(f21.ratio(), 1.0 / 9.0, epsilon = 1e-15);
        assert_abs_diff_eq!(f21.apply(&[0.0])[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(f21.apply(&[9.0])[0], 1.0 + 2.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn compose_rejects_out_of_range_letter() {
        let ifs = cantor::<f64>();
        let err = ifs.compose(&Word(vec![7])).unwrap_err();
        assert!(matches!(err, Error::InvalidWord { letter: 8, n: 2 }));
    }

    #[test]
    fn cylinder_weights_match_moran_exponent() {
        let ifs = cantor::<f64>();
        let s = (2.0f64).ln() / (3.0f64).ln();
        let root = ifs.cylinder(&Word::empty(), s).unwrap();
        assert_abs_diff_eq!(root.weight, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(root.hull.radius, 1.0, epsilon = 1e-14);
        let one = ifs.cylinder(&Word::from_one_based(&[1]), s).unwrap();
        assert_abs_diff_eq!(one.weight, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(one.hull.radius, 1.0 / 3.0, epsilon = 1e-14);
        let twelve = ifs.cylinder(&Word::from_one_based(&[1, 2]), s).unwrap();
        assert_abs_diff_eq!(twelve.weight, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn cylinder_children_partition_weight_and_nest() {
        let ifs = gasket04::<f64>();
        let s = (3.0f64).ln() / (1.0 / 0.4f64).ln();
        for k in 0..=4 {
            let total: f64 = words_of_length(3, k)
                .map(|w| ifs.cylinder(&w, s).unwrap().weight)
                .sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-9);
        }
        // Nesting of hulls, parent inflated by nothing.
        for w in words_of_length(3, 3) {
            let parent = ifs.cylinder(&w, s).unwrap();
            for l in 0..3u8 {
                let child = ifs.cylinder(&w.child(l), s).unwrap();
                let gap = dist(&parent.hull.center, &child.hull.center) + child.hull.radius;
                assert!(gap <= parent.hull.radius + 1e-12);
            }
        }
    }

    #[test]
    fn attractor_sample_depths() {
        let ifs = cantor::<f64>();
        let d0 = ifs.attractor_sample(0).unwrap();
        assert_eq!(d0, vec![vec![0.0]]);
        let d1 = ifs.attractor_sample(1).unwrap();
        assert_eq!(d1, vec![vec![0.0], vec![2.0 / 3.0]]);
        let d2: Vec<f64> = ifs.attractor_sample(2).unwrap().into_iter().map(|p| p[0]).collect();
        let expect = [0.0, 2.0 / 9.0, 2.0 / 3.0, 8.0 / 9.0];
        for (got, want) in d2.iter().zip(expect) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-15);
        }
        assert!(matches!(
            ifs.attractor_sample_capped(40, 1024),
            Err(Error::BudgetExceeded(_))
        ));
    }

    #[test]
    fn distance_detects_translation_and_ratio_changes() {
        let f = cantor::<f64>();
        assert_eq!(f.distance(&f).unwrap(), 0.0);

        let mut maps = f.maps().to_vec();
        maps[1] = Similitude::line(1.0 / 3.0, 1.0, 2.0 / 3.0 - 0.01).unwrap();
        let g = f.with_maps(maps).unwrap();
        assert_abs_diff_eq!(f.distance(&g).unwrap(), 0.01, epsilon = 1e-14);

        let mut maps = f.maps().to_vec();
        maps[0] = Similitude::line(0.34, 1.0, 0.0).unwrap();
        let h = f.with_maps(maps).unwrap();
        assert_abs_diff_eq!(f.distance(&h).unwrap(), 0.34 - 1.0 / 3.0, epsilon = 1e-14);

        let gk = gasket04::<f64>();
        assert!(matches!(
            f.distance(&gk),
            Err(Error::IncompatibleSystems(_))
        ));
    }

    #[test]
    fn distance_metric_axioms_on_random_triples() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let base = cantor::<f64>();
        let jitter = |rng: &mut rand_chacha::ChaCha8Rng| {
            // Jitter keeping every map inside [0,1]: f(x) = r x + t needs t >= 0
            // and r + t <= 1.
            let r1 = 1.0 / 3.0 + rng.gen_range(-0.05..0.05);
            let r2 = 1.0 / 3.0 + rng.gen_range(-0.05..0.05);
            let maps = vec![
                Similitude::line(r1, 1.0, rng.gen_range(0.0..0.05)).unwrap(),
                Similitude::line(r2, 1.0, 1.0 - r2 - rng.gen_range(0.0..0.05)).unwrap(),
            ];
            base.with_maps(maps).unwrap()
        };
        for _ in 0..50 {
            let a = jitter(&mut rng);
            let b = jitter(&mut rng);
            let c = jitter(&mut rng);
            let dab = a.distance(&b).unwrap();
            let dba = b.distance(&a).unwrap();
            assert_abs_diff_eq!(dab, dba, epsilon = 1e-12);
            let dac = a.distance(&c).unwrap();
            let dcb = c.distance(&b).unwrap();
            assert!(dab <= dac + dcb + 1e-12);
        }
    }

    #[test]
    fn composition_ratio_is_multiplicative() {
        let ifs = gasket04::<f64>();
        let u = Word(vec![0, 2, 1]);
        let v = Word(vec![2, 2]);
        let ru = ifs.compose(&u).unwrap().ratio();
        let rv = ifs.compose(&v).unwrap().ratio();
        let ruv = ifs.compose(&u.concat(&v)).unwrap().ratio();
        assert!((ruv - ru * rv).abs() <= 1e-12 * ruv);
    }

    #[test]
    fn conjugation_scales_geometry() {
        let f = cantor::<f64>();
        let g = f.conjugate_scaled(2.0, &[0.0]).unwrap();
        assert_abs_diff_eq!(g.invariant_ball().radius, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.maps()[1].apply(&[0.0])[0], 4.0 / 3.0, epsilon = 1e-14);
        assert_eq!(g.ambient_box().hi[0], 2.0);
    }
}
