//! Deformed Wigner model: the map `H(u) = u + sigma^2 g_nu(u)`, the set of
//! spikes that generate outliers, outlier locations, eigenvector overlaps,
//! and the support and density of the semicircle-deformed limiting law.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{AtomicMeasure, ComplexPoint, MERGE_TOL};
use crate::solve::{self, bisect, FixedPointEquation, FixedPointOptions};

/// Criterion values within this distance of the threshold count as sticking.
pub const BOUNDARY_TOL: f64 = 1e-12;

/// Default imaginary offset used for Stieltjes inversion.
pub const DEFAULT_EPS: f64 = 1e-6;

/// An open interval, possibly unbounded on either side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpenInterval {
    pub lo: f64,
    pub hi: f64,
}

impl OpenInterval {
    pub fn contains(&self, x: f64) -> bool {
        x > self.lo && x < self.hi
    }
}

/// Closed, pairwise disjoint intervals sorted by their lower end.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SupportIntervals {
    pub intervals: Vec<(f64, f64)>,
}

impl SupportIntervals {
    /// The closed set `domain` minus the union of the open intervals `removed`.
    pub(crate) fn complement(domain: (f64, f64), mut removed: Vec<OpenInterval>) -> Self {
        removed.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        let (mut cursor, end) = domain;
        let mut intervals = Vec::new();
        for gap in removed {
            if gap.hi <= cursor {
                continue;
            }
            if gap.lo >= end {
                break;
            }
            if gap.lo > cursor {
                intervals.push((cursor, gap.lo));
            }
            cursor = cursor.max(gap.hi);
        }
        if cursor < end {
            intervals.push((cursor, end));
        }
        intervals.retain(|&(lo, hi)| lo.is_finite() && hi.is_finite());
        Self { intervals }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.intervals.iter().any(|&(lo, hi)| x >= lo && x <= hi)
    }

    /// Distance from `x` to the set (zero inside).
    pub fn distance(&self, x: f64) -> f64 {
        self.intervals
            .iter()
            .map(|&(lo, hi)| {
                if x < lo {
                    lo - x
                } else if x > hi {
                    x - hi
                } else {
                    0.0
                }
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn lower(&self) -> Option<f64> {
        self.intervals.first().map(|i| i.0)
    }

    pub fn upper(&self) -> Option<f64> {
        self.intervals.last().map(|i| i.1)
    }
}

/// Classification of one spike of the perturbation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeVerdict {
    pub theta: f64,
    pub multiplicity: usize,
    pub is_outlier: bool,
    /// Limit of the outlier eigenvalues.
    pub rho: Option<f64>,
    /// Limit of the squared projection of an outlier eigenvector onto the spike eigenspace.
    pub tau: Option<f64>,
    /// `H'(theta)` for the additive model, `W(theta)` for the multiplicative one.
    pub criterion_value: f64,
}

/// A limiting spectral measure `nu` of the perturbation together with the
/// variance `sigma2` of the Wigner entries.
#[derive(Debug, Clone, PartialEq)]
pub struct AdditiveContext {
    nu: AtomicMeasure,
    sigma2: f64,
}

impl AdditiveContext {
    pub fn new(nu: AtomicMeasure, sigma2: f64) -> Result<Self> {
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(Error::Domain(format!("sigma2 = {sigma2} must be positive")));
        }
        Ok(Self { nu, sigma2 })
    }

    pub fn nu(&self) -> &AtomicMeasure {
        &self.nu
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    fn check_off_atoms(&self, u: f64) -> Result<()> {
        if self.nu.is_atom(u) {
            return Err(Error::Domain(format!("{u} is an atom of nu")));
        }
        Ok(())
    }

    /// `H(u) = u + sigma^2 sum_i w_i / (u - t_i)`.
    pub fn h(&self, u: f64) -> Result<f64> {
        self.check_off_atoms(u)?;
        Ok(self.h_unchecked(u))
    }

    /// `H'(u) = 1 - sigma^2 sum_i w_i / (u - t_i)^2`.
    pub fn h_prime(&self, u: f64) -> Result<f64> {
        self.check_off_atoms(u)?;
        Ok(self.h_prime_unchecked(u))
    }

    fn h_unchecked(&self, u: f64) -> f64 {
        u + self.sigma2 * self.nu.integrate(|t| 1.0 / (u - t))
    }

    fn h_prime_unchecked(&self, u: f64) -> f64 {
        1.0 - self.sigma2 * self.nu.integrate(|t| (u - t).powi(-2))
    }

    fn h_second_unchecked(&self, u: f64) -> f64 {
        2.0 * self.sigma2 * self.nu.integrate(|t| (u - t).powi(-3))
    }

    /// Outlier iff `H'(theta) > 0`; then `rho = H(theta)` and `tau = H'(theta)`.
    pub fn classify_spike(&self, theta: f64, multiplicity: usize) -> Result<SpikeVerdict> {
        if multiplicity == 0 {
            return Err(Error::Domain("spike multiplicity must be positive".into()));
        }
        if !theta.is_finite() || self.nu.distance_to_support(theta) <= MERGE_TOL {
            return Err(Error::Domain(format!("spike {theta} lies in the support of nu")));
        }
        let d = self.h_prime_unchecked(theta);
        let is_outlier = d > BOUNDARY_TOL;
        Ok(SpikeVerdict {
            theta,
            multiplicity,
            is_outlier,
            rho: is_outlier.then(|| self.h_unchecked(theta)),
            tau: is_outlier.then_some(d),
            criterion_value: d,
        })
    }

    /// Maximal open intervals of `{u off supp nu : H'(u) > 0}`.
    ///
    /// `H'` is strictly concave on every gap between atoms, increasing to 1 at
    /// `+inf` and decreasing from 1 at `-inf`; each gap therefore contributes
    /// at most one interval, found by bisection.
    pub fn outlier_set_intervals(&self) -> Vec<OpenInterval> {
        let locs: Vec<f64> = self.nu.locations().collect();
        let sigma = self.sigma2.sqrt();
        let hp = |u: f64| self.h_prime_unchecked(u);
        let mut out = Vec::with_capacity(locs.len() + 1);

        let first = locs[0];
        let mut step = sigma;
        while hp(first - step) < 0.0 {
            step *= 2.0;
        }
        out.push(OpenInterval {
            lo: f64::NEG_INFINITY,
            hi: bisect(hp, first - step, first, false),
        });

        for pair in locs.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let peak = bisect(|u| self.h_second_unchecked(u), a, b, false);
            if hp(peak) > 0.0 {
                out.push(OpenInterval {
                    lo: bisect(hp, a, peak, true),
                    hi: bisect(hp, peak, b, false),
                });
            }
        }

        let last = locs[locs.len() - 1];
        let mut step = sigma;
        while hp(last + step) < 0.0 {
            step *= 2.0;
        }
        out.push(OpenInterval {
            lo: bisect(hp, last, last + step, true),
            hi: f64::INFINITY,
        });
        out
    }

    /// Support of the limiting law: the real line minus `H` of the outlier set.
    pub fn support(&self) -> SupportIntervals {
        let removed = self
            .outlier_set_intervals()
            .into_iter()
            .map(|iv| OpenInterval {
                lo: if iv.lo.is_finite() { self.h_unchecked(iv.lo) } else { f64::NEG_INFINITY },
                hi: if iv.hi.is_finite() { self.h_unchecked(iv.hi) } else { f64::INFINITY },
            })
            .collect();
        SupportIntervals::complement((f64::NEG_INFINITY, f64::INFINITY), removed)
    }

    /// Stieltjes transform of the limiting law, solving
    /// `g = g_nu(z - sigma^2 g)` for `z` in the upper half-plane.
    pub fn subordinated_g(&self, z: ComplexPoint, opts: &FixedPointOptions) -> Result<ComplexPoint> {
        solve::solve(&AdditiveEquation { ctx: self }, z, opts)
    }

    /// The subordination function `F(z) = z - sigma^2 g(z)`.
    pub fn subordination(&self, z: ComplexPoint, opts: &FixedPointOptions) -> Result<ComplexPoint> {
        Ok(z - self.sigma2 * self.subordinated_g(z, opts)?)
    }

    /// Density `-Im g(x + i eps) / pi` at each grid point. The inversion bias is `O(eps)`.
    pub fn density(&self, grid: &[f64], eps: f64, opts: &FixedPointOptions) -> Result<Vec<(f64, f64)>> {
        if !(eps > 0.0) {
            return Err(Error::Domain(format!("eps = {eps} must be positive")));
        }
        grid.iter()
            .enumerate()
            .map(|(index, &x)| {
                let g = self
                    .subordinated_g(Complex64::new(x, eps), opts)
                    .map_err(|e| Error::GridConvergence { index, x, source: Box::new(e) })?;
                Ok((x, (-g.im / std::f64::consts::PI).max(0.0)))
            })
            .collect()
    }
}

struct AdditiveEquation<'a> {
    ctx: &'a AdditiveContext,
}

impl FixedPointEquation for AdditiveEquation<'_> {
    fn map(&self, z: Complex64, g: Complex64) -> Complex64 {
        let w = z - self.ctx.sigma2 * g;
        self.ctx.nu.integrate_complex(|t| 1.0 / (w - t))
    }

    fn derivative(&self, z: Complex64, g: Complex64) -> Complex64 {
        let w = z - self.ctx.sigma2 * g;
        self.ctx.sigma2 * self.ctx.nu.integrate_complex(|t| 1.0 / ((w - t) * (w - t)))
    }

    fn admissible(&self, _z: Complex64, g: Complex64) -> bool {
        g.im < 0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_atom_ctx() -> AdditiveContext {
        AdditiveContext::new(AtomicMeasure::new([(1.0, 0.5), (-1.0, 0.5)]).unwrap(), 0.5).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    /// Semicircle Stieltjes transform of variance `s2`, shifted to `a`.
    fn semicircle_g(z: Complex64, a: f64, s2: f64) -> Complex64 {
        let w = z - a;
        let r = 2.0 * s2.sqrt();
        (w - (w - r).sqrt() * (w + r).sqrt()) / (2.0 * s2)
    }

    #[test]
    fn h_values() {
        let ctx = two_atom_ctx();
        assert!(close(ctx.h(2.0).unwrap(), 7.0 / 3.0, 1e-14));
        assert!(close(ctx.h(0.0).unwrap(), 0.0, 1e-14));
        let ctx0 = AdditiveContext::new(AtomicMeasure::dirac(0.0), 1.0).unwrap();
        for theta in [0.5, 1.3, -2.0, 7.0] {
            assert!(close(ctx0.h(theta).unwrap(), theta + 1.0 / theta, 1e-13));
        }
        assert!(ctx.h(1.0).is_err());
    }

    #[test]
    fn h_prime_values() {
        let ctx = two_atom_ctx();
        assert!(close(ctx.h_prime(2.0).unwrap(), 13.0 / 18.0, 1e-14));
        assert!(close(ctx.h_prime(0.0).unwrap(), 0.5, 1e-14));
        // 1 - (1/4)/(1/2)^2 - (1/4)/(5/2)^2
        assert!(close(ctx.h_prime(1.5).unwrap(), -1.0 / 25.0, 1e-14));
        assert!(ctx.h_prime(-1.0).is_err());
    }

    #[test]
    fn classify_examples() {
        let ctx = two_atom_ctx();
        let v = ctx.classify_spike(2.0, 1).unwrap();
        assert!(v.is_outlier);
        assert!(close(v.rho.unwrap(), 7.0 / 3.0, 1e-14));
        assert!(close(v.tau.unwrap(), 13.0 / 18.0, 1e-14));

        let v = ctx.classify_spike(1.5, 1).unwrap();
        assert!(!v.is_outlier && v.rho.is_none() && v.tau.is_none());
        assert!(v.criterion_value < 0.0);

        let ctx0 = AdditiveContext::new(AtomicMeasure::dirac(0.0), 1.0).unwrap();
        let v = ctx0.classify_spike(1.0, 1).unwrap();
        assert!(!v.is_outlier);
        assert_eq!(v.criterion_value, 0.0);

        assert!(ctx.classify_spike(1.0, 1).is_err());
        assert!(ctx.classify_spike(2.0, 0).is_err());
    }

    #[test]
    fn outlier_set_dirac() {
        for (a, s2) in [(0.0, 1.0), (1.5, 0.25), (-2.0, 4.0)] {
            let ctx = AdditiveContext::new(AtomicMeasure::dirac(a), s2).unwrap();
            let s = f64::sqrt(s2);
            let iv = ctx.outlier_set_intervals();
            assert_eq!(iv.len(), 2);
            assert_eq!(iv[0].lo, f64::NEG_INFINITY);
            assert!(close(iv[0].hi, a - s, 1e-11));
            assert!(close(iv[1].lo, a + s, 1e-11));
            assert_eq!(iv[1].hi, f64::INFINITY);
        }
    }

    #[test]
    fn outlier_set_two_atom_example() {
        let iv = two_atom_ctx().outlier_set_intervals();
        assert_eq!(iv.len(), 3);
        assert_eq!(iv.iter().filter(|i| i.contains(0.0)).count(), 1);
        assert_eq!(iv.iter().filter(|i| i.contains(2.0)).count(), 1);
        assert!(iv.iter().all(|i| !i.contains(1.5)));
    }

    #[test]
    fn support_semicircle() {
        for (a, s2) in [(0.0, 1.0), (0.0, 0.3), (2.5, 2.0)] {
            let ctx = AdditiveContext::new(AtomicMeasure::dirac(a), s2).unwrap();
            let s = ctx.support();
            let r = 2.0 * f64::sqrt(s2);
            assert_eq!(s.intervals.len(), 1);
            assert!(close(s.intervals[0].0, a - r, 1e-8));
            assert!(close(s.intervals[0].1, a + r, 1e-8));
        }
    }

    #[test]
    fn support_two_atom_example_symmetric() {
        let s = two_atom_ctx().support();
        assert_eq!(s.intervals.len(), 2);
        let (l, r) = (s.intervals[0], s.intervals[1]);
        assert!(close(l.0, -r.1, 1e-9) && close(l.1, -r.0, 1e-9));
        assert!(l.1 < 0.0 && r.0 > 0.0);
        assert!(r.1 < 7.0 / 3.0);
    }

    #[test]
    fn subordinated_g_examples() {
        let ctx = AdditiveContext::new(AtomicMeasure::dirac(0.0), 1.0).unwrap();
        let opts = FixedPointOptions::default();
        let g = ctx.subordinated_g(Complex64::new(0.0, 2.0), &opts).unwrap();
        assert!((g - Complex64::new(0.0, 1.0 - 2f64.sqrt())).norm() < 1e-11);

        let ctx = AdditiveContext::new(AtomicMeasure::dirac(0.7), 0.5).unwrap();
        let mut worst: f64 = 0.0;
        for re in [-2.0, -0.3, 0.1, 0.7, 1.5, 3.0] {
            for im in [1e-3, 0.1, 1.0] {
                let z = Complex64::new(re, im);
                let g = ctx.subordinated_g(z, &opts).unwrap();
                worst = worst.max((g - semicircle_g(z, 0.7, 0.5)).norm());
            }
        }
        assert!(worst < 10.0 * opts.tol, "worst {worst}");

        let ctx = two_atom_ctx();
        for eps in [1e-4, 1e-6, 1e-8] {
            let f = ctx.subordination(Complex64::new(7.0 / 3.0, eps), &opts).unwrap();
            assert!((f - Complex64::new(2.0, 0.0)).norm() < 10.0 * eps + 1e-9);
        }
    }

    #[test]
    fn density_semicircle_center_and_outside() {
        let ctx = AdditiveContext::new(AtomicMeasure::dirac(0.0), 1.0).unwrap();
        let d = ctx.density(&[0.0, 3.0], 1e-6, &FixedPointOptions::default()).unwrap();
        assert!(close(d[0].1, 1.0 / std::f64::consts::PI, 1e-6));
        assert!(d[1].1 < 1e-6);
        assert!(ctx.density(&[0.0], 0.0, &FixedPointOptions::default()).is_err());
    }

    #[test]
    fn density_integrates_to_one() {
        let ctx = two_atom_ctx();
        let n = 4001;
        let grid: Vec<f64> = (0..n).map(|i| -3.0 + 6.0 * i as f64 / (n - 1) as f64).collect();
        let d = ctx.density(&grid, 1e-6, &FixedPointOptions::default()).unwrap();
        let h = grid[1] - grid[0];
        let mass: f64 = d.windows(2).map(|w| 0.5 * h * (w[0].1 + w[1].1)).sum();
        assert!(close(mass, 1.0, 5e-3), "mass {mass}");
        for (i, &(x, f)) in d.iter().enumerate() {
            let (xm, fm) = d[n - 1 - i];
            assert!(close(x, -xm, 1e-12));
            assert!(close(f, fm, 1e-8), "asymmetry at {x}: {f} vs {fm}");
        }
    }

    #[test]
    fn convergence_error_reports_grid_index() {
        let ctx = two_atom_ctx();
        let opts = FixedPointOptions::default().with_max_iter(1).with_tol(1e-300);
        let err = ctx.density(&[0.5, 0.5], 1e-6, &opts).unwrap_err();
        assert!(matches!(err, Error::GridConvergence { index: 0, .. }));
        let err = ctx.density(&[0.3, 0.5], 1e-6, &opts).unwrap_err();
        assert!(matches!(err, Error::GridConvergence { index: 1, .. }));
        assert!(err.is_convergence());
    }

    fn arb_ctx() -> impl Strategy<Value = AdditiveContext> {
        (
            prop::collection::vec((-4.0f64..4.0, 0.05f64..1.0), 1..6),
            0.05f64..2.0,
        )
            .prop_map(|(pairs, s2)| {
                let total: f64 = pairs.iter().map(|p| p.1).sum();
                let nu = AtomicMeasure::new(pairs.into_iter().map(|(t, w)| (t, w / total))).unwrap();
                AdditiveContext::new(nu, s2).unwrap()
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn h_prime_vanishes_at_interval_ends(ctx in arb_ctx()) {
            for iv in ctx.outlier_set_intervals() {
                for end in [iv.lo, iv.hi] {
                    if end.is_finite() {
                        prop_assert!(ctx.h_prime_unchecked(end).abs() < 1e-6);
                    }
                }
                let mid = if iv.lo.is_finite() && iv.hi.is_finite() {
                    0.5 * (iv.lo + iv.hi)
                } else if iv.lo.is_finite() { iv.lo + 1.0 } else { iv.hi - 1.0 };
                prop_assert!(ctx.h_prime_unchecked(mid) > 0.0);
            }
        }

        #[test]
        fn h_prime_concave_per_gap(ctx in arb_ctx(), s in 0.01f64..0.98, step in 1e-3f64..0.01) {
            let locs: Vec<f64> = ctx.nu().locations().collect();
            for pair in locs.windows(2) {
                let width = pair[1] - pair[0];
                let b = pair[0] + s * width;
                let d = step * width;
                if b - d <= pair[0] || b + d >= pair[1] { continue; }
                let second = ctx.h_prime_unchecked(b - d) - 2.0 * ctx.h_prime_unchecked(b) + ctx.h_prime_unchecked(b + d);
                prop_assert!(second <= 1e-9 * (1.0 + ctx.h_prime_unchecked(b).abs()));
            }
        }

        #[test]
        fn tau_in_unit_interval(ctx in arb_ctx(), theta in 4.5f64..50.0) {
            let v = ctx.classify_spike(theta, 1).unwrap();
            if v.is_outlier {
                let tau = v.tau.unwrap();
                prop_assert!(tau > 0.0 && tau < 1.0);
            }
        }
    }

    #[test]
    fn tau_tends_to_one() {
        let ctx = two_atom_ctx();
        let taus: Vec<f64> = [3.0, 10.0, 100.0, 1e4]
            .iter()
            .map(|&t| ctx.classify_spike(t, 1).unwrap().tau.unwrap())
            .collect();
        assert!(taus.windows(2).all(|w| w[0] < w[1]));
        assert!(1.0 - taus[3] < 1e-8);
    }
}
