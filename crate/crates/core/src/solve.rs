//! Scalar root bracketing and complex fixed-point iteration shared by the
//! additive and multiplicative analytics.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Bracket width at which bisection stops.
pub const BISECT_TOL: f64 = 1e-12;
/// Hard cap on bisection steps.
pub const BISECT_MAX_ITER: usize = 200;

/// Bisection on an open bracket `(lo, hi)` whose endpoints may be poles.
///
/// `negative_at_lo` states the sign of `f` just right of `lo`; the opposite sign
/// is assumed just left of `hi`. Only interior midpoints are evaluated.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, negative_at_lo: bool) -> f64 {
    for _ in 0..BISECT_MAX_ITER {
        if hi - lo <= BISECT_TOL {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = f(mid);
        if v == 0.0 {
            return mid;
        }
        if (v < 0.0) == negative_at_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Solver settings for the self-consistent equations `g = map(g)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointOptions {
    /// Picard relaxation in `(0, 1]`.
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self {
            damping: 0.5,
            tol: 1e-12,
            max_iter: 10_000,
        }
    }
}

impl FixedPointOptions {
    pub fn with_tol(self, tol: f64) -> Self {
        Self { tol, ..self }
    }

    pub fn with_max_iter(self, max_iter: usize) -> Self {
        Self { max_iter, ..self }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::Domain(format!("damping {} not in (0, 1]", self.damping)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Domain(format!("tolerance {} must be positive", self.tol)));
        }
        Ok(())
    }
}

/// The self-consistent equation `g = map(z, g)` for a spectral variable `z`,
/// with the derivative in `g` used by the continuation fallback.
pub(crate) trait FixedPointEquation {
    fn map(&self, z: Complex64, g: Complex64) -> Complex64;
    fn derivative(&self, z: Complex64, g: Complex64) -> Complex64;
    /// Whether `g` lies in the branch that is the Stieltjes transform.
    fn admissible(&self, z: Complex64, g: Complex64) -> bool;
}

fn residual<E: FixedPointEquation>(eq: &E, z: Complex64, g: Complex64) -> f64 {
    (g - eq.map(z, g)).norm()
}

/// Residual threshold, relative once `|g|` exceeds one so that large values
/// of `g` near a pole at the origin are not held below rounding error.
fn threshold(tol: f64, g: Complex64) -> f64 {
    tol * g.norm().max(1.0)
}

/// Damped Picard iteration from `1/z`.
///
/// Near the real axis, at points of the bulk close to a spectral edge, the
/// iteration contracts arbitrarily slowly, and inside gaps it may be drawn to
/// a root off the Stieltjes branch. In either case the solution is tracked
/// instead from far up the vertical line through `z`, with Newton steps at
/// each level.
pub(crate) fn solve<E: FixedPointEquation>(
    eq: &E,
    z: Complex64,
    opts: &FixedPointOptions,
) -> Result<Complex64> {
    opts.validate()?;
    if !(z.im > 0.0) {
        return Err(Error::Domain(format!("spectral variable {z} must lie in the upper half-plane")));
    }
    let lambda = opts.damping;
    let mut g = 1.0 / z;
    let mut res = f64::INFINITY;
    for _ in 0..opts.max_iter {
        let next = eq.map(z, g);
        res = (g - next).norm();
        if !res.is_finite() {
            break;
        }
        if res < threshold(opts.tol, g) {
            if eq.admissible(z, g) {
                return Ok(polish(eq, z, g));
            }
            break;
        }
        g = (1.0 - lambda) * g + lambda * next;
    }

    match continuation(eq, z, opts) {
        Some(g) => Ok(g),
        None => Err(Error::Convergence {
            residual: res,
            iterations: opts.max_iter,
        }),
    }
}

/// Two Newton steps on a converged iterate; the error of a Picard iterate is
/// its residual divided by `|1 - map'(g)|`, which is small near the bulk.
fn polish<E: FixedPointEquation>(eq: &E, z: Complex64, mut g: Complex64) -> Complex64 {
    for _ in 0..2 {
        let f = g - eq.map(z, g);
        let df = Complex64::new(1.0, 0.0) - eq.derivative(z, g);
        let cand = g - f / df;
        if !(cand.is_finite() && eq.admissible(z, cand)) || residual(eq, z, cand) > f.norm() {
            break;
        }
        g = cand;
    }
    g
}

const NEWTON_MAX_ITER: usize = 60;
const MAX_SUBDIVISIONS: usize = 40;

fn newton<E: FixedPointEquation>(
    eq: &E,
    z: Complex64,
    start: Complex64,
    tol: f64,
) -> Option<Complex64> {
    let mut g = start;
    for _ in 0..NEWTON_MAX_ITER {
        let f = g - eq.map(z, g);
        if f.norm() < threshold(tol, g) {
            return eq.admissible(z, g).then_some(g);
        }
        let df = Complex64::new(1.0, 0.0) - eq.derivative(z, g);
        if df.norm() == 0.0 || !df.is_finite() {
            return None;
        }
        let step = f / df;
        // halve the step until it stays on the admissible branch
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let cand = g - t * step;
            if cand.is_finite() && eq.admissible(z, cand) {
                accepted = Some(cand);
                break;
            }
            t *= 0.5;
        }
        g = accepted?;
    }
    (residual(eq, z, g) < threshold(tol, g) && eq.admissible(z, g)).then_some(g)
}

fn continuation<E: FixedPointEquation>(
    eq: &E,
    z: Complex64,
    opts: &FixedPointOptions,
) -> Option<Complex64> {
    let target = z.im;
    // high enough that 1/z is within Newton range of the Stieltjes branch
    let mut y = (1e4 * (1.0 + z.re.abs())).max(target);
    let g = newton(eq, Complex64::new(z.re, y), 1.0 / Complex64::new(z.re, y), opts.tol)?;
    let mut g = g;

    let mut ratio: f64 = 0.5;
    let mut failures = 0;
    while y > target {
        let next_y = (y * ratio).max(target);
        let here = Complex64::new(z.re, y);
        let next_z = Complex64::new(z.re, next_y);
        // first guess follows a pole at the origin, which also matches 1/z far out
        let step = newton(eq, next_z, g * here / next_z, opts.tol).or_else(|| newton(eq, next_z, g, opts.tol));
        match step {
            Some(next_g) => {
                g = next_g;
                y = next_y;
                ratio = (ratio * ratio.sqrt()).clamp(0.05, 0.5);
            }
            None => {
                failures += 1;
                if failures > MAX_SUBDIVISIONS {
                    return None;
                }
                ratio = ratio.sqrt().min(0.999);
            }
        }
    }
    Some(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_finds_sqrt2() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, true);
        assert!((r - 2f64.sqrt()).abs() < 1e-11);
        let r = bisect(|x| 2.0 - x * x, 0.0, 2.0, false);
        assert!((r - 2f64.sqrt()).abs() < 1e-11);
    }

    #[test]
    fn bisect_never_touches_endpoints() {
        // pole at 0 and at 1
        let f = |x: f64| {
            assert!(x > 0.0 && x < 1.0);
            1.0 - 0.01 / (x * x)
        };
        let r = bisect(f, 0.0, 1.0, true);
        assert!((r - 0.1).abs() < 1e-11);
    }

    struct Semicircle;

    impl FixedPointEquation for Semicircle {
        fn map(&self, z: Complex64, g: Complex64) -> Complex64 {
            1.0 / (z - g)
        }
        fn derivative(&self, z: Complex64, g: Complex64) -> Complex64 {
            1.0 / ((z - g) * (z - g))
        }
        fn admissible(&self, _z: Complex64, g: Complex64) -> bool {
            g.im < 0.0
        }
    }

    fn closed_form(z: Complex64) -> Complex64 {
        (z - (z - 2.0).sqrt() * (z + 2.0).sqrt()) / 2.0
    }

    #[test]
    fn picard_matches_closed_form() {
        let z = Complex64::new(0.3, 0.5);
        let g = solve(&Semicircle, z, &FixedPointOptions::default()).unwrap();
        assert!((g - closed_form(z)).norm() < 1e-11);
    }

    #[test]
    fn continuation_handles_spectral_edge() {
        for x in [2.0, -2.0, 1.9999, 2.0001] {
            let z = Complex64::new(x, 1e-6);
            let g = solve(&Semicircle, z, &FixedPointOptions::default()).unwrap();
            assert!((g - closed_form(z)).norm() < 1e-8, "x = {x}");
        }
    }

    #[test]
    fn rejects_bad_options() {
        let z = Complex64::new(0.0, 1.0);
        let opts = FixedPointOptions { damping: 0.0, ..Default::default() };
        assert!(solve(&Semicircle, z, &opts).is_err());
        assert!(solve(&Semicircle, Complex64::new(0.0, -1.0), &FixedPointOptions::default()).is_err());
    }
}
