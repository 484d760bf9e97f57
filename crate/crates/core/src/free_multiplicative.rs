//! Spiked sample covariance model: the Marchenko-Pastur law, the map
//! `Z(x) = 1/x + c sum_i w_i t_i / (1 - t_i x)`, spike classification through
//! `W(u) = c sum_i w_i t_i^2 / (u - t_i)^2`, outlier locations and overlaps,
//! and the support, atom at zero and density of the limiting law.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::free_additive::{OpenInterval, SpikeVerdict, SupportIntervals, BOUNDARY_TOL};
use crate::measure::{AtomicMeasure, ComplexPoint, MERGE_TOL};
use crate::solve::{self, bisect, FixedPointEquation, FixedPointOptions};

/// Marchenko-Pastur density of ratio `c` (variance one) at `x > 0`.
///
/// The atom `max(1 - 1/c, 0)` at zero is not included.
pub fn mp_density(c: f64, x: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::Domain(format!("ratio c = {c} must be positive")));
    }
    if !(x > 0.0) {
        return Err(Error::Domain(format!("Marchenko-Pastur density evaluated at {x} <= 0")));
    }
    let lo = (1.0 - c.sqrt()).powi(2);
    let hi = (1.0 + c.sqrt()).powi(2);
    if x <= lo || x >= hi {
        return Ok(0.0);
    }
    Ok(((x - lo) * (hi - x)).sqrt() / (2.0 * PI * c * x))
}

/// A limiting spectral measure `nu` on `[0, inf)` and the ratio `c = lim N/p`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplicativeContext {
    nu: AtomicMeasure,
    c: f64,
}

impl MultiplicativeContext {
    pub fn new(nu: AtomicMeasure, c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::Domain(format!("ratio c = {c} must be positive")));
        }
        if nu.min_location() < 0.0 {
            return Err(Error::Domain(format!(
                "nu has an atom at {} < 0; the multiplicative model needs nu on [0, inf)",
                nu.min_location()
            )));
        }
        Ok(Self { nu, c })
    }

    pub fn nu(&self) -> &AtomicMeasure {
        &self.nu
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// `Z(x) = 1/x + c sum_i w_i t_i / (1 - t_i x)`.
    pub fn z(&self, x: f64) -> Result<f64> {
        if x == 0.0 || !x.is_finite() {
            return Err(Error::Domain(format!("Z evaluated at {x}")));
        }
        if self.nu.is_atom(1.0 / x) {
            return Err(Error::Domain(format!("Z has a pole at {x}")));
        }
        Ok(1.0 / x + self.c * self.nu.integrate(|t| t / (1.0 - t * x)))
    }

    /// `Z'(x) = -1/x^2 + c sum_i w_i t_i^2 / (1 - t_i x)^2`.
    pub fn z_prime(&self, x: f64) -> Result<f64> {
        self.z(x)?;
        Ok(-1.0 / (x * x) + self.c * self.nu.integrate(|t| (t / (1.0 - t * x)).powi(2)))
    }

    /// `W(u) = c sum_i w_i t_i^2 / (u - t_i)^2`; `W(u) < 1` iff `Z'(1/u) < 0`.
    pub fn w(&self, u: f64) -> Result<f64> {
        if u == 0.0 || !u.is_finite() {
            return Err(Error::Domain(format!("W evaluated at {u}")));
        }
        if self.nu.is_atom(u) {
            return Err(Error::Domain(format!("{u} is an atom of nu")));
        }
        Ok(self.w_unchecked(u))
    }

    fn w_unchecked(&self, u: f64) -> f64 {
        self.c * self.nu.integrate(|t| (t / (u - t)).powi(2))
    }

    fn w_prime_unchecked(&self, u: f64) -> f64 {
        -2.0 * self.c * self.nu.integrate(|t| t * t / (u - t).powi(3))
    }

    /// `u -> Z(1/u) = u + c sum_i w_i t_i u / (u - t_i)`, extended by 0 at `u = 0`.
    fn z_of_inverse(&self, u: f64) -> f64 {
        if u == 0.0 {
            return 0.0;
        }
        u + self.c * self.nu.integrate(|t| t * u / (u - t))
    }

    /// Outlier iff `W(theta) < 1`; then `rho = Z(1/theta)` and
    /// `tau = (1 - W(theta)) / (1 + c sum_i w_i t_i / (theta - t_i))`.
    pub fn classify_spike(&self, theta: f64, multiplicity: usize) -> Result<SpikeVerdict> {
        if multiplicity == 0 {
            return Err(Error::Domain("spike multiplicity must be positive".into()));
        }
        if !(theta.is_finite() && theta > 0.0) {
            return Err(Error::Domain(format!("spike {theta} must be positive")));
        }
        if self.nu.distance_to_support(theta) <= MERGE_TOL {
            return Err(Error::Domain(format!("spike {theta} lies in the support of nu")));
        }
        let w = self.w_unchecked(theta);
        let is_outlier = 1.0 - w > BOUNDARY_TOL;
        let (rho, tau) = if is_outlier {
            let rho = self.z_of_inverse(theta);
            if rho == 0.0 {
                return Err(Error::DegenerateOutlier { theta });
            }
            let denom = 1.0 + self.c * self.nu.integrate(|t| t / (theta - t));
            (Some(rho), Some((1.0 - w) / denom))
        } else {
            (None, None)
        };
        Ok(SpikeVerdict {
            theta,
            multiplicity,
            is_outlier,
            rho,
            tau,
            criterion_value: w,
        })
    }

    /// `{u != 0 off supp nu : W(u) < 1}` on the whole line.
    ///
    /// `W` is increasing on `(-inf, 0]` up to `c (1 - nu({0}))`, increasing on
    /// the first positive gap, strictly convex between positive atoms and
    /// decreasing to zero right of the largest atom.
    fn full_outlier_set(&self) -> Vec<OpenInterval> {
        let positive: Vec<f64> = self.nu.locations().filter(|&t| t > MERGE_TOL).collect();
        if positive.is_empty() {
            return vec![
                OpenInterval { lo: f64::NEG_INFINITY, hi: 0.0 },
                OpenInterval { lo: 0.0, hi: f64::INFINITY },
            ];
        }
        let w = |u: f64| self.w_unchecked(u) - 1.0;
        let at_zero = self.c * (1.0 - self.nu.mass_at(0.0));
        let scale = positive[positive.len() - 1] * (1.0 + self.c.sqrt());
        let mut out = Vec::new();

        if at_zero <= 1.0 {
            out.push(OpenInterval { lo: f64::NEG_INFINITY, hi: 0.0 });
        } else {
            let mut step = scale;
            while w(-step) >= 0.0 {
                step *= 2.0;
            }
            out.push(OpenInterval { lo: f64::NEG_INFINITY, hi: bisect(w, -step, 0.0, true) });
        }

        if at_zero < 1.0 {
            out.push(OpenInterval { lo: 0.0, hi: bisect(w, 0.0, positive[0], true) });
        }

        for pair in positive.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let valley = bisect(|u| self.w_prime_unchecked(u), a, b, true);
            if w(valley) < 0.0 {
                out.push(OpenInterval {
                    lo: bisect(w, a, valley, false),
                    hi: bisect(w, valley, b, true),
                });
            }
        }

        let last = positive[positive.len() - 1];
        let mut step = scale;
        while w(last + step) >= 0.0 {
            step *= 2.0;
        }
        out.push(OpenInterval { lo: bisect(w, last, last + step, false), hi: f64::INFINITY });
        out
    }

    /// Maximal open intervals of `{u > 0 off supp nu : W(u) < 1}`.
    pub fn outlier_set_intervals(&self) -> Vec<OpenInterval> {
        self.full_outlier_set().into_iter().filter(|iv| iv.lo >= 0.0).collect()
    }

    /// Support on `(0, inf)` of the limiting law: `(0, inf)` minus the image of
    /// the outlier set under `u -> Z(1/u)`.
    pub fn support(&self) -> SupportIntervals {
        let image = |u: f64| if u.is_finite() { self.z_of_inverse(u) } else { u };
        let removed = self
            .full_outlier_set()
            .into_iter()
            .map(|iv| OpenInterval { lo: image(iv.lo), hi: image(iv.hi) })
            .collect();
        SupportIntervals::complement((0.0, f64::INFINITY), removed)
    }

    /// Weight of the atom at zero of the limiting law.
    pub fn mass_at_zero(&self) -> f64 {
        let nu0 = self.nu.mass_at(0.0);
        if self.c * (1.0 - nu0) <= 1.0 {
            nu0
        } else {
            1.0 - 1.0 / self.c
        }
    }

    /// Stieltjes transform of the limiting law, solving
    /// `g = sum_i w_i / (z - t_i (1 - c + c z g))`.
    pub fn fixed_point_g(&self, z: ComplexPoint, opts: &FixedPointOptions) -> Result<ComplexPoint> {
        solve::solve(&MultiplicativeEquation { ctx: self }, z, opts)
    }

    /// Stieltjes transform of the companion law (spectrum of `(1/p) B* A B`):
    /// `(1 - c)/z + c g(z)`.
    pub fn companion_g(&self, z: ComplexPoint, opts: &FixedPointOptions) -> Result<ComplexPoint> {
        Ok((1.0 - self.c) / z + self.c * self.fixed_point_g(z, opts)?)
    }

    /// Continuous density `-Im g(x + i eps) / pi` at each grid point.
    pub fn density(&self, grid: &[f64], eps: f64, opts: &FixedPointOptions) -> Result<Vec<(f64, f64)>> {
        if !(eps > 0.0) {
            return Err(Error::Domain(format!("eps = {eps} must be positive")));
        }
        grid.iter()
            .enumerate()
            .map(|(index, &x)| {
                let g = self
                    .fixed_point_g(Complex64::new(x, eps), opts)
                    .map_err(|e| Error::GridConvergence { index, x, source: Box::new(e) })?;
                Ok((x, (-g.im / PI).max(0.0)))
            })
            .collect()
    }
}

struct MultiplicativeEquation<'a> {
    ctx: &'a MultiplicativeContext,
}

impl FixedPointEquation for MultiplicativeEquation<'_> {
    fn map(&self, z: Complex64, g: Complex64) -> Complex64 {
        let c = self.ctx.c;
        let s = 1.0 - c + c * z * g;
        self.ctx.nu.integrate_complex(|t| 1.0 / (z - t * s))
    }

    fn derivative(&self, z: Complex64, g: Complex64) -> Complex64 {
        let c = self.ctx.c;
        let s = 1.0 - c + c * z * g;
        self.ctx.nu.integrate_complex(|t| {
            let d = z - t * s;
            t * c * z / (d * d)
        })
    }

    fn admissible(&self, z: Complex64, g: Complex64) -> bool {
        let companion = (1.0 - self.ctx.c) / z + self.ctx.c * g;
        g.im < 0.0 && companion.im < 0.0
    }
}
