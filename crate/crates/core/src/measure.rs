//! Compactly supported probability measures on the real line, stored as finite
//! atomic mixtures, together with their Stieltjes transform and moments.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Atoms closer than this are merged into one.
pub const MERGE_TOL: f64 = 1e-12;

/// Total mass deviation accepted (and renormalized away) on construction.
pub const MASS_TOL: f64 = 1e-9;

/// A point of the complex plane.
pub type ComplexPoint = Complex64;

/// One atom of an [`AtomicMeasure`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub location: f64,
    pub weight: f64,
}

/// A probability measure `sum_i w_i delta_{t_i}` with strictly increasing
/// locations and strictly positive weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomicMeasure {
    atoms: Vec<Atom>,
}

impl AtomicMeasure {
    /// Builds a measure from `(location, weight)` pairs.
    ///
    /// Atoms within [`MERGE_TOL`] of each other are merged. The weights must
    /// sum to one within [`MASS_TOL`]; they are then renormalized exactly.
    pub fn new<I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, f64)>,
    {
        let mut raw: Vec<(f64, f64)> = pairs.into_iter().collect();
        if raw.is_empty() {
            return Err(Error::Measure("measure has no atoms".into()));
        }
        for &(t, w) in &raw {
            if !t.is_finite() {
                return Err(Error::Measure(format!("atom location {t} is not finite")));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::Measure(format!(
                    "atom weight {w} at {t} must be strictly positive"
                )));
            }
        }
        raw.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut atoms: Vec<Atom> = Vec::with_capacity(raw.len());
        for (t, w) in raw {
            match atoms.last_mut() {
                Some(last) if t - last.location <= MERGE_TOL => last.weight += w,
                _ => atoms.push(Atom {
                    location: t,
                    weight: w,
                }),
            }
        }

        let total: f64 = atoms.iter().map(|a| a.weight).sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::Measure(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        for a in &mut atoms {
            a.weight /= total;
        }
        Ok(Self { atoms })
    }

    /// The Dirac mass at `location`.
    pub fn dirac(location: f64) -> Self {
        Self::new([(location, 1.0)]).expect("a single finite atom is a valid measure")
    }

    /// The empirical measure `(1/n) sum_i delta_{x_i}`.
    pub fn empirical(values: &[f64]) -> Result<Self> {
        let w = 1.0 / values.len() as f64;
        Self::new(values.iter().map(|&x| (x, w)))
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn min_location(&self) -> f64 {
        self.atoms[0].location
    }

    pub fn max_location(&self) -> f64 {
        self.atoms[self.atoms.len() - 1].location
    }

    /// Largest `|t|` over the support.
    pub fn support_radius(&self) -> f64 {
        self.min_location().abs().max(self.max_location().abs())
    }

    /// True when `x` coincides with an atom up to [`MERGE_TOL`].
    pub fn is_atom(&self, x: f64) -> bool {
        self.distance_to_support(x) <= MERGE_TOL
    }

    pub fn distance_to_support(&self, x: f64) -> f64 {
        let idx = self.atoms.partition_point(|a| a.location < x);
        let mut best = f64::INFINITY;
        if idx < self.atoms.len() {
            best = best.min((self.atoms[idx].location - x).abs());
        }
        if idx > 0 {
            best = best.min((x - self.atoms[idx - 1].location).abs());
        }
        best
    }

    /// Mass carried by the atom at `x` (zero when there is none).
    pub fn mass_at(&self, x: f64) -> f64 {
        self.atoms
            .iter()
            .filter(|a| (a.location - x).abs() <= MERGE_TOL)
            .fold(0.0, |acc, a| acc + a.weight)
    }

    /// `sum_i w_i f(t_i)`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.atoms.iter().map(|a| a.weight * f(a.location)).sum()
    }

    /// Complex version of [`integrate`](Self::integrate).
    pub fn integrate_complex<F: Fn(f64) -> Complex64>(&self, f: F) -> Complex64 {
        self.atoms
            .iter()
            .fold(Complex64::new(0.0, 0.0), |acc, a| acc + a.weight * f(a.location))
    }

    /// Stieltjes transform `g(z) = sum_i w_i / (z - t_i)`.
    pub fn stieltjes(&self, z: ComplexPoint) -> Result<ComplexPoint> {
        if z.im == 0.0 && self.is_atom(z.re) {
            return Err(Error::Domain(format!(
                "Stieltjes transform evaluated at the atom {}",
                z.re
            )));
        }
        Ok(self.integrate_complex(|t| 1.0 / (z - t)))
    }

    /// `sum_i w_i t_i^k`.
    pub fn moment(&self, k: u32) -> f64 {
        self.integrate(|t| t.powi(k as i32))
    }

    /// Deterministic `m`-point discretization: the quantiles of the CDF at
    /// levels `(i - 1/2)/m`, in increasing order.
    pub fn quantile_discretize(&self, m: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(m);
        let mut idx = 0;
        let mut cdf = self.atoms[0].weight;
        for i in 0..m {
            let level = (i as f64 + 0.5) / m as f64;
            // generalized inverse: first atom whose CDF reaches the level
            while cdf < level && idx + 1 < self.atoms.len() {
                idx += 1;
                cdf += self.atoms[idx].weight;
            }
            out.push(self.atoms[idx].location);
        }
        out
    }

    /// Pushforward under `t -> t + shift`.
    pub fn shifted(&self, shift: f64) -> Self {
        Self {
            atoms: self
                .atoms
                .iter()
                .map(|a| Atom {
                    location: a.location + shift,
                    weight: a.weight,
                })
                .collect(),
        }
    }

    /// Strictly increasing locations of the atoms.
    pub fn locations(&self) -> impl Iterator<Item = f64> + '_ {
        self.atoms.iter().map(|a| a.location)
    }
}

/// On-disk form: `{"atoms": [[location, weight], ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasureFile {
    pub atoms: Vec<(f64, f64)>,
}

impl TryFrom<MeasureFile> for AtomicMeasure {
    type Error = Error;

    fn try_from(file: MeasureFile) -> Result<Self> {
        AtomicMeasure::new(file.atoms)
    }
}

impl From<&AtomicMeasure> for MeasureFile {
    fn from(nu: &AtomicMeasure) -> Self {
        Self {
            atoms: nu.atoms.iter().map(|a| (a.location, a.weight)).collect(),
        }
    }
}

impl Serialize for AtomicMeasure {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MeasureFile::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for AtomicMeasure {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let file = MeasureFile::deserialize(d)?;
        AtomicMeasure::try_from(file).map_err(serde::de::Error::custom)
    }
}
