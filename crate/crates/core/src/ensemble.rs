//! Finite-N spiked models: construction of the diagonal perturbation, random
//! Wigner and Wishart noise, assembly, Hermitian diagonalization and the
//! eigenvector overlaps with the spike eigenspaces.

use std::ops::Range;

use faer::{c64, Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::free_additive::AdditiveContext;
use crate::free_multiplicative::MultiplicativeContext;
use crate::measure::{AtomicMeasure, MERGE_TOL};
use crate::model::{Model, ModelKind};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryLaw {
    #[default]
    Gaussian,
    Rademacher,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Field {
    #[serde(rename = "real")]
    RealSymmetric,
    #[default]
    #[serde(rename = "complex")]
    ComplexHermitian,
}

/// An eigenvalue of the perturbation outside the support of `nu`, with its multiplicity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spike {
    pub theta: f64,
    pub multiplicity: usize,
}

/// Full statement of a finite-N spiked model.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikedModelSpec {
    model: Model,
    spikes: Vec<Spike>,
    entry_law: EntryLaw,
    field: Field,
    n: usize,
    seed: u64,
}

impl SpikedModelSpec {
    pub fn new(model: Model, spikes: Vec<Spike>, n: usize) -> Result<Self> {
        let spec = Self {
            model,
            spikes,
            entry_law: EntryLaw::default(),
            field: Field::default(),
            n,
            seed: 0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn additive(nu: AtomicMeasure, sigma2: f64, spikes: &[(f64, usize)], n: usize) -> Result<Self> {
        let ctx = AdditiveContext::new(nu, sigma2).map_err(|e| Error::Spec(e.to_string()))?;
        Self::new(Model::Additive(ctx), to_spikes(spikes), n)
    }

    pub fn multiplicative(nu: AtomicMeasure, c: f64, spikes: &[(f64, usize)], n: usize) -> Result<Self> {
        let ctx = MultiplicativeContext::new(nu, c).map_err(|e| Error::Spec(e.to_string()))?;
        Self::new(Model::Multiplicative(ctx), to_spikes(spikes), n)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_entry_law(mut self, law: EntryLaw) -> Self {
        self.entry_law = law;
        self
    }

    pub fn with_field(mut self, field: Field) -> Self {
        self.field = field;
        self
    }

    pub fn with_n(mut self, n: usize) -> Result<Self> {
        self.n = n;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Spec("N must be positive".into()));
        }
        let rank = self.rank();
        if rank > self.n {
            return Err(Error::Spec(format!(
                "total spike multiplicity r = {rank} exceeds N = {}",
                self.n
            )));
        }
        for s in &self.spikes {
            if s.multiplicity == 0 {
                return Err(Error::Spec(format!("spike {} has multiplicity 0", s.theta)));
            }
            if !s.theta.is_finite() {
                return Err(Error::Spec(format!("spike {} is not finite", s.theta)));
            }
            if self.model.nu().distance_to_support(s.theta) <= MERGE_TOL {
                return Err(Error::Spec(format!("spike {} lies in the support of nu", s.theta)));
            }
            if self.kind() == ModelKind::MultiplicativeWishart && s.theta <= 0.0 {
                return Err(Error::Spec(format!(
                    "multiplicative spikes must be positive, got {}",
                    s.theta
                )));
            }
        }
        if self.spikes.windows(2).any(|w| w[0].theta <= w[1].theta) {
            return Err(Error::Spec("spikes must be strictly decreasing".into()));
        }
        Ok(())
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn kind(&self) -> ModelKind {
        self.model.kind()
    }

    pub fn spikes(&self) -> &[Spike] {
        &self.spikes
    }

    pub fn entry_law(&self) -> EntryLaw {
        self.entry_law
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Total multiplicity of the spikes.
    pub fn rank(&self) -> usize {
        self.spikes.iter().map(|s| s.multiplicity).sum()
    }

    /// Number of columns `p = round(N / c)` of the Wishart factor.
    pub fn sample_size(&self) -> Option<usize> {
        match &self.model {
            Model::Additive(_) => None,
            Model::Multiplicative(ctx) => Some(((self.n as f64 / ctx.c()).round() as usize).max(1)),
        }
    }

    /// `N / p` as simulated.
    pub fn realized_ratio(&self) -> Option<f64> {
        self.sample_size().map(|p| self.n as f64 / p as f64)
    }
}

fn to_spikes(spikes: &[(f64, usize)]) -> Vec<Spike> {
    spikes
        .iter()
        .map(|&(theta, multiplicity)| Spike { theta, multiplicity })
        .collect()
}

/// Orthogonal projector onto a set of consecutive coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoordinateProjector {
    pub coordinates: Range<usize>,
}

impl CoordinateProjector {
    /// `||P v||^2` for the `col`-th column of `vectors`.
    pub fn norm_sq(&self, vectors: &Mat<c64>, col: usize) -> f64 {
        self.coordinates.clone().map(|i| vectors[(i, col)].norm_sqr()).sum()
    }
}

/// The diagonal perturbation `A_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    /// Diagonal entries in descending order.
    pub diagonal: Vec<f64>,
    /// Zero-based descending positions occupied by each spike.
    pub spike_ranks: Vec<Range<usize>>,
    pub spike_projectors: Vec<CoordinateProjector>,
}

/// Spikes (with multiplicity) plus the `N - r` quantiles of `nu`, sorted
/// descending on `(value, original index)`.
pub fn build_perturbation(spec: &SpikedModelSpec) -> Result<Perturbation> {
    let rank = spec.rank();
    if rank > spec.n {
        return Err(Error::Spec(format!("r = {rank} exceeds N = {}", spec.n)));
    }
    // (value, spike index or usize::MAX for bulk)
    let mut entries: Vec<(f64, usize)> = Vec::with_capacity(spec.n);
    for (j, s) in spec.spikes.iter().enumerate() {
        entries.extend(std::iter::repeat_n((s.theta, j), s.multiplicity));
    }
    entries.extend(
        spec.model
            .nu()
            .quantile_discretize(spec.n - rank)
            .into_iter()
            .map(|t| (t, usize::MAX)),
    );
    // stable sort keeps original order among ties
    entries.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut spike_ranks = vec![0..0; spec.spikes.len()];
    for (pos, &(_, j)) in entries.iter().enumerate() {
        if j != usize::MAX {
            let r = &mut spike_ranks[j];
            if r.start == r.end {
                *r = pos..pos + 1;
            } else {
                r.end = pos + 1;
            }
        }
    }
    let spike_projectors = spike_ranks
        .iter()
        .map(|r| CoordinateProjector { coordinates: r.clone() })
        .collect();
    Ok(Perturbation {
        diagonal: entries.into_iter().map(|e| e.0).collect(),
        spike_ranks,
        spike_projectors,
    })
}

/// A Hermitian matrix (real symmetric matrices are stored with zero imaginary parts).
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix(Mat<c64>);

impl HermitianMatrix {
    /// Wraps `m`, replacing it by `(m + m*)/2`.
    pub fn from_mat(m: Mat<c64>) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "Hermitian matrix must be square");
        let sym = Mat::from_fn(m.nrows(), m.ncols(), |i, j| (m[(i, j)] + m[(j, i)].conj()) * 0.5);
        Self(sym)
    }

    pub fn from_real_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        Self::from_mat(Mat::from_fn(n, n, |i, j| c64::new(rows[i][j], 0.0)))
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let n = values.len();
        Self(Mat::from_fn(n, n, |i, j| if i == j { c64::new(values[i], 0.0) } else { c64::new(0.0, 0.0) }))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> c64 {
        self.0[(i, j)]
    }

    pub fn as_mat(&self) -> &Mat<c64> {
        &self.0
    }

    /// Spectral norm.
    pub fn operator_norm(&self) -> Result<f64> {
        let ev = eigenvalues(self)?;
        Ok(ev.first().map_or(0.0, |&hi| hi.abs().max(ev[ev.len() - 1].abs())))
    }
}

fn draw_entry<R: Rng>(rng: &mut R, law: EntryLaw, scale: f64) -> f64 {
    match law {
        EntryLaw::Gaussian => scale * rng.sample::<f64, _>(StandardNormal),
        EntryLaw::Rademacher => {
            if rng.random::<bool>() {
                scale
            } else {
                -scale
            }
        }
    }
}

fn draw_off_diagonal<R: Rng>(rng: &mut R, field: Field, law: EntryLaw, sd: f64) -> c64 {
    match field {
        Field::RealSymmetric => c64::new(draw_entry(rng, law, sd), 0.0),
        Field::ComplexHermitian => {
            let s = sd * std::f64::consts::FRAC_1_SQRT_2;
            let re = draw_entry(rng, law, s);
            let im = draw_entry(rng, law, s);
            c64::new(re, im)
        }
    }
}

/// Normalized Wigner matrix `W / sqrt(N)` with entry variance `sigma2`.
///
/// Diagonal entries are real with variance `sigma2`; off-diagonal complex
/// entries have independent real and imaginary parts of variance `sigma2 / 2`.
/// The upper triangle is filled row by row.
pub fn sample_wigner<R: Rng>(n: usize, field: Field, law: EntryLaw, sigma2: f64, rng: &mut R) -> HermitianMatrix {
    let sd = sigma2.sqrt();
    let norm = 1.0 / (n as f64).sqrt();
    let mut m = Mat::<c64>::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = c64::new(draw_entry(rng, law, sd) * norm, 0.0);
        for j in i + 1..n {
            let x = draw_off_diagonal(rng, field, law, sd) * norm;
            m[(i, j)] = x;
            m[(j, i)] = x.conj();
        }
    }
    HermitianMatrix(m)
}

/// `N x p` matrix of i.i.d. standardized entries (`E|B_ij|^2 = 1`), filled row by row.
pub fn sample_wishart_factor<R: Rng>(n: usize, p: usize, field: Field, law: EntryLaw, rng: &mut R) -> Mat<c64> {
    let mut b = Mat::<c64>::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            b[(i, j)] = draw_off_diagonal(rng, field, law, 1.0);
        }
    }
    b
}

/// Random part of a finite-N model.
#[derive(Debug, Clone)]
pub enum Noise {
    Wigner(HermitianMatrix),
    WishartFactor(Mat<c64>),
}

/// `X + A` (additive) or `(1/p) A^{1/2} B B* A^{1/2}` (multiplicative), for `A = diag(a)`.
pub fn assemble(kind: ModelKind, a: &[f64], noise: &Noise) -> Result<HermitianMatrix> {
    match (kind, noise) {
        (ModelKind::AdditiveWigner, Noise::Wigner(x)) => {
            if x.dim() != a.len() {
                return Err(Error::Spec("noise and perturbation sizes differ".into()));
            }
            let mut m = x.0.clone();
            for (i, &ai) in a.iter().enumerate() {
                m[(i, i)] += ai;
            }
            Ok(HermitianMatrix(m))
        }
        (ModelKind::MultiplicativeWishart, Noise::WishartFactor(b)) => {
            if b.nrows() != a.len() {
                return Err(Error::Spec("noise and perturbation sizes differ".into()));
            }
            if let Some(neg) = a.iter().find(|&&x| x < 0.0) {
                return Err(Error::Spec(format!("perturbation has negative eigenvalue {neg}")));
            }
            let p = b.ncols();
            let root: Vec<f64> = a.iter().map(|x| x.sqrt()).collect();
            let scaled = Mat::from_fn(b.nrows(), p, |i, j| b[(i, j)] * root[i]);
            let m = (&scaled * scaled.adjoint()) * faer::Scale(c64::new(1.0 / p as f64, 0.0));
            Ok(HermitianMatrix::from_mat(m))
        }
        _ => Err(Error::Spec("noise does not match the model kind".into())),
    }
}

/// Eigen-decomposition with eigenvalues in descending order.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    /// Column `k` is the unit eigenvector of `values[k]`.
    pub vectors: Mat<c64>,
}

/// Ascending eigenvalues only.
fn eigenvalues(m: &HermitianMatrix) -> Result<Vec<f64>> {
    m.0.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigenvalue computation failed: {e:?}")))
}

pub const RESIDUAL_TOL: f64 = 1e-7;
pub const GRAM_TOL: f64 = 1e-8;

/// Hermitian eigen-decomposition, checked for residuals
/// `||M v - lambda v|| <= 1e-7 (1 + ||M||)` and orthonormality within `1e-8`.
pub fn diagonalize(m: &HermitianMatrix) -> Result<Eigen> {
    let n = m.dim();
    let evd = m
        .0
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigendecomposition failed: {e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    // faer returns ascending order; reverse with a stable sort on (lambda, index)
    let mut order: Vec<(f64, usize)> = (0..n).map(|k| (s[k].re, k)).collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0));
    let values: Vec<f64> = order.iter().map(|o| o.0).collect();
    let vectors = Mat::from_fn(n, n, |i, k| u[(i, order[k].1)]);

    let norm = values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let mv = &m.0 * &vectors;
    for k in 0..n {
        let res: f64 = (0..n)
            .map(|i| (mv[(i, k)] - vectors[(i, k)] * values[k]).norm_sqr())
            .sum::<f64>()
            .sqrt();
        if !(res <= RESIDUAL_TOL * (1.0 + norm)) {
            return Err(Error::Numerical(format!("eigenpair {k} has residual {res:e}")));
        }
    }
    let gram = vectors.adjoint() * &vectors;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            let dev = (gram[(i, j)] - c64::new(target, 0.0)).norm();
            if !(dev <= GRAM_TOL) {
                return Err(Error::Numerical(format!("eigenvectors not orthonormal: Gram[{i},{j}] off by {dev:e}")));
            }
        }
    }
    Ok(Eigen { values, vectors })
}

/// One finite-N draw of a spiked model.
#[derive(Debug, Clone)]
pub struct EnsembleSample {
    /// Descending eigenvalues of the model matrix.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors, column `k` for `eigenvalues[k]`.
    pub eigenvectors: Mat<c64>,
    /// Zero-based descending positions of each spike among the eigenvalues of `A`.
    pub spike_ranks: Vec<Range<usize>>,
    /// Projectors onto `Ker(theta_l I - A)`.
    pub spike_projectors: Vec<CoordinateProjector>,
    /// Eigenvalues of `A` in descending order.
    pub perturbation: Vec<f64>,
}

impl EnsembleSample {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DrawOptions {
    /// Check `|lambda_i(X + A) - lambda_i(A)| <= ||X||` on additive draws.
    pub check_weyl: bool,
}

impl Default for DrawOptions {
    fn default() -> Self {
        Self { check_weyl: cfg!(debug_assertions) }
    }
}

/// Random stream for replica `replica`: ChaCha8 keyed by the seed, on stream `replica`.
pub fn replica_rng(seed: u64, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

/// Draws, assembles and diagonalizes replica `replica` of `spec`.
pub fn draw(spec: &SpikedModelSpec, replica: u64, opts: &DrawOptions) -> Result<EnsembleSample> {
    let pert = build_perturbation(spec)?;
    let mut rng = replica_rng(spec.seed, replica);
    let noise = match &spec.model {
        Model::Additive(ctx) => Noise::Wigner(sample_wigner(spec.n, spec.field, spec.entry_law, ctx.sigma2(), &mut rng)),
        Model::Multiplicative(_) => {
            let p = spec.sample_size().expect("multiplicative spec has a sample size");
            Noise::WishartFactor(sample_wishart_factor(spec.n, p, spec.field, spec.entry_law, &mut rng))
        }
    };
    let m = assemble(spec.kind(), &pert.diagonal, &noise)?;
    let eig = diagonalize(&m)?;

    if opts.check_weyl {
        if let Noise::Wigner(x) = &noise {
            check_weyl(&eig.values, &pert.diagonal, x.operator_norm()?)?;
        }
    }

    Ok(EnsembleSample {
        eigenvalues: eig.values,
        eigenvectors: eig.vectors,
        spike_ranks: pert.spike_ranks,
        spike_projectors: pert.spike_projectors,
        perturbation: pert.diagonal,
    })
}

/// Weyl's inequality for `M = A + X`, both spectra sorted descending.
pub fn check_weyl(eig_m: &[f64], eig_a: &[f64], x_norm: f64) -> Result<()> {
    let slack = 1e-9 * (1.0 + x_norm + eig_a.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    for (i, (lm, la)) in eig_m.iter().zip(eig_a).enumerate() {
        if (lm - la).abs() > x_norm + slack {
            return Err(Error::Numerical(format!(
                "Weyl bound violated at rank {}: |{lm} - {la}| > {x_norm}",
                i + 1
            )));
        }
    }
    Ok(())
}

/// Squared projections `||P_l xi_n(j)||^2` of the eigenvectors at the ranks
/// of spike `j` onto the eigenspace of spike `l`, and their sum.
pub fn overlaps(sample: &EnsembleSample, spike_j: usize, spike_l: usize) -> Result<(Vec<f64>, f64)> {
    let ranks = sample
        .spike_ranks
        .get(spike_j)
        .ok_or_else(|| Error::Spec(format!("no spike with index {spike_j}")))?;
    let proj = sample
        .spike_projectors
        .get(spike_l)
        .ok_or_else(|| Error::Spec(format!("no spike with index {spike_l}")))?;
    let per_vector: Vec<f64> = ranks.clone().map(|k| proj.norm_sq(&sample.eigenvectors, k)).collect();
    let summed = per_vector.iter().sum();
    Ok((per_vector, summed))
}
