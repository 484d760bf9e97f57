//! Monte Carlo comparison of finite-N spectra against the analytic
//! predictions: outlier locations, separation from the bulk, eigenvector
//! overlaps and cross-spike leakage, plus empirical spectral histograms.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{self, DrawOptions, EnsembleSample, EntryLaw, Field, SpikedModelSpec};
use crate::error::{Error, Result};
use crate::free_additive::{SpikeVerdict, SupportIntervals};
use crate::model::ModelKind;

/// Mean and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub stderr: f64,
}

impl Stat {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let stderr = if xs.len() > 1 {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        Self { mean, stderr }
    }
}

/// Pass/fail thresholds applied by [`run`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// `|mean outlier eigenvalue - rho|`.
    pub rho: f64,
    /// `|mean summed overlap / k - tau|`.
    pub tau: f64,
    /// Per-vector overlaps of spikes with multiplicity above one.
    pub tau_per_vector: f64,
    /// Mean leakage onto the other spike eigenspaces.
    pub leakage: f64,
    /// Gap `delta` of the separation check.
    pub separation_delta: f64,
    /// Minimal fraction of replicas passing the separation check.
    pub separation_rate: f64,
    /// Distance allowed between a sticking eigenvalue and the limiting support.
    pub sticking: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rho: 0.05,
            tau: 0.05,
            tau_per_vector: 0.1,
            leakage: 0.05,
            separation_delta: 0.1,
            separation_rate: 0.9,
            sticking: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct VerifyOptions {
    pub tolerances: Tolerances,
    pub draw: DrawOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Self { name: name.into(), value, tolerance, pass: value <= tolerance }
    }

    fn at_least(name: &str, value: f64, tolerance: f64) -> Self {
        Self { name: name.into(), value, tolerance, pass: value >= tolerance }
    }
}

/// Empirical behaviour of one spike over all replicas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeVerification {
    pub theta: f64,
    pub multiplicity: usize,
    /// One-based descending ranks `n_{j-1}+1 ..= n_{j-1}+k_j`.
    pub first_rank: usize,
    pub last_rank: usize,
    pub theory: SpikeVerdict,
    /// Mean of the `k_j` eigenvalues at the spike ranks.
    pub eigenvalue: Stat,
    /// Average of the per-vector overlaps onto the spike's own eigenspace.
    pub per_vector_overlap: Stat,
    /// Summed overlap onto the own eigenspace divided by `k_j`.
    pub summed_overlap: Stat,
    /// Largest summed overlap (divided by `k_j`) onto another spike's eigenspace.
    pub leakage: Stat,
    /// `lambda_{n_{j-1}} - rho`, absent when `n_{j-1} = 0`.
    pub upper_margin: Option<Stat>,
    /// `rho - lambda_{n_{j-1}+k_j+1}`, absent when the spike occupies the last ranks.
    pub lower_margin: Option<Stat>,
    /// Fraction of replicas passing the separation check.
    pub separation_rate: Option<f64>,
    /// Sticking spikes: largest distance of a ranked eigenvalue to the limiting support.
    pub edge_distance: Option<Stat>,
    pub checks: Vec<Check>,
}

impl SpikeVerification {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationResult {
    pub kind: ModelKind,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub field: Field,
    pub entry_law: EntryLaw,
    /// `N / p` as simulated (multiplicative model).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub realized_ratio: Option<f64>,
    pub support: SupportIntervals,
    /// Largest total overlap of an outlier eigenvector with all spike eigenspaces.
    pub max_total_overlap: f64,
    pub spikes: Vec<SpikeVerification>,
}

impl VerificationResult {
    pub fn pass(&self) -> bool {
        self.max_total_overlap <= 1.0 + 1e-8 && self.spikes.iter().all(|s| s.pass())
    }
}

/// `lambda_{n_{j-1}} > rho + delta` and `lambda_{n_{j-1}+k_j+1} < rho - delta`,
/// with `lambda_0 = +inf` and `lambda_{N+1} = -inf`.
pub fn separation_check(sample: &EnsembleSample, spike_j: usize, rho: f64, delta: f64) -> bool {
    let ranks = &sample.spike_ranks[spike_j];
    let above = if ranks.start == 0 { f64::INFINITY } else { sample.eigenvalues[ranks.start - 1] };
    let below = sample.eigenvalues.get(ranks.end).copied().unwrap_or(f64::NEG_INFINITY);
    above > rho + delta && below < rho - delta
}

struct SpikeRep {
    eigenvalue: f64,
    per_vector: f64,
    summed: f64,
    leakage: f64,
    upper: Option<f64>,
    lower: Option<f64>,
    separated: bool,
    edge_distance: f64,
}

struct RepStats {
    spikes: Vec<SpikeRep>,
    max_total: f64,
}

fn replica_stats(
    spec: &SpikedModelSpec,
    verdicts: &[SpikeVerdict],
    support: &SupportIntervals,
    replica: u64,
    opts: &VerifyOptions,
) -> Result<RepStats> {
    let sample = ensemble::draw(spec, replica, &opts.draw)?;
    let mut max_total: f64 = 0.0;
    let mut spikes = Vec::with_capacity(verdicts.len());
    for (j, verdict) in verdicts.iter().enumerate() {
        let ranks = sample.spike_ranks[j].clone();
        let k = ranks.len() as f64;
        let (own, summed) = ensemble::overlaps(&sample, j, j)?;
        let mut leakage: f64 = 0.0;
        for l in (0..verdicts.len()).filter(|&l| l != j) {
            leakage = leakage.max(ensemble::overlaps(&sample, j, l)?.1 / k);
        }
        if verdict.is_outlier {
            for col in ranks.clone() {
                let total: f64 = sample
                    .spike_projectors
                    .iter()
                    .map(|p| p.norm_sq(&sample.eigenvectors, col))
                    .sum();
                max_total = max_total.max(total);
            }
        }
        let eigs = &sample.eigenvalues[ranks.clone()];
        let eigenvalue = eigs.iter().sum::<f64>() / k;
        let (upper, lower, separated) = match verdict.rho {
            Some(rho) => (
                (ranks.start > 0).then(|| sample.eigenvalues[ranks.start - 1] - rho),
                sample.eigenvalues.get(ranks.end).map(|&x| rho - x),
                separation_check(&sample, j, rho, opts.tolerances.separation_delta),
            ),
            None => (None, None, false),
        };
        let edge_distance = eigs.iter().map(|&x| support.distance(x)).fold(0.0, f64::max);
        spikes.push(SpikeRep {
            eigenvalue,
            per_vector: own.iter().sum::<f64>() / k,
            summed: summed / k,
            leakage,
            upper,
            lower,
            separated,
            edge_distance,
        });
    }
    Ok(RepStats { spikes, max_total })
}

/// Simulates `reps` independent replicas of `spec` and compares them with the
/// analytic predictions (evaluated at the realized ratio `N/p`).
pub fn run(spec: &SpikedModelSpec, reps: usize) -> Result<VerificationResult> {
    run_with(spec, reps, &VerifyOptions::default())
}

pub fn run_with(spec: &SpikedModelSpec, reps: usize, opts: &VerifyOptions) -> Result<VerificationResult> {
    if reps == 0 {
        return Err(Error::Spec("reps must be positive".into()));
    }
    let realized_ratio = spec.realized_ratio();
    let model = match realized_ratio {
        Some(c) => spec.model().with_ratio(c)?,
        None => spec.model().clone(),
    };
    let verdicts = spec
        .spikes()
        .iter()
        .map(|s| model.classify_spike(s.theta, s.multiplicity))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| Error::Theory(e.to_string()))?;
    let support = model.support();

    let per_rep = (0..reps as u64)
        .into_par_iter()
        .map(|r| replica_stats(spec, &verdicts, &support, r, opts))
        .collect::<Result<Vec<_>>>()?;

    let tol = &opts.tolerances;
    let max_total_overlap = per_rep.iter().map(|r| r.max_total).fold(0.0, f64::max);
    let ranks = ensemble::build_perturbation(spec)?.spike_ranks;
    let mut spikes = Vec::with_capacity(verdicts.len());
    for (j, verdict) in verdicts.iter().enumerate() {
        let column = |f: &dyn Fn(&SpikeRep) -> f64| -> Vec<f64> { per_rep.iter().map(|r| f(&r.spikes[j])).collect() };
        let optional = |f: &dyn Fn(&SpikeRep) -> Option<f64>| -> Option<Stat> {
            let xs: Option<Vec<f64>> = per_rep.iter().map(|r| f(&r.spikes[j])).collect();
            xs.map(|xs| Stat::from_samples(&xs))
        };
        let eigenvalue = Stat::from_samples(&column(&|s| s.eigenvalue));
        let per_vector_overlap = Stat::from_samples(&column(&|s| s.per_vector));
        let summed_overlap = Stat::from_samples(&column(&|s| s.summed));
        let leakage = Stat::from_samples(&column(&|s| s.leakage));

        let mut checks = Vec::new();
        let (upper_margin, lower_margin, separation_rate, edge_distance);
        if let (Some(rho), Some(tau)) = (verdict.rho, verdict.tau) {
            checks.push(Check::at_most("rho", (eigenvalue.mean - rho).abs(), tol.rho));
            checks.push(Check::at_most("tau", (summed_overlap.mean - tau).abs(), tol.tau));
            if verdict.multiplicity > 1 {
                checks.push(Check::at_most("tau_per_vector", (per_vector_overlap.mean - tau).abs(), tol.tau_per_vector));
            }
            let rate = per_rep.iter().filter(|r| r.spikes[j].separated).count() as f64 / reps as f64;
            checks.push(Check::at_least("separation", rate, tol.separation_rate));
            upper_margin = optional(&|s| s.upper);
            lower_margin = optional(&|s| s.lower);
            separation_rate = Some(rate);
            edge_distance = None;
        } else {
            let dists = column(&|s| s.edge_distance);
            let worst = dists.iter().copied().fold(0.0, f64::max);
            let dist = Stat::from_samples(&dists);
            checks.push(Check::at_most("sticking", worst, tol.sticking));
            upper_margin = None;
            lower_margin = None;
            separation_rate = None;
            edge_distance = Some(dist);
        }
        if verdicts.len() > 1 {
            checks.push(Check::at_most("leakage", leakage.mean, tol.leakage));
        }

        spikes.push(SpikeVerification {
            theta: verdict.theta,
            multiplicity: verdict.multiplicity,
            first_rank: ranks[j].start + 1,
            last_rank: ranks[j].end,
            theory: verdict.clone(),
            eigenvalue,
            per_vector_overlap,
            summed_overlap,
            leakage,
            upper_margin,
            lower_margin,
            separation_rate,
            edge_distance,
            checks,
        });
    }

    Ok(VerificationResult {
        kind: spec.kind(),
        n: spec.n(),
        reps,
        seed: spec.seed(),
        field: spec.field(),
        entry_law: spec.entry_law(),
        realized_ratio,
        support,
        max_total_overlap,
        spikes,
    })
}

/// 17 significant digits, `.` decimal separator.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub(crate) fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Flat table with one row per spike per simulated `N`.
pub fn to_csv(results: &[VerificationResult]) -> String {
    let mut out = String::from(
        "N,reps,seed,realized_ratio,spike,theta,multiplicity,first_rank,last_rank,verdict,rho,tau,\
         eigenvalue_mean,eigenvalue_stderr,per_vector_overlap_mean,per_vector_overlap_stderr,\
         summed_overlap_mean,summed_overlap_stderr,leakage_mean,leakage_stderr,\
         upper_margin_mean,lower_margin_mean,separation_rate,edge_distance_mean,pass\n",
    );
    for res in results {
        for (j, s) in res.spikes.iter().enumerate() {
            let verdict = if s.theory.is_outlier { "outlier" } else { "sticking" };
            let _ = writeln!(
                out,
                "{},{},{},{},{j},{},{},{},{},{verdict},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                res.n,
                res.reps,
                res.seed,
                fmt_opt(res.realized_ratio),
                fmt_f64(s.theta),
                s.multiplicity,
                s.first_rank,
                s.last_rank,
                fmt_opt(s.theory.rho),
                fmt_opt(s.theory.tau),
                fmt_f64(s.eigenvalue.mean),
                fmt_f64(s.eigenvalue.stderr),
                fmt_f64(s.per_vector_overlap.mean),
                fmt_f64(s.per_vector_overlap.stderr),
                fmt_f64(s.summed_overlap.mean),
                fmt_f64(s.summed_overlap.stderr),
                fmt_f64(s.leakage.mean),
                fmt_f64(s.leakage.stderr),
                fmt_opt(s.upper_margin.map(|m| m.mean)),
                fmt_opt(s.lower_margin.map(|m| m.mean)),
                fmt_opt(s.separation_rate),
                fmt_opt(s.edge_distance.map(|m| m.mean)),
                s.pass()
            );
        }
    }
    out
}

/// Normalized histogram; `mass` sums to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub mass: Vec<f64>,
}

impl Histogram {
    /// Mass divided by bin width.
    pub fn density(&self) -> Vec<f64> {
        self.mass
            .iter()
            .zip(self.edges.windows(2))
            .map(|(m, e)| m / (e[1] - e[0]))
            .collect()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|e| 0.5 * (e[0] + e[1])).collect()
    }
}

/// Pooled eigenvalues of all samples, leaving out the spike-ranked ones.
pub fn bulk_eigenvalues(samples: &[EnsembleSample]) -> Vec<f64> {
    samples
        .iter()
        .flat_map(|s| {
            s.eigenvalues
                .iter()
                .enumerate()
                .filter(|(i, _)| !s.spike_ranks.iter().any(|r| r.contains(i)))
                .map(|(_, &x)| x)
        })
        .collect()
}

/// Histogram with `bins` equal bins spanning the pooled bulk eigenvalues.
pub fn empirical_density(samples: &[EnsembleSample], bins: usize) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::Spec("histogram needs at least one bin".into()));
    }
    let values = bulk_eigenvalues(samples);
    if values.is_empty() {
        return Err(Error::Spec("no bulk eigenvalues to histogram".into()));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        hi = lo + 1.0;
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &x in &values {
        let b = (((x - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let total = values.len() as f64;
    Ok(Histogram {
        edges: (0..=bins).map(|i| lo + width * i as f64).collect(),
        mass: counts.into_iter().map(|c| c as f64 / total).collect(),
    })
}

/// Kolmogorov-Smirnov distance between the empirical law of `values` and `cdf`.
pub fn ks_statistic<F: Fn(f64) -> f64>(values: &[f64], cdf: F) -> f64 {
    let mut xs = values.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}
