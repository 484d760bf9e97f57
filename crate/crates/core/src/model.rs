//! The two deformation models behind one interface, and the per-spike report
//! that summarizes the analytic predictions for a model.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::free_additive::{AdditiveContext, SpikeVerdict, SupportIntervals};
use crate::free_multiplicative::MultiplicativeContext;
use crate::measure::AtomicMeasure;
use crate::solve::FixedPointOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// `X + A` with `X` a normalized Wigner matrix.
    AdditiveWigner,
    /// `A^{1/2} (B B* / p) A^{1/2}` with `B` an `N x p` matrix of standardized entries.
    MultiplicativeWishart,
}

/// Limiting data of a deformation model.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Additive(AdditiveContext),
    Multiplicative(MultiplicativeContext),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Additive(_) => ModelKind::AdditiveWigner,
            Model::Multiplicative(_) => ModelKind::MultiplicativeWishart,
        }
    }

    pub fn nu(&self) -> &AtomicMeasure {
        match self {
            Model::Additive(ctx) => ctx.nu(),
            Model::Multiplicative(ctx) => ctx.nu(),
        }
    }

    pub fn classify_spike(&self, theta: f64, multiplicity: usize) -> Result<SpikeVerdict> {
        match self {
            Model::Additive(ctx) => ctx.classify_spike(theta, multiplicity),
            Model::Multiplicative(ctx) => ctx.classify_spike(theta, multiplicity),
        }
    }

    /// Support of the limiting law (restricted to `(0, inf)` for the multiplicative model).
    pub fn support(&self) -> SupportIntervals {
        match self {
            Model::Additive(ctx) => ctx.support(),
            Model::Multiplicative(ctx) => ctx.support(),
        }
    }

    pub fn mass_at_zero(&self) -> Option<f64> {
        match self {
            Model::Additive(_) => None,
            Model::Multiplicative(ctx) => Some(ctx.mass_at_zero()),
        }
    }

    pub fn density(&self, grid: &[f64], eps: f64, opts: &FixedPointOptions) -> Result<Vec<(f64, f64)>> {
        match self {
            Model::Additive(ctx) => ctx.density(grid, eps, opts),
            Model::Multiplicative(ctx) => ctx.density(grid, eps, opts),
        }
    }

    /// The same model with the ratio `c` replaced (multiplicative only).
    pub fn with_ratio(&self, c: f64) -> Result<Self> {
        match self {
            Model::Additive(_) => Ok(self.clone()),
            Model::Multiplicative(ctx) => Ok(Model::Multiplicative(MultiplicativeContext::new(ctx.nu().clone(), c)?)),
        }
    }

    /// Classifies every spike and collects the support of the limiting law.
    pub fn report(&self, spikes: &[(f64, usize)]) -> Result<SpikeReport> {
        let verdicts = spikes
            .iter()
            .map(|&(theta, k)| self.classify_spike(theta, k))
            .collect::<Result<Vec<_>>>()?;
        Ok(SpikeReport {
            kind: self.kind(),
            verdicts,
            support: self.support(),
            mass_at_zero: self.mass_at_zero(),
        })
    }
}

/// Analytic predictions for a spiked model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeReport {
    pub kind: ModelKind,
    pub verdicts: Vec<SpikeVerdict>,
    pub support: SupportIntervals,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mass_at_zero: Option<f64>,
}
