// SPDX-License-Identifier: MIT OR Apache-2.0

//! Task-particle localization, vulnerability scanning, LRS, corpus
//! aggregation and the hybrid-layout advisor.
//!
//! Nothing here branches on architecture: every step goes through
//! [`LayeredModel::forward`], [`LayeredModel::forward_until`],
//! [`LayeredModel::forward_perturbed`] and [`LayeredModel::project`].

mod advisor;
mod aggregate;
mod divergence;
mod particle;
mod vulnerability;

pub use advisor::{
    advise_hybrid, Capacity, HybridPlan, LayerPlan, Training, DEFAULT_FREEZE_QUANTILE,
};
pub use aggregate::{
    aggregate_indexed, aggregate_particles, AggregateReport, ParticleEntry, ParticleSummary,
    PromptFailure,
};
pub use divergence::{js_divergence, kl_divergence, KL_EPS};
pub use particle::{
    capture_layer_distributions, locate_task_particle, relative_increase_ratio, LayerRecord,
    LayerTrace, ParticleResult, TokenProb,
};
pub use vulnerability::{lrs, vulnerability_scan, VulnerabilityProfile, DEGENERATE_JS};

use crate::error::{Error, Result};
use crate::models::{LayeredModel, Perturbation};

pub const DEFAULT_TOP_K: usize = 10;
pub const DEFAULT_RATIO_EPS: f64 = 1e-12;
/// Divergences are reported in bits.
pub const JS_LOG_BASE: f64 = 2.0;

/// Knobs shared by both phases.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub top_k: usize,
    pub ratio_eps: f64,
    /// Applied at every scanned layer; its `layer` field is overwritten per step.
    pub perturbation: Perturbation,
    /// Restricts both phases to these 1-based layers.
    pub layer_subset: Option<Vec<usize>>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            top_k: DEFAULT_TOP_K,
            ratio_eps: DEFAULT_RATIO_EPS,
            perturbation: Perturbation::ablation(1),
            layer_subset: None,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self, model: &LayeredModel) -> Result<()> {
        let vocab = model.spec().vocab_size;
        if self.top_k == 0 || self.top_k > vocab {
            return Err(Error::InvalidInput(format!(
                "top_k must lie in 1..={vocab}, got {}",
                self.top_k
            )));
        }
        if self.ratio_eps.is_nan() || self.ratio_eps <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "ratio_eps must be > 0, got {}",
                self.ratio_eps
            )));
        }
        self.perturbation.validate()
    }

    /// Traced layers, ascending and deduplicated.
    pub fn layers(&self, model: &LayeredModel) -> Result<Vec<usize>> {
        let n = model.n_layers();
        let Some(subset) = &self.layer_subset else {
            return Ok((1..=n).collect());
        };
        let mut layers = subset.clone();
        layers.sort_unstable();
        layers.dedup();
        if layers.is_empty() {
            return Err(Error::InvalidInput("empty layer subset".into()));
        }
        if let Some(&bad) = layers.iter().find(|&&l| l == 0 || l > n) {
            return Err(Error::LayerOutOfRange {
                layer: bad,
                n_layers: n,
            });
        }
        Ok(layers)
    }
}

/// Both phases for one prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptAnalysis {
    pub particle: ParticleResult,
    pub vulnerability: VulnerabilityProfile,
}

/// Phase 1 end to end: trace, then locate.
pub fn task_particle(
    model: &LayeredModel,
    tokens: &[u32],
    config: &AnalysisConfig,
) -> Result<ParticleResult> {
    locate_task_particle(&capture_layer_distributions(model, tokens, config)?)
}

/// Phase 1 followed by phase 2 on the same layers.
pub fn analyze(
    model: &LayeredModel,
    tokens: &[u32],
    config: &AnalysisConfig,
) -> Result<PromptAnalysis> {
    Ok(PromptAnalysis {
        particle: task_particle(model, tokens, config)?,
        vulnerability: vulnerability_scan(model, tokens, config)?,
    })
}
