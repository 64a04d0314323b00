// SPDX-License-Identifier: MIT OR Apache-2.0

//! JSON report documents. Schemas live in `crates/core/schema/`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::{
    AggregateReport, AnalysisConfig, HybridPlan, ParticleResult, TokenProb, VulnerabilityProfile,
};
use crate::error::Result;
use crate::models::ModelSpec;

pub const SCHEMA_VERSION: u32 = 1;

pub const PROMPT_REPORT_SCHEMA: &str = include_str!("../../schema/prompt-report.schema.json");
pub const AGGREGATE_REPORT_SCHEMA: &str = include_str!("../../schema/aggregate-report.schema.json");
pub const PLAN_SCHEMA: &str = include_str!("../../schema/plan.schema.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub arch: String,
    pub n_layers: usize,
    pub d_model: usize,
    pub vocab_size: usize,
}

impl From<&ModelSpec> for ModelInfo {
    fn from(spec: &ModelSpec) -> Self {
        Self {
            arch: spec.arch.name().to_string(),
            n_layers: spec.n_layers,
            d_model: spec.d_model,
            vocab_size: spec.vocab_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigInfo {
    pub top_k: usize,
    pub mask_fraction: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl From<&AnalysisConfig> for ConfigInfo {
    fn from(c: &AnalysisConfig) -> Self {
        Self {
            top_k: c.top_k,
            mask_fraction: c.perturbation.mask_fraction,
            noise_std: c.perturbation.noise_std,
            seed: c.perturbation.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptInfo {
    pub index: usize,
    pub text: String,
    pub category: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleInfo {
    pub target_token: u32,
    pub layer: usize,
    pub ratio: f64,
    pub relative_depth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VulnerabilityInfo {
    pub layer: usize,
    pub lrs: Option<f64>,
    pub degenerate: bool,
}

/// One per-layer row of a prompt report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRow {
    pub index: usize,
    /// `None` when the particle phase did not run.
    pub target_prob: Option<f64>,
    pub ratio: Option<f64>,
    /// `None` when the vulnerability phase did not run.
    pub js: Option<f64>,
    pub top_k: Vec<TokenProb>,
}

/// Per-prompt result document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptReport {
    pub schema_version: u32,
    pub kind: String,
    pub prompt: Option<PromptInfo>,
    pub model: ModelInfo,
    pub config: ConfigInfo,
    pub particle: Option<ParticleInfo>,
    pub layers: Vec<LayerRow>,
    pub vulnerability: Option<VulnerabilityInfo>,
}

impl PromptReport {
    /// Merges whichever phases ran into one document. Both phases, when
    /// present, must cover the same layers.
    pub fn new(
        spec: &ModelSpec,
        config: &AnalysisConfig,
        prompt: Option<PromptInfo>,
        particle: Option<&ParticleResult>,
        vulnerability: Option<&VulnerabilityProfile>,
    ) -> Self {
        let mut layers: Vec<LayerRow> = match (particle, vulnerability) {
            (Some(p), _) => p
                .trace
                .layers
                .iter()
                .map(|r| LayerRow {
                    index: r.layer,
                    target_prob: Some(r.target_prob),
                    ratio: r.ratio,
                    js: None,
                    top_k: r.top_k.clone(),
                })
                .collect(),
            (None, Some(v)) => v
                .layers
                .iter()
                .map(|&index| LayerRow {
                    index,
                    target_prob: None,
                    ratio: None,
                    js: None,
                    top_k: Vec::new(),
                })
                .collect(),
            (None, None) => Vec::new(),
        };
        if let Some(v) = vulnerability {
            for row in &mut layers {
                row.js = v.js_at(row.index);
            }
        }
        Self {
            schema_version: SCHEMA_VERSION,
            kind: "prompt".into(),
            prompt,
            model: spec.into(),
            config: config.into(),
            particle: particle.map(|p| ParticleInfo {
                target_token: p.target_token,
                layer: p.particle_layer,
                ratio: p.particle_ratio,
                relative_depth: p.relative_depth,
            }),
            layers,
            vulnerability: vulnerability.map(|v| VulnerabilityInfo {
                layer: v.vulnerable_layer,
                lrs: v.lrs,
                degenerate: v.degenerate,
            }),
        }
    }

    /// Rebuilds the vulnerability profile from the per-layer `js` column.
    pub fn vulnerability_profile(&self) -> Option<VulnerabilityProfile> {
        let js: Option<Vec<f64>> = self.layers.iter().map(|r| r.js).collect();
        let perturbation = crate::models::Perturbation {
            layer: 1,
            mask_fraction: self.config.mask_fraction,
            noise_std: self.config.noise_std,
            seed: self.config.seed,
        };
        VulnerabilityProfile::from_divergences(
            self.layers.iter().map(|r| r.index).collect(),
            js?,
            perturbation,
        )
        .ok()
    }
}

/// Corpus-level document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateDocument {
    pub schema_version: u32,
    pub kind: String,
    pub model: ModelInfo,
    pub config: ConfigInfo,
    pub aggregate: AggregateReport,
}

impl AggregateDocument {
    pub fn new(spec: &ModelSpec, config: &AnalysisConfig, aggregate: AggregateReport) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            kind: "aggregate".into(),
            model: spec.into(),
            config: config.into(),
            aggregate,
        }
    }
}

/// Hybrid layout plan document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDocument {
    pub schema_version: u32,
    pub kind: String,
    pub plan: HybridPlan,
}

impl PlanDocument {
    pub fn new(plan: HybridPlan) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            kind: "plan".into(),
            plan,
        }
    }
}

/// Pretty-printed JSON with a trailing newline. Field order follows the
/// struct definitions and map keys are sorted, so output is deterministic.
pub fn to_json_string<T: Serialize>(doc: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(doc)?;
    s.push('\n');
    Ok(s)
}

pub fn emit_json<T: Serialize>(doc: &T, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_json_string(doc)?)?;
    Ok(())
}
