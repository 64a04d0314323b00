// SPDX-License-Identifier: MIT OR Apache-2.0

//! Task-particle localization over a logit-lens trace.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::LayeredModel;

use super::AnalysisConfig;

/// One candidate token and its probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenProb {
    pub token: u32,
    pub prob: f64,
}

/// Logit-lens readout of one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    /// 1-based layer index.
    pub layer: usize,
    /// Probability of the target token at this layer.
    pub target_prob: f64,
    /// Most probable tokens, descending.
    pub top_k: Vec<TokenProb>,
    /// Relative increase over the previous traced layer; `None` for the first
    /// traced layer and wherever `target_prob` falls below the ratio guard.
    pub ratio: Option<f64>,
}

/// Per-layer target-token trajectory for one prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerTrace {
    pub target_token: u32,
    pub n_layers: usize,
    pub layers: Vec<LayerRecord>,
}

impl LayerTrace {
    pub fn target_probs(&self) -> Vec<f64> {
        self.layers.iter().map(|r| r.target_prob).collect()
    }

    /// Builds a trace from a bare probability series over layers `1..=len`,
    /// filling ratios with `eps` as the guard.
    pub fn from_series(target_token: u32, probs: &[f64], eps: f64) -> Result<Self> {
        let mut layers = Vec::with_capacity(probs.len());
        for (i, &p) in probs.iter().enumerate() {
            let ratio = match i {
                0 => None,
                _ => relative_increase_ratio(probs[i - 1], p, eps)?,
            };
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidInput(format!(
                    "probability {p} outside [0, 1]"
                )));
            }
            layers.push(LayerRecord {
                layer: i + 1,
                target_prob: p,
                top_k: Vec::new(),
                ratio,
            });
        }
        Ok(Self {
            target_token,
            n_layers: probs.len(),
            layers,
        })
    }
}

/// Localized task particle for one prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleResult {
    pub target_token: u32,
    pub particle_layer: usize,
    pub particle_ratio: f64,
    /// `particle_layer / n_layers`.
    pub relative_depth: f64,
    pub trace: LayerTrace,
}

/// `(p_curr − p_prev) / p_curr`, or `None` when `p_curr < eps`.
pub fn relative_increase_ratio(p_prev: f64, p_curr: f64, eps: f64) -> Result<Option<f64>> {
    for p in [p_prev, p_curr] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidInput(format!(
                "probability {p} outside [0, 1]"
            )));
        }
    }
    if p_curr < eps {
        return Ok(None);
    }
    Ok(Some((p_curr - p_prev) / p_curr))
}

/// Projects every traced layer's hidden state through the LM head and
/// records the final-distribution argmax token's probability.
pub fn capture_layer_distributions(
    model: &LayeredModel,
    tokens: &[u32],
    config: &AnalysisConfig,
) -> Result<LayerTrace> {
    config.validate(model)?;
    let layers = config.layers(model)?;
    let full = model.forward(tokens, true)?;
    let target = full.dist.argmax();
    let captures = full.captures.unwrap_or_default();
    let mut records: Vec<LayerRecord> = Vec::with_capacity(layers.len());
    for &layer in &layers {
        let dist = model.project(&captures[layer - 1].hidden)?;
        let target_prob = dist.get(target);
        let ratio = match records.last() {
            Some(prev) => relative_increase_ratio(prev.target_prob, target_prob, config.ratio_eps)?,
            None => None,
        };
        records.push(LayerRecord {
            layer,
            target_prob,
            top_k: dist
                .top_k(config.top_k)
                .into_iter()
                .map(|(token, prob)| TokenProb {
                    token: token as u32,
                    prob,
                })
                .collect(),
            ratio,
        });
    }
    Ok(LayerTrace {
        target_token: target as u32,
        n_layers: model.n_layers(),
        layers: records,
    })
}

/// The smallest layer attaining the maximum defined ratio.
pub fn locate_task_particle(trace: &LayerTrace) -> Result<ParticleResult> {
    let mut best: Option<(usize, f64)> = None;
    for rec in &trace.layers {
        if let Some(r) = rec.ratio {
            if best.is_none_or(|(_, b)| r > b) {
                best = Some((rec.layer, r));
            }
        }
    }
    let (layer, ratio) = best.ok_or(Error::DegenerateTrace)?;
    Ok(ParticleResult {
        target_token: trace.target_token,
        particle_layer: layer,
        particle_ratio: ratio,
        relative_depth: layer as f64 / trace.n_layers as f64,
        trace: trace.clone(),
    })
}
