// SPDX-License-Identifier: MIT OR Apache-2.0

//! Depth-aware layer plan for hybrid architectures.
//!
//! Layers at or past the task particle get full-capacity mixers; earlier
//! layers may use lightweight ones. Independently, layers whose divergence
//! exceeds the `q`-quantile of the profile are frozen. The quantile is the
//! lower empirical one, `inf { x : F(x) ≥ q }`, so `q = 1` freezes nothing
//! and `q = 0` freezes everything.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::vulnerability::VulnerabilityProfile;

/// Default freeze quantile.
pub const DEFAULT_FREEZE_QUANTILE: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Capacity {
    Full,
    Lightweight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Training {
    Freeze,
    Trainable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerPlan {
    pub layer: usize,
    pub js: f64,
    pub capacity: Capacity,
    pub training: Training,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridPlan {
    pub n_layers: usize,
    pub particle_layer: usize,
    pub freeze_quantile: f64,
    /// `None` when the quantile is −∞ (`q = 0`).
    pub freeze_threshold: Option<f64>,
    pub layers: Vec<LayerPlan>,
    pub lightweight_count: usize,
    pub full_count: usize,
    /// Reduced `lightweight:full`, e.g. `2:1`.
    pub capacity_ratio: String,
    /// One letter per layer: `F` full capacity, `L` lightweight.
    pub capacity_pattern: String,
    pub frozen_layers: Vec<usize>,
    pub warnings: Vec<String>,
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Lower empirical quantile of `values`; `None` stands for −∞.
fn lower_quantile(values: &[f64], q: f64) -> Option<f64> {
    if q <= 0.0 {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (q * sorted.len() as f64 - 1e-9).ceil().max(1.0) as usize;
    Some(sorted[rank.min(sorted.len()) - 1])
}

/// Builds the per-layer plan from a full-depth profile and a particle layer.
pub fn advise_hybrid(
    profile: &VulnerabilityProfile,
    n_layers: usize,
    particle_layer: usize,
    q_freeze: f64,
) -> Result<HybridPlan> {
    if profile.layers != (1..=n_layers).collect::<Vec<_>>() {
        return Err(Error::InvalidInput(format!(
            "profile covers layers {:?}, expected every layer of a {n_layers}-layer model",
            profile.layers
        )));
    }
    if particle_layer == 0 || particle_layer > n_layers {
        return Err(Error::LayerOutOfRange {
            layer: particle_layer,
            n_layers,
        });
    }
    if !(0.0..=1.0).contains(&q_freeze) {
        return Err(Error::InvalidInput(format!(
            "freeze quantile must lie in [0, 1], got {q_freeze}"
        )));
    }

    let threshold = lower_quantile(&profile.js_per_layer, q_freeze);
    let layers: Vec<LayerPlan> = profile
        .layers
        .iter()
        .zip(&profile.js_per_layer)
        .map(|(&layer, &js)| LayerPlan {
            layer,
            js,
            capacity: if layer >= particle_layer {
                Capacity::Full
            } else {
                Capacity::Lightweight
            },
            training: match threshold {
                Some(t) if js <= t => Training::Trainable,
                _ => Training::Freeze,
            },
        })
        .collect();

    let full = layers
        .iter()
        .filter(|l| l.capacity == Capacity::Full)
        .count();
    let light = n_layers - full;
    let g = gcd(light, full).max(1);
    let frozen_layers: Vec<usize> = layers
        .iter()
        .filter(|l| l.training == Training::Freeze)
        .map(|l| l.layer)
        .collect();
    let mut warnings = Vec::new();
    if frozen_layers.len() == n_layers {
        warnings.push(format!(
            "freeze quantile {q_freeze} freezes every layer; nothing is left trainable"
        ));
    }
    if profile.degenerate {
        warnings
            .push("vulnerability profile is degenerate; the freeze set is not informative".into());
    }
    Ok(HybridPlan {
        n_layers,
        particle_layer,
        freeze_quantile: q_freeze,
        freeze_threshold: threshold,
        capacity_pattern: layers
            .iter()
            .map(|l| match l.capacity {
                Capacity::Full => 'F',
                Capacity::Lightweight => 'L',
            })
            .collect(),
        layers,
        lightweight_count: light,
        full_count: full,
        capacity_ratio: format!("{}:{}", light / g, full / g),
        frozen_layers,
        warnings,
    })
}
