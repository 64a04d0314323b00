// SPDX-License-Identifier: MIT OR Apache-2.0

//! Models with a known task particle.

use crate::error::{Error, Result};

use super::layered::LayeredModel;
use super::spec::ModelSpec;

/// Factor applied to every mixer and feed-forward projection of a planted model.
pub const PLANT_DAMPING: f32 = 0.05;

/// Default injection strength for width `d_model`: four times the expected
/// norm of a unit-variance token embedding.
pub fn default_plant_strength(d_model: usize) -> f32 {
    4.0 * (d_model as f32).sqrt()
}

/// `init_random(spec, seed)` with damped projections and block `layer`'s
/// mixer output bias set to `strength · u_target / ‖u_target‖`.
///
/// The injection raises the target logit sharply at `layer` and nowhere else,
/// and ablating that block's mixer removes it. `strength == 0` returns the
/// plain random model.
pub fn plant_particle(
    spec: &ModelSpec,
    layer: usize,
    target: u32,
    strength: f32,
    seed: u64,
) -> Result<LayeredModel> {
    let mut model = LayeredModel::init_random(spec, seed)?;
    if layer == 0 || layer > spec.n_layers {
        return Err(Error::LayerOutOfRange {
            layer,
            n_layers: spec.n_layers,
        });
    }
    if target as usize >= spec.vocab_size {
        return Err(Error::TokenOutOfRange {
            id: target,
            vocab_size: spec.vocab_size,
        });
    }
    if !strength.is_finite() || strength < 0.0 {
        return Err(Error::InvalidInput(format!(
            "plant strength must be finite and >= 0, got {strength}"
        )));
    }
    if strength == 0.0 {
        return Ok(model);
    }

    for block in model.blocks_mut() {
        for w in [
            &mut block.wq,
            &mut block.wk,
            &mut block.wv,
            &mut block.wo,
            &mut block.ffn_up,
            &mut block.ffn_down,
        ] {
            w.scale(PLANT_DAMPING);
        }
    }
    let direction = model.unembedding(target as usize).to_vec();
    let norm = direction
        .iter()
        .map(|v| f64::from(*v).powi(2))
        .sum::<f64>()
        .sqrt();
    if norm == 0.0 {
        return Err(Error::InvalidInput(format!(
            "unembedding row of token {target} is zero"
        )));
    }
    let bias = &mut model.blocks_mut()[layer - 1].out_bias;
    for (b, u) in bias.iter_mut().zip(&direction) {
        *b = (f64::from(strength) * f64::from(*u) / norm) as f32;
    }
    Ok(model)
}
