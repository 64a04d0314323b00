// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream};

/// Interference applied to one block's mixer output before the residual add.
///
/// A fraction `mask_fraction` of the `d_model` channels is zeroed at every
/// position, then `N(0, noise_std²)` noise is added to every channel. The
/// channel set and the noise are drawn from ChaCha stream `layer` of `seed`,
/// so they depend only on `(seed, layer, mask_fraction)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    /// 1-based layer index.
    pub layer: usize,
    pub mask_fraction: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Perturbation {
    pub fn new(layer: usize, mask_fraction: f64, noise_std: f64, seed: u64) -> Result<Self> {
        let p = Self {
            layer,
            mask_fraction,
            noise_std,
            seed,
        };
        p.validate()?;
        Ok(p)
    }

    /// Full mixer-output ablation, no noise.
    pub fn ablation(layer: usize) -> Self {
        Self {
            layer,
            mask_fraction: 1.0,
            noise_std: 0.0,
            seed: 0,
        }
    }

    pub fn at_layer(self, layer: usize) -> Self {
        Self { layer, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.mask_fraction) {
            return Err(Error::InvalidInput(format!(
                "mask_fraction must lie in [0, 1], got {}",
                self.mask_fraction
            )));
        }
        if !self.noise_std.is_finite() || self.noise_std < 0.0 {
            return Err(Error::InvalidInput(format!(
                "noise_std must be a finite value >= 0, got {}",
                self.noise_std
            )));
        }
        Ok(())
    }

    pub fn is_noop(&self) -> bool {
        self.mask_fraction == 0.0 && self.noise_std == 0.0
    }

    /// Channels zeroed for a model of width `d_model`, sorted ascending.
    pub fn masked_channels(&self, d_model: usize) -> Vec<usize> {
        self.masked_channels_with(&mut self.stream(), d_model)
    }

    fn stream(&self) -> RngStream {
        RngStream::substream(self.seed, self.layer as u64)
    }

    fn masked_channels_with(&self, rng: &mut RngStream, d_model: usize) -> Vec<usize> {
        let count = (self.mask_fraction * d_model as f64).floor() as usize;
        let mut channels = rng.choose_indices(d_model, count);
        channels.sort_unstable();
        channels
    }

    /// Applies the interference in place to a `seq × d_model` mixer output.
    pub(crate) fn apply(&self, mixer_out: &mut Matrix) {
        if self.is_noop() {
            return;
        }
        let mut rng = self.stream();
        let channels = self.masked_channels_with(&mut rng, mixer_out.cols());
        for t in 0..mixer_out.rows() {
            let row = mixer_out.row_mut(t);
            for &c in &channels {
                row[c] = 0.0;
            }
        }
        if self.noise_std > 0.0 {
            for v in mixer_out.values_mut() {
                *v += (self.noise_std * rng.standard_normal()) as f32;
            }
        }
    }
}
