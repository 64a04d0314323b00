// SPDX-License-Identifier: MIT OR Apache-2.0

//! Layer-wise analysis of layered language models.
//!
//! Two phases run over any [`models::LayeredModel`]:
//!
//! 1. **Task particle.** Each layer's hidden state is projected through the
//!    final norm and LM head. The target token is the argmax of the final
//!    distribution, and the particle is the layer with the largest relative
//!    increase `(p_l − p_{l−1}) / p_l` of that token's probability.
//! 2. **Vulnerable layer.** Each block's mixer output is masked in turn, and
//!    the layer whose masking moves the final distribution furthest (base-2
//!    Jensen-Shannon divergence) is the vulnerable layer. The spread of those
//!    divergences across layers is summarized as the layer-wise relative
//!    stability (LRS).

pub mod analysis;
pub mod cli;
pub mod error;
pub mod models;
pub mod numerics;
pub mod report;

pub use error::{Error, Result};
