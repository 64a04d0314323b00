// SPDX-License-Identifier: MIT OR Apache-2.0

//! Layered reference models: the forward-pass contract with per-layer
//! capture, early exit and mixer-output perturbation, plus planted-particle
//! constructors and the LTRC weight file format.

mod layered;
mod ltrc;
mod perturb;
mod plant;
mod spec;

pub use layered::{Block, CapturedState, ForwardOutput, LayeredModel};
pub use ltrc::{load_weights, read_weights, save_weights, write_weights, FORMAT_VERSION, MAGIC};
pub use perturb::Perturbation;
pub use plant::{default_plant_strength, plant_particle, PLANT_DAMPING};
pub use spec::{Arch, BlockKind, ModelSpec};

/// Byte-level tokenization: one token per byte, id = byte value.
pub fn byte_tokens(bytes: &[u8]) -> Vec<u32> {
    bytes.iter().map(|&b| u32::from(b)).collect()
}
