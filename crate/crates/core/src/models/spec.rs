// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kind of sequence mixer inside one block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockKind {
    /// Causal multi-head softmax attention.
    Attention,
    /// Single-head unnormalized linear attention with a cumulative key-value state.
    Linear,
}

impl BlockKind {
    pub fn id(self) -> u8 {
        match self {
            BlockKind::Attention => 0,
            BlockKind::Linear => 1,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(BlockKind::Attention),
            1 => Some(BlockKind::Linear),
            _ => None,
        }
    }

    fn letter(self) -> char {
        match self {
            BlockKind::Attention => 'A',
            BlockKind::Linear => 'L',
        }
    }
}

/// Model architecture.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arch {
    DecoderAttention,
    LinearAttention,
    /// One mixer kind per layer.
    HybridSequence(Vec<BlockKind>),
}

impl Arch {
    /// Arch id as stored in the weight file header.
    pub fn id(&self) -> u8 {
        match self {
            Arch::DecoderAttention => 0,
            Arch::LinearAttention => 1,
            Arch::HybridSequence(_) => 2,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Arch::DecoderAttention => "decoder-attention",
            Arch::LinearAttention => "linear-attention",
            Arch::HybridSequence(_) => "hybrid-sequence",
        }
    }

    /// Builds a hybrid layer list by cycling `pattern` (letters `A`/`L`) to `n_layers`.
    pub fn hybrid_from_pattern(pattern: &str, n_layers: usize) -> Result<Self> {
        let kinds: Vec<BlockKind> = pattern
            .chars()
            .map(|c| match c.to_ascii_uppercase() {
                'A' => Ok(BlockKind::Attention),
                'L' => Ok(BlockKind::Linear),
                other => Err(Error::InvalidSpec {
                    field: "pattern",
                    reason: format!("contains `{other}`; use A (attention) or L (linear)"),
                }),
            })
            .collect::<Result<_>>()?;
        if kinds.is_empty() {
            return Err(Error::InvalidSpec {
                field: "pattern",
                reason: "is empty".into(),
            });
        }
        Ok(Arch::HybridSequence(
            kinds.iter().copied().cycle().take(n_layers).collect(),
        ))
    }

    /// The letter pattern for a hybrid arch, e.g. `AAALAAAL`.
    pub fn pattern(&self, n_layers: usize) -> String {
        (0..n_layers).map(|l| self.block_kind(l).letter()).collect()
    }

    /// Mixer kind of the 0-based layer `index`.
    pub fn block_kind(&self, index: usize) -> BlockKind {
        match self {
            Arch::DecoderAttention => BlockKind::Attention,
            Arch::LinearAttention => BlockKind::Linear,
            Arch::HybridSequence(kinds) => kinds[index],
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arch {
    type Err = Error;

    /// Parses the non-hybrid arch names; hybrids go through [`Arch::hybrid_from_pattern`].
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "decoder" | "decoder-attention" => Ok(Arch::DecoderAttention),
            "linear" | "linear-attention" => Ok(Arch::LinearAttention),
            other => Err(Error::InvalidSpec {
                field: "arch",
                reason: format!("unknown architecture `{other}`"),
            }),
        }
    }
}

/// Architecture description of a [`LayeredModel`](super::LayeredModel).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub arch: Arch,
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_seq: usize,
}

impl ModelSpec {
    /// The 12-layer byte-vocabulary reference configuration.
    pub fn reference(arch: Arch) -> Self {
        Self {
            arch,
            n_layers: 12,
            d_model: 64,
            n_heads: 4,
            d_ff: 128,
            vocab_size: 256,
            max_seq: 128,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field, reason: &str| {
            Err(Error::InvalidSpec {
                field,
                reason: reason.to_string(),
            })
        };
        if self.n_layers == 0 {
            return bad("n_layers", "must be at least 1");
        }
        if self.d_model == 0 {
            return bad("d_model", "must be at least 1");
        }
        if self.n_heads == 0 {
            return bad("n_heads", "must be at least 1");
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::InvalidSpec {
                field: "d_model",
                reason: format!(
                    "({}) must be divisible by n_heads ({})",
                    self.d_model, self.n_heads
                ),
            });
        }
        if self.d_ff == 0 {
            return bad("d_ff", "must be at least 1");
        }
        if self.vocab_size < 2 {
            return bad("vocab_size", "must be at least 2");
        }
        if self.max_seq == 0 {
            return bad("max_seq", "must be at least 1");
        }
        if let Arch::HybridSequence(kinds) = &self.arch {
            if kinds.len() != self.n_layers {
                return Err(Error::InvalidSpec {
                    field: "arch",
                    reason: format!(
                        "hybrid layer list has {} entries for {} layers",
                        kinds.len(),
                        self.n_layers
                    ),
                });
            }
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}
