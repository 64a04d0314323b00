// SPDX-License-Identifier: MIT OR Apache-2.0

//! The layered forward pass and its two reference mixers.
//!
//! Every block is pre-norm:
//!
//! ```text
//! m = mixer(rms_norm(x, mixer_norm)) · wo + out_bias     <- perturbation point
//! x = x + m
//! x = x + silu(rms_norm(x, ffn_norm) · ffn_up) · ffn_down
//! ```
//!
//! The hidden state `h_l` of layer `l` is the residual stream at the last
//! prompt position after block `l`. Every per-layer distribution (final or
//! intermediate) goes through the same `final_norm` and `lm_head`.

use crate::error::{Error, Result};
use crate::numerics::{matmul, matvec, rms_norm, softmax, Matrix, ProbDist, RngStream, RMS_EPS};

use super::perturb::Perturbation;
use super::spec::{BlockKind, ModelSpec};

/// Parameters of one block.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub kind: BlockKind,
    pub mixer_norm: Vec<f32>,
    /// `d_model × d_model` projections.
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
    pub wo: Matrix,
    /// Added to the mixer output; zero unless a particle is planted.
    pub out_bias: Vec<f32>,
    pub ffn_norm: Vec<f32>,
    /// `d_model × d_ff`.
    pub ffn_up: Matrix,
    /// `d_ff × d_model`.
    pub ffn_down: Matrix,
}

/// A residual-stream snapshot at the last prompt position.
#[derive(Debug, Clone, PartialEq)]
pub struct CapturedState {
    /// 1-based layer index.
    pub layer: usize,
    pub hidden: Vec<f32>,
}

/// Output of [`LayeredModel::forward`].
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub dist: ProbDist,
    pub captures: Option<Vec<CapturedState>>,
}

/// A stack of blocks with token/position embeddings, a final RMS norm and an LM head.
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredModel {
    pub(crate) spec: ModelSpec,
    /// `vocab_size × d_model`.
    pub(crate) embed: Matrix,
    /// `max_seq × d_model`.
    pub(crate) pos_embed: Matrix,
    pub(crate) blocks: Vec<Block>,
    pub(crate) final_norm: Vec<f32>,
    /// `vocab_size × d_model`; row `t` is the unembedding vector of token `t`.
    pub(crate) lm_head: Matrix,
}

impl LayeredModel {
    /// Random initialization, deterministic in `seed`.
    ///
    /// Draw order from one [`RngStream`]: token embedding, position embedding,
    /// then per block `wq, wk, wv, wo, ffn_up, ffn_down`, then `lm_head`.
    /// Token embeddings are `U(-√3, √3)` (unit variance), position embeddings
    /// have standard deviation 0.1, projections are `U(±√(3/fan_in))`, norm
    /// gains are one and output biases zero.
    pub fn init_random(spec: &ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = RngStream::new(seed);
        let d = spec.d_model;
        let mut uniform = |rows: usize, cols: usize, half_width: f32| {
            Matrix::from_fn(rows, cols, |_, _| {
                rng.uniform_range(-half_width, half_width)
            })
        };
        let fan_in = |n: usize| (3.0 / n as f32).sqrt();

        let embed = uniform(spec.vocab_size, d, 3f32.sqrt());
        let pos_embed = uniform(spec.max_seq, d, 0.1 * 3f32.sqrt());
        let blocks = (0..spec.n_layers)
            .map(|l| Block {
                kind: spec.arch.block_kind(l),
                mixer_norm: vec![1.0; d],
                wq: uniform(d, d, fan_in(d)),
                wk: uniform(d, d, fan_in(d)),
                wv: uniform(d, d, fan_in(d)),
                wo: uniform(d, d, fan_in(d)),
                out_bias: vec![0.0; d],
                ffn_norm: vec![1.0; d],
                ffn_up: uniform(d, spec.d_ff, fan_in(d)),
                ffn_down: uniform(spec.d_ff, d, fan_in(spec.d_ff)),
            })
            .collect();
        let lm_head = uniform(spec.vocab_size, d, fan_in(d));
        Ok(Self {
            spec: spec.clone(),
            embed,
            pos_embed,
            blocks,
            final_norm: vec![1.0; d],
            lm_head,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn n_layers(&self) -> usize {
        self.spec.n_layers
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [Block] {
        &mut self.blocks
    }

    /// Unembedding vector of `token`.
    pub fn unembedding(&self, token: usize) -> &[f32] {
        self.lm_head.row(token)
    }

    /// Final distribution, plus `h_1..h_N` when `capture` is set.
    pub fn forward(&self, tokens: &[u32], capture: bool) -> Result<ForwardOutput> {
        let mut captures = capture.then(|| Vec::with_capacity(self.n_layers()));
        let hidden = self.run(tokens, self.n_layers(), None, |layer, h| {
            if let Some(c) = captures.as_mut() {
                c.push(CapturedState {
                    layer,
                    hidden: h.to_vec(),
                });
            }
        })?;
        Ok(ForwardOutput {
            dist: self.project(&hidden)?,
            captures,
        })
    }

    /// Runs blocks `1..=layer` only and returns `h_layer`.
    pub fn forward_until(&self, tokens: &[u32], layer: usize) -> Result<CapturedState> {
        self.check_layer(layer)?;
        let hidden = self.run(tokens, layer, None, |_, _| {})?;
        Ok(CapturedState { layer, hidden })
    }

    /// Final distribution with `pert` applied to the mixer output of block `pert.layer`.
    pub fn forward_perturbed(&self, tokens: &[u32], pert: &Perturbation) -> Result<ProbDist> {
        self.check_layer(pert.layer)?;
        pert.validate()?;
        let hidden = self.run(tokens, self.n_layers(), Some(pert), |_, _| {})?;
        self.project(&hidden)
    }

    /// Logit-lens projection: `softmax(lm_head · final_norm(hidden))`.
    pub fn project(&self, hidden: &[f32]) -> Result<ProbDist> {
        let normed = rms_norm(hidden, &self.final_norm, RMS_EPS)?;
        let logits = matvec(&self.lm_head, &normed)?;
        softmax(&logits)
    }

    fn check_layer(&self, layer: usize) -> Result<()> {
        if layer == 0 || layer > self.n_layers() {
            return Err(Error::LayerOutOfRange {
                layer,
                n_layers: self.n_layers(),
            });
        }
        Ok(())
    }

    fn check_tokens(&self, tokens: &[u32]) -> Result<()> {
        if tokens.is_empty() {
            return Err(Error::EmptySequence);
        }
        if tokens.len() > self.spec.max_seq {
            return Err(Error::SequenceTooLong {
                len: tokens.len(),
                max_seq: self.spec.max_seq,
            });
        }
        if let Some(&id) = tokens.iter().find(|&&t| t as usize >= self.spec.vocab_size) {
            return Err(Error::TokenOutOfRange {
                id,
                vocab_size: self.spec.vocab_size,
            });
        }
        Ok(())
    }

    /// Runs blocks `1..=last`, calling `observe(l, h_l)` after each, and
    /// returns the last-position residual after block `last`.
    fn run(
        &self,
        tokens: &[u32],
        last: usize,
        pert: Option<&Perturbation>,
        mut observe: impl FnMut(usize, &[f32]),
    ) -> Result<Vec<f32>> {
        self.check_tokens(tokens)?;
        let d = self.spec.d_model;
        let seq = tokens.len();
        let mut x = Matrix::from_fn(seq, d, |t, c| {
            self.embed.get(tokens[t] as usize, c) + self.pos_embed.get(t, c)
        });
        for (i, block) in self.blocks[..last].iter().enumerate() {
            let layer = i + 1;
            let mut mixed = self.mix(block, &x)?;
            if let Some(p) = pert.filter(|p| p.layer == layer) {
                p.apply(&mut mixed);
            }
            add_assign(&mut x, &mixed);
            let ff = feed_forward(block, &x)?;
            add_assign(&mut x, &ff);
            if x.values().iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "non-finite activation after layer {layer}"
                )));
            }
            observe(layer, x.row(seq - 1));
        }
        Ok(x.row(seq - 1).to_vec())
    }

    fn mix(&self, block: &Block, x: &Matrix) -> Result<Matrix> {
        let normed = rows_rms_norm(x, &block.mixer_norm)?;
        let q = matmul(&normed, &block.wq)?;
        let k = matmul(&normed, &block.wk)?;
        let v = matmul(&normed, &block.wv)?;
        let mixed = match block.kind {
            BlockKind::Attention => causal_attention(&q, &k, &v, self.spec.n_heads),
            BlockKind::Linear => linear_attention(&q, &k, &v),
        };
        let mut out = matmul(&mixed, &block.wo)?;
        for t in 0..out.rows() {
            for (o, b) in out.row_mut(t).iter_mut().zip(&block.out_bias) {
                *o += b;
            }
        }
        Ok(out)
    }
}

fn rows_rms_norm(x: &Matrix, gain: &[f32]) -> Result<Matrix> {
    let mut out = Vec::with_capacity(x.values().len());
    for t in 0..x.rows() {
        out.extend(rms_norm(x.row(t), gain, RMS_EPS)?);
    }
    Matrix::new(x.rows(), x.cols(), out)
}

fn add_assign(x: &mut Matrix, delta: &Matrix) {
    for (a, b) in x.values_mut().iter_mut().zip(delta.values()) {
        *a += b;
    }
}

fn silu(v: f32) -> f32 {
    v / (1.0 + (-v).exp())
}

fn feed_forward(block: &Block, x: &Matrix) -> Result<Matrix> {
    let normed = rows_rms_norm(x, &block.ffn_norm)?;
    let mut up = matmul(&normed, &block.ffn_up)?;
    up.values_mut().iter_mut().for_each(|v| *v = silu(*v));
    matmul(&up, &block.ffn_down)
}

/// Causal multi-head scaled dot-product attention over `seq × d` projections.
fn causal_attention(q: &Matrix, k: &Matrix, v: &Matrix, n_heads: usize) -> Matrix {
    let (seq, d) = (q.rows(), q.cols());
    let hd = d / n_heads;
    let scale = 1.0 / (hd as f64).sqrt();
    let mut out = Matrix::zeros(seq, d);
    let mut scores = vec![0f64; seq];
    for h in 0..n_heads {
        let cols = h * hd..(h + 1) * hd;
        for t in 0..seq {
            let qt = &q.row(t)[cols.clone()];
            for (j, s) in scores[..=t].iter_mut().enumerate() {
                *s = crate::numerics::dot(qt, &k.row(j)[cols.clone()]) * scale;
            }
            let max = scores[..=t]
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for s in &mut scores[..=t] {
                *s = (*s - max).exp();
                total += *s;
            }
            let mut acc = vec![0f64; hd];
            for (j, &w) in scores[..=t].iter().enumerate() {
                for (a, &vj) in acc.iter_mut().zip(&v.row(j)[cols.clone()]) {
                    *a += w / total * f64::from(vj);
                }
            }
            for (o, a) in out.row_mut(t)[cols.clone()].iter_mut().zip(acc) {
                *o = a as f32;
            }
        }
    }
    out
}

/// Unnormalized single-head linear attention:
/// `S_t = S_{t-1} + k_tᵀ v_t`, `o_t = q_t S_t / √d`.
fn linear_attention(q: &Matrix, k: &Matrix, v: &Matrix) -> Matrix {
    let (seq, d) = (q.rows(), q.cols());
    let scale = 1.0 / (d as f64).sqrt();
    let mut state = vec![0f64; d * d];
    let mut out = Matrix::zeros(seq, d);
    for t in 0..seq {
        let (kt, vt) = (k.row(t), v.row(t));
        for (i, &ki) in kt.iter().enumerate() {
            let row = &mut state[i * d..(i + 1) * d];
            for (s, &vj) in row.iter_mut().zip(vt) {
                *s += f64::from(ki) * f64::from(vj);
            }
        }
        let mut acc = vec![0f64; d];
        for (i, &qi) in q.row(t).iter().enumerate() {
            let qi = f64::from(qi);
            for (a, &s) in acc.iter_mut().zip(&state[i * d..(i + 1) * d]) {
                *a += qi * s;
            }
        }
        for (o, a) in out.row_mut(t).iter_mut().zip(acc) {
            *o = (a * scale) as f32;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::spec::Arch;

    fn small(arch: Arch) -> ModelSpec {
        ModelSpec {
            arch,
            n_layers: 4,
            d_model: 16,
            n_heads: 4,
            d_ff: 32,
            vocab_size: 256,
            max_seq: 32,
        }
    }

    #[test]
    fn init_is_deterministic_in_seed() {
        let spec = small(Arch::DecoderAttention);
        let a = LayeredModel::init_random(&spec, 3).unwrap();
        assert_eq!(a, LayeredModel::init_random(&spec, 3).unwrap());
        assert_ne!(a, LayeredModel::init_random(&spec, 4).unwrap());
    }

    #[test]
    fn init_rejects_invalid_spec() {
        let spec = ModelSpec {
            d_model: 65,
            n_heads: 8,
            ..small(Arch::DecoderAttention)
        };
        assert!(matches!(
            LayeredModel::init_random(&spec, 0),
            Err(Error::InvalidSpec {
                field: "d_model",
                ..
            })
        ));
    }

    #[test]
    fn forward_rejects_bad_tokens() {
        let m = LayeredModel::init_random(&small(Arch::LinearAttention), 1).unwrap();
        assert!(matches!(m.forward(&[], false), Err(Error::EmptySequence)));
        assert!(matches!(
            m.forward(&[0; 33], false),
            Err(Error::SequenceTooLong { .. })
        ));
        let spec = ModelSpec {
            vocab_size: 10,
            ..small(Arch::LinearAttention)
        };
        let m = LayeredModel::init_random(&spec, 1).unwrap();
        assert!(matches!(
            m.forward(&[3, 10], false),
            Err(Error::TokenOutOfRange { id: 10, .. })
        ));
        assert!(matches!(
            m.forward_until(&[1], 0),
            Err(Error::LayerOutOfRange { .. })
        ));
        assert!(matches!(
            m.forward_until(&[1], 5),
            Err(Error::LayerOutOfRange { .. })
        ));
    }

    #[test]
    fn capture_is_observation_only() {
        for arch in [Arch::DecoderAttention, Arch::LinearAttention] {
            let m = LayeredModel::init_random(&small(arch), 8).unwrap();
            let toks = [72, 101, 108, 108, 111];
            let plain = m.forward(&toks, false).unwrap();
            let captured = m.forward(&toks, true).unwrap();
            assert_eq!(plain.dist, captured.dist);
            assert!(plain.captures.is_none());
            let caps = captured.captures.unwrap();
            assert_eq!(caps.len(), 4);
            assert_eq!(
                caps.iter().map(|c| c.layer).collect::<Vec<_>>(),
                vec![1, 2, 3, 4]
            );
            assert!(caps.iter().all(|c| c.hidden.len() == 16));
        }
    }

    #[test]
    fn last_layer_matches_final_hidden() {
        let m = LayeredModel::init_random(&small(Arch::DecoderAttention), 2).unwrap();
        let toks = [1, 2, 3];
        let h = m.forward_until(&toks, 4).unwrap();
        assert_eq!(
            m.project(&h.hidden).unwrap(),
            m.forward(&toks, false).unwrap().dist
        );
    }

    #[test]
    fn first_layer_ignores_later_blocks() {
        let mut m = LayeredModel::init_random(&small(Arch::DecoderAttention), 2).unwrap();
        let toks = [5, 6, 7];
        let before = m.forward_until(&toks, 1).unwrap();
        m.blocks_mut()[1].wq.scale(3.0);
        m.blocks_mut()[1].out_bias[0] = 10.0;
        assert_eq!(before, m.forward_until(&toks, 1).unwrap());
        assert_ne!(
            m.forward_until(&toks, 2).unwrap(),
            LayeredModel::init_random(&small(Arch::DecoderAttention), 2)
                .unwrap()
                .forward_until(&toks, 2)
                .unwrap()
        );
    }

    #[test]
    fn perturbation_is_local_and_reproducible() {
        let m = LayeredModel::init_random(&small(Arch::DecoderAttention), 5).unwrap();
        let toks = [10, 20, 30, 40];
        let base = m.forward(&toks, false).unwrap().dist;
        let noop = Perturbation::new(2, 0.0, 0.0, 1).unwrap();
        assert!(
            m.forward_perturbed(&toks, &noop)
                .unwrap()
                .total_variation(&base)
                .unwrap()
                <= 1e-9
        );
        let p = Perturbation::new(3, 0.5, 0.1, 7).unwrap();
        let q = m.forward_perturbed(&toks, &p).unwrap();
        assert_eq!(q, m.forward_perturbed(&toks, &p).unwrap());
        assert!(q.total_variation(&base).unwrap() > 0.0);
        assert!(m
            .forward_perturbed(&toks, &Perturbation::ablation(9))
            .is_err());
    }

    #[test]
    fn linear_attention_matches_pairwise_form() {
        let mut rng = RngStream::new(4);
        let mut mk = || Matrix::from_fn(5, 6, |_, _| rng.uniform_range(-1.0, 1.0));
        let (q, k, v) = (mk(), mk(), mk());
        let out = linear_attention(&q, &k, &v);
        for t in 0..5 {
            for c in 0..6 {
                let direct: f64 = (0..=t)
                    .map(|j| crate::numerics::dot(q.row(t), k.row(j)) * f64::from(v.get(j, c)))
                    .sum::<f64>()
                    / 6f64.sqrt();
                assert!((f64::from(out.get(t, c)) - direct).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn attention_single_position_returns_value() {
        let q = Matrix::from_fn(1, 4, |_, c| c as f32);
        let v = Matrix::from_fn(1, 4, |_, c| 2.0 * c as f32 - 1.0);
        let out = causal_attention(&q, &q, &v, 2);
        assert_eq!(out, v);
    }
}
