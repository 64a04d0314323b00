// SPDX-License-Identifier: MIT OR Apache-2.0

//! LTRC weight files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "LTRC" | version u16 | arch id u8
//! | n_layers u32 | d_model u32 | n_heads u32 | d_ff u32 | vocab_size u32 | max_seq u32
//! | (hybrid only) n_layers block-kind bytes, 0 = attention, 1 = linear
//! | tensors, repeated until the checksum:
//!     name_len u16 | UTF-8 name | rank u8 | dims u32[rank] | f32[product(dims)]
//! | CRC32 (IEEE) of every preceding byte
//! ```
//!
//! Tensors are written in a fixed order (`embed`, `pos_embed`, then
//! `blocks.{i}.*` for i = 0..n_layers, `final_norm`, `lm_head`). Version 1
//! models are initialized with the ChaCha8 stream in `numerics`.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

use super::layered::{Block, LayeredModel};
use super::spec::{Arch, BlockKind, ModelSpec};

pub const MAGIC: [u8; 4] = *b"LTRC";
pub const FORMAT_VERSION: u16 = 1;

const HEADER_LEN: usize = 4 + 2 + 1 + 6 * 4;

struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

fn tensor_list(model: &LayeredModel) -> Vec<(String, Vec<usize>, &[f32])> {
    let mat = |m: &Matrix| vec![m.rows(), m.cols()];
    let mut out: Vec<(String, Vec<usize>, &[f32])> = vec![
        ("embed".into(), mat(&model.embed), model.embed.values()),
        (
            "pos_embed".into(),
            mat(&model.pos_embed),
            model.pos_embed.values(),
        ),
    ];
    for (i, b) in model.blocks.iter().enumerate() {
        let p = |n: &str| format!("blocks.{i}.{n}");
        out.push((p("mixer_norm"), vec![b.mixer_norm.len()], &b.mixer_norm));
        out.push((p("wq"), mat(&b.wq), b.wq.values()));
        out.push((p("wk"), mat(&b.wk), b.wk.values()));
        out.push((p("wv"), mat(&b.wv), b.wv.values()));
        out.push((p("wo"), mat(&b.wo), b.wo.values()));
        out.push((p("out_bias"), vec![b.out_bias.len()], &b.out_bias));
        out.push((p("ffn_norm"), vec![b.ffn_norm.len()], &b.ffn_norm));
        out.push((p("ffn_up"), mat(&b.ffn_up), b.ffn_up.values()));
        out.push((p("ffn_down"), mat(&b.ffn_down), b.ffn_down.values()));
    }
    out.push((
        "final_norm".into(),
        vec![model.final_norm.len()],
        &model.final_norm,
    ));
    out.push((
        "lm_head".into(),
        mat(&model.lm_head),
        model.lm_head.values(),
    ));
    out
}

/// Serializes `model` to LTRC bytes.
pub fn write_weights(model: &LayeredModel) -> Vec<u8> {
    let spec = &model.spec;
    let mut buf = Vec::new();
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.push(spec.arch.id());
    for v in [
        spec.n_layers,
        spec.d_model,
        spec.n_heads,
        spec.d_ff,
        spec.vocab_size,
        spec.max_seq,
    ] {
        buf.extend_from_slice(&(v as u32).to_le_bytes());
    }
    if let Arch::HybridSequence(kinds) = &spec.arch {
        buf.extend(kinds.iter().map(|k| k.id()));
    }
    for (name, dims, data) in tensor_list(model) {
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.push(dims.len() as u8);
        for d in &dims {
            buf.extend_from_slice(&(*d as u32).to_le_bytes());
        }
        for v in data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

pub fn save_weights(model: &LayeredModel, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, write_weights(model))?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<LayeredModel> {
    read_weights(&std::fs::read(path)?)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Truncated(format!("while reading {what}")));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

/// Parses and validates LTRC bytes.
pub fn read_weights(bytes: &[u8]) -> Result<LayeredModel> {
    if bytes.len() < 4 {
        return Err(Error::Truncated("shorter than the magic".into()));
    }
    let found: [u8; 4] = bytes[..4].try_into().unwrap();
    if found != MAGIC {
        return Err(Error::BadMagic { found });
    }
    if bytes.len() < 6 {
        return Err(Error::Truncated("missing format version".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    if bytes.len() < HEADER_LEN + 4 {
        return Err(Error::Truncated("header incomplete".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }

    let mut cur = Cursor {
        bytes: body,
        pos: 6,
    };
    let arch_id = cur.u8("arch id")?;
    let mut fields = [0usize; 6];
    for f in &mut fields {
        *f = cur.u32("spec fields")? as usize;
    }
    let [n_layers, d_model, n_heads, d_ff, vocab_size, max_seq] = fields;
    let arch = match arch_id {
        0 => Arch::DecoderAttention,
        1 => Arch::LinearAttention,
        2 => {
            let kinds = cur
                .take(n_layers, "hybrid layer kinds")?
                .iter()
                .map(|&id| {
                    BlockKind::from_id(id)
                        .ok_or_else(|| Error::ShapeMismatch(format!("unknown block kind id {id}")))
                })
                .collect::<Result<Vec<_>>>()?;
            Arch::HybridSequence(kinds)
        }
        other => return Err(Error::ShapeMismatch(format!("unknown arch id {other}"))),
    };
    let spec = ModelSpec {
        arch,
        n_layers,
        d_model,
        n_heads,
        d_ff,
        vocab_size,
        max_seq,
    };
    spec.validate()
        .map_err(|e| Error::ShapeMismatch(format!("header describes an invalid model: {e}")))?;

    let mut tensors: HashMap<String, Tensor> = HashMap::new();
    while cur.remaining() > 0 {
        let name_len = cur.u16("tensor name length")? as usize;
        let name = std::str::from_utf8(cur.take(name_len, "tensor name")?)
            .map_err(|_| Error::ShapeMismatch("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = cur.u8("tensor rank")? as usize;
        let dims = (0..rank)
            .map(|_| cur.u32("tensor dims").map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|c| c.checked_mul(4).is_some_and(|b| b <= cur.remaining()))
            .ok_or_else(|| Error::Truncated(format!("tensor `{name}` data")))?;
        let data = cur
            .take(count * 4, "tensor data")?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if tensors
            .insert(name.clone(), Tensor { dims, data })
            .is_some()
        {
            return Err(Error::ShapeMismatch(format!("duplicate tensor `{name}`")));
        }
    }

    let mut take = |name: &str, dims: &[usize]| -> Result<Vec<f32>> {
        let t = tensors
            .remove(name)
            .ok_or_else(|| Error::ShapeMismatch(format!("missing tensor `{name}`")))?;
        if t.dims != dims {
            return Err(Error::ShapeMismatch(format!(
                "tensor `{name}` has dims {:?}, expected {:?}",
                t.dims, dims
            )));
        }
        if t.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::ShapeMismatch(format!(
                "tensor `{name}` has non-finite values"
            )));
        }
        Ok(t.data)
    };
    let mut matrix = |name: &str, rows: usize, cols: usize| -> Result<Matrix> {
        Matrix::new(rows, cols, take(name, &[rows, cols])?)
    };
    let embed = matrix("embed", vocab_size, d_model)?;
    let pos_embed = matrix("pos_embed", max_seq, d_model)?;
    let mut mats = Vec::with_capacity(n_layers);
    for i in 0..n_layers {
        let p = |n: &str| format!("blocks.{i}.{n}");
        mats.push([
            matrix(&p("wq"), d_model, d_model)?,
            matrix(&p("wk"), d_model, d_model)?,
            matrix(&p("wv"), d_model, d_model)?,
            matrix(&p("wo"), d_model, d_model)?,
            matrix(&p("ffn_up"), d_model, d_ff)?,
            matrix(&p("ffn_down"), d_ff, d_model)?,
        ]);
    }
    let lm_head = matrix("lm_head", vocab_size, d_model)?;

    let mut blocks = Vec::with_capacity(n_layers);
    for (i, [wq, wk, wv, wo, ffn_up, ffn_down]) in mats.into_iter().enumerate() {
        let p = |n: &str| format!("blocks.{i}.{n}");
        blocks.push(Block {
            kind: spec.arch.block_kind(i),
            mixer_norm: take(&p("mixer_norm"), &[d_model])?,
            wq,
            wk,
            wv,
            wo,
            out_bias: take(&p("out_bias"), &[d_model])?,
            ffn_norm: take(&p("ffn_norm"), &[d_model])?,
            ffn_up,
            ffn_down,
        });
    }
    let final_norm = take("final_norm", &[d_model])?;

    if let Some(extra) = tensors.keys().min() {
        return Err(Error::ShapeMismatch(format!("unexpected tensor `{extra}`")));
    }
    Ok(LayeredModel {
        spec,
        embed,
        pos_embed,
        blocks,
        final_norm,
        lm_head,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(arch: Arch) -> LayeredModel {
        let spec = ModelSpec {
            arch,
            n_layers: 3,
            d_model: 8,
            n_heads: 2,
            d_ff: 16,
            vocab_size: 20,
            max_seq: 8,
        };
        LayeredModel::init_random(&spec, 17).unwrap()
    }

    fn reseal(mut bytes: Vec<u8>) -> Vec<u8> {
        let n = bytes.len() - 4;
        let crc = crc32fast::hash(&bytes[..n]);
        bytes[n..].copy_from_slice(&crc.to_le_bytes());
        bytes
    }

    #[test]
    fn header_layout() {
        let bytes = write_weights(&model(Arch::hybrid_from_pattern("AAL", 3).unwrap()));
        assert_eq!(&bytes[..4], b"LTRC");
        assert_eq!(&bytes[4..6], &[1, 0]);
        assert_eq!(bytes[6], 2);
        assert_eq!(&bytes[7..11], &3u32.to_le_bytes());
        assert_eq!(&bytes[HEADER_LEN..HEADER_LEN + 3], &[0, 0, 1]);
        let first_name = HEADER_LEN + 3;
        assert_eq!(&bytes[first_name..first_name + 2], &5u16.to_le_bytes());
        assert_eq!(&bytes[first_name + 2..first_name + 7], b"embed");
    }

    #[test]
    fn round_trip() {
        for arch in [
            Arch::DecoderAttention,
            Arch::LinearAttention,
            Arch::hybrid_from_pattern("AL", 3).unwrap(),
        ] {
            let m = model(arch);
            assert_eq!(read_weights(&write_weights(&m)).unwrap(), m);
        }
    }

    #[test]
    fn error_categories() {
        let good = write_weights(&model(Arch::DecoderAttention));

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(read_weights(&bad), Err(Error::BadMagic { .. })));

        let mut bad = good.clone();
        bad[4] = 9;
        assert!(matches!(
            read_weights(&bad),
            Err(Error::UnsupportedVersion { found: 9, .. })
        ));

        let mut bad = good.clone();
        let mid = bad.len() / 2;
        bad[mid] ^= 0x40;
        assert!(matches!(read_weights(&bad), Err(Error::Checksum { .. })));

        assert!(matches!(
            read_weights(&good[..good.len() - 10]),
            Err(Error::Checksum { .. })
        ));
        assert!(matches!(
            read_weights(&good[..12]),
            Err(Error::Truncated(_))
        ));

        // a consistent checksum over an inconsistent header
        let mut bad = good.clone();
        bad[11..15].copy_from_slice(&9u32.to_le_bytes());
        assert!(matches!(
            read_weights(&reseal(bad)),
            Err(Error::ShapeMismatch(_))
        ));
    }
}
