// SPDX-License-Identifier: MIT OR Apache-2.0

//! Base-2 Kullback-Leibler and Jensen-Shannon divergences.

use crate::error::{Error, Result};
use crate::numerics::ProbDist;

/// Floor applied to `q_i` in [`kl_divergence`].
pub const KL_EPS: f64 = 1e-12;

fn check_lengths(op: &'static str, p: &ProbDist, q: &ProbDist) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch {
            op,
            left: p.len(),
            right: q.len(),
        });
    }
    Ok(())
}

/// `Σ p_i log₂(p_i / max(q_i, eps))` over the support of `p`.
pub fn kl_divergence(p: &ProbDist, q: &ProbDist, eps: f64) -> Result<f64> {
    check_lengths("kl_divergence", p, q)?;
    let total: f64 = p
        .probs()
        .iter()
        .zip(q.probs())
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / qi.max(eps)).log2())
        .sum();
    Ok(total.max(0.0))
}

/// `½ KL(p‖m) + ½ KL(q‖m)` with `m = ½(p + q)`, in bits, so the result lies in `[0, 1]`.
pub fn js_divergence(p: &ProbDist, q: &ProbDist) -> Result<f64> {
    check_lengths("js_divergence", p, q)?;
    let mut total = 0.0f64;
    for (&pi, &qi) in p.probs().iter().zip(q.probs()) {
        let mi = 0.5 * (pi + qi);
        if pi > 0.0 {
            total += pi * (pi / mi).log2();
        }
        if qi > 0.0 {
            total += qi * (qi / mi).log2();
        }
    }
    Ok((0.5 * total).clamp(0.0, 1.0))
}
