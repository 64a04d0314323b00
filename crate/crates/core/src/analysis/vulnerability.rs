// SPDX-License-Identifier: MIT OR Apache-2.0

//! Vulnerable-layer identification and layer-wise relative stability.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{LayeredModel, Perturbation};

use super::divergence::js_divergence;
use super::AnalysisConfig;

/// A profile whose largest divergence is at or below this is degenerate.
pub const DEGENERATE_JS: f64 = 1e-9;

/// Per-layer divergence of the perturbed final distribution from the baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VulnerabilityProfile {
    /// Scanned 1-based layers, ascending.
    pub layers: Vec<usize>,
    /// `js_per_layer[i]` belongs to `layers[i]`.
    pub js_per_layer: Vec<f64>,
    pub vulnerable_layer: usize,
    /// `None` when fewer than two layers were scanned.
    pub lrs: Option<f64>,
    /// Template applied at every layer; its `layer` field is unused.
    pub perturbation: Perturbation,
    /// Set when no layer moved the output by more than [`DEGENERATE_JS`].
    pub degenerate: bool,
}

impl VulnerabilityProfile {
    /// Assembles a profile from per-layer divergences.
    pub fn from_divergences(
        layers: Vec<usize>,
        js_per_layer: Vec<f64>,
        perturbation: Perturbation,
    ) -> Result<Self> {
        if layers.is_empty() || layers.len() != js_per_layer.len() {
            return Err(Error::InvalidInput(format!(
                "{} layers for {} divergences",
                layers.len(),
                js_per_layer.len()
            )));
        }
        let mut best = 0;
        for (i, &d) in js_per_layer.iter().enumerate() {
            if d > js_per_layer[best] {
                best = i;
            }
        }
        let max = js_per_layer[best];
        Ok(Self {
            vulnerable_layer: layers[best],
            lrs: (js_per_layer.len() >= 2)
                .then(|| lrs(&js_per_layer))
                .transpose()?,
            degenerate: max <= DEGENERATE_JS,
            layers,
            js_per_layer,
            perturbation,
        })
    }

    pub fn js_at(&self, layer: usize) -> Option<f64> {
        self.layers
            .iter()
            .position(|&l| l == layer)
            .map(|i| self.js_per_layer[i])
    }
}

/// Sample standard deviation of the per-layer divergences:
/// `sqrt(Σ (d_l − mean)² / (N − 1))`.
pub fn lrs(js_values: &[f64]) -> Result<f64> {
    let n = js_values.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "LRS needs at least two layers, got {n}"
        )));
    }
    // deviations are taken around the first value, so a constant profile is exactly 0
    let origin = js_values[0];
    let shifted: Vec<f64> = js_values.iter().map(|d| d - origin).collect();
    let mean = shifted.iter().sum::<f64>() / n as f64;
    let ss: f64 = shifted.iter().map(|d| (d - mean).powi(2)).sum();
    Ok((ss / (n - 1) as f64).sqrt())
}

/// Perturbs each layer's mixer output with the same template and measures
/// the JS divergence of the final distribution from the unperturbed one.
///
/// Layers are evaluated in parallel on the current rayon pool; results are
/// reassembled in layer order.
pub fn vulnerability_scan(
    model: &LayeredModel,
    tokens: &[u32],
    config: &AnalysisConfig,
) -> Result<VulnerabilityProfile> {
    config.validate(model)?;
    let layers = config.layers(model)?;
    let template = config.perturbation;
    let baseline = model.forward(tokens, false)?.dist;
    let js = layers
        .par_iter()
        .map(|&layer| {
            let q = model.forward_perturbed(tokens, &template.at_layer(layer))?;
            js_divergence(&baseline, &q)
        })
        .collect::<Result<Vec<f64>>>()?;
    VulnerabilityProfile::from_divergences(layers, js, template)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn lrs_cases() {
        assert_eq!(lrs(&[0.4; 6]).unwrap(), 0.0);
        assert_abs_diff_eq!(lrs(&[0.1, 0.3]).unwrap(), 0.141_421, epsilon = 1e-6);
        assert!(lrs(&[0.2]).is_err());
        assert!(lrs(&[]).is_err());
    }

    #[test]
    fn profile_tie_break_and_degenerate() {
        let p = VulnerabilityProfile::from_divergences(
            vec![1, 2, 3, 4],
            vec![0.1, 0.5, 0.5, 0.2],
            Perturbation::ablation(1),
        )
        .unwrap();
        assert_eq!(p.vulnerable_layer, 2);
        assert!(!p.degenerate);
        assert_eq!(p.js_at(4), Some(0.2));
        let flat = VulnerabilityProfile::from_divergences(
            vec![1, 2],
            vec![0.0, 1e-12],
            Perturbation::ablation(1),
        )
        .unwrap();
        assert!(flat.degenerate);
        assert_eq!(flat.vulnerable_layer, 2);
    }

    proptest! {
        #[test]
        fn lrs_shift_invariant(v in prop::collection::vec(0.0f64..1.0, 2..30), c in -5.0f64..5.0) {
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            prop_assert!((lrs(&v).unwrap() - lrs(&shifted).unwrap()).abs() <= 1e-9);
        }

        #[test]
        fn lrs_of_constant_is_zero(x in 0.0f64..1.0, n in 2usize..40) {
            prop_assert!(lrs(&vec![x; n]).unwrap() <= 1e-15);
        }
    }
}
