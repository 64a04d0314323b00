// SPDX-License-Identifier: MIT OR Apache-2.0

//! Corpus-level distribution of task particles.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::particle::ParticleResult;

/// Compact per-prompt particle entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleEntry {
    /// Position of the prompt in the corpus.
    pub index: usize,
    pub category: Option<String>,
    pub target_token: u32,
    pub n_layers: usize,
    pub particle_layer: usize,
    pub particle_ratio: f64,
    pub relative_depth: f64,
}

/// Histogram and depth statistics over a group of particles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleSummary {
    pub count: usize,
    /// Particle layer → number of prompts.
    pub histogram: BTreeMap<usize, usize>,
    pub mean_relative_depth: f64,
    pub median_relative_depth: f64,
    /// Fraction of particles strictly past the midpoint (`l > N/2`).
    pub deep_half_fraction: f64,
}

impl ParticleSummary {
    fn of<'a>(entries: impl IntoIterator<Item = &'a ParticleEntry>) -> Self {
        let entries: Vec<&ParticleEntry> = entries.into_iter().collect();
        let count = entries.len();
        let mut histogram = BTreeMap::new();
        for e in &entries {
            *histogram.entry(e.particle_layer).or_insert(0) += 1;
        }
        let mut depths: Vec<f64> = entries.iter().map(|e| e.relative_depth).collect();
        depths.sort_by(f64::total_cmp);
        let median = if count % 2 == 1 {
            depths[count / 2]
        } else {
            0.5 * (depths[count / 2 - 1] + depths[count / 2])
        };
        let deep = entries
            .iter()
            .filter(|e| 2 * e.particle_layer > e.n_layers)
            .count();
        Self {
            count,
            histogram,
            mean_relative_depth: depths.iter().sum::<f64>() / count as f64,
            median_relative_depth: median,
            deep_half_fraction: deep as f64 / count as f64,
        }
    }
}

/// A prompt that could not be analyzed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptFailure {
    pub index: usize,
    pub error: String,
}

/// Corpus-level aggregation of particle results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub particles: Vec<ParticleEntry>,
    pub overall: ParticleSummary,
    /// One summary per category label; empty when no prompt is labelled.
    pub by_category: BTreeMap<String, ParticleSummary>,
    /// One summary per model depth, filled only when depths differ.
    pub by_depth: BTreeMap<usize, ParticleSummary>,
    pub failures: Vec<PromptFailure>,
}

/// Aggregates `(result, category)` pairs, indexed by their position.
pub fn aggregate_particles(
    results: &[(ParticleResult, Option<String>)],
) -> Result<AggregateReport> {
    let indexed: Vec<(usize, &ParticleResult, Option<String>)> = results
        .iter()
        .enumerate()
        .map(|(i, (r, c))| (i, r, c.clone()))
        .collect();
    aggregate_indexed(&indexed)
}

/// Same as [`aggregate_particles`] with explicit corpus indices, so that
/// skipped prompts keep their original positions.
pub fn aggregate_indexed(
    results: &[(usize, &ParticleResult, Option<String>)],
) -> Result<AggregateReport> {
    if results.is_empty() {
        return Err(Error::InvalidInput(
            "no particle results to aggregate".into(),
        ));
    }
    let particles: Vec<ParticleEntry> = results
        .iter()
        .map(|(index, r, category)| ParticleEntry {
            index: *index,
            category: category.clone(),
            target_token: r.target_token,
            n_layers: r.trace.n_layers,
            particle_layer: r.particle_layer,
            particle_ratio: r.particle_ratio,
            relative_depth: r.relative_depth,
        })
        .collect();

    let mut categories: BTreeMap<&str, Vec<&ParticleEntry>> = BTreeMap::new();
    let mut depths: BTreeMap<usize, Vec<&ParticleEntry>> = BTreeMap::new();
    for e in &particles {
        if let Some(c) = &e.category {
            categories.entry(c.as_str()).or_default().push(e);
        }
        depths.entry(e.n_layers).or_default().push(e);
    }
    let by_category = categories
        .into_iter()
        .map(|(c, es)| (c.to_string(), ParticleSummary::of(es)))
        .collect();
    let by_depth = if depths.len() > 1 {
        depths
            .into_iter()
            .map(|(n, es)| (n, ParticleSummary::of(es)))
            .collect()
    } else {
        BTreeMap::new()
    };
    Ok(AggregateReport {
        overall: ParticleSummary::of(&particles),
        by_category,
        by_depth,
        failures: Vec::new(),
        particles,
    })
}
