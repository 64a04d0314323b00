// SPDX-License-Identifier: MIT OR Apache-2.0

//! Serialization of analysis results: JSON documents, per-layer CSV and
//! SVG heatmaps.

mod heatmap;
mod json;
mod table;

pub use heatmap::{
    color, emit_heatmap_svg, HeatmapMode, HeatmapSpec, Rgb, JS_HIGH, JS_LOW, MISSING, NEUTRAL,
    RATIO_CLIP, RATIO_NEGATIVE, RATIO_POSITIVE,
};
pub use json::{
    emit_json, to_json_string, AggregateDocument, ConfigInfo, LayerRow, ModelInfo, ParticleInfo,
    PlanDocument, PromptInfo, PromptReport, VulnerabilityInfo, AGGREGATE_REPORT_SCHEMA,
    PLAN_SCHEMA, PROMPT_REPORT_SCHEMA, SCHEMA_VERSION,
};
pub use table::{emit_csv, header as csv_header, to_csv_string};

pub const DEFAULT_CELL_SIZE: u32 = 18;

/// Heatmap with one row per report and one column per traced layer.
///
/// All reports must trace the same layers; the first report fixes the columns.
pub fn heatmap_from_reports(
    reports: &[(String, &PromptReport)],
    mode: HeatmapMode,
    title: &str,
) -> crate::Result<HeatmapSpec> {
    let Some((_, first)) = reports.first() else {
        return Err(crate::Error::InvalidInput("no reports for heatmap".into()));
    };
    let columns: Vec<usize> = first.layers.iter().map(|r| r.index).collect();
    let mut matrix = Vec::with_capacity(reports.len());
    for (label, rep) in reports {
        let idx: Vec<usize> = rep.layers.iter().map(|r| r.index).collect();
        if idx != columns {
            return Err(crate::Error::InvalidInput(format!(
                "report `{label}` traces layers {idx:?}, expected {columns:?}"
            )));
        }
        matrix.push(
            rep.layers
                .iter()
                .map(|r| match mode {
                    HeatmapMode::Ratio => r.ratio,
                    HeatmapMode::Js => r.js,
                })
                .collect(),
        );
    }
    Ok(HeatmapSpec {
        title: title.to_string(),
        mode,
        matrix,
        row_labels: reports.iter().map(|(l, _)| l.clone()).collect(),
        col_labels: columns.iter().map(|c| c.to_string()).collect(),
        cell_size: DEFAULT_CELL_SIZE,
    })
}
