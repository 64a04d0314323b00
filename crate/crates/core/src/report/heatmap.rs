// SPDX-License-Identifier: MIT OR Apache-2.0

//! Standalone SVG layer heatmaps.
//!
//! Rows are prompts, columns are layers. Every data cell is one
//! `<rect class="cell">`; legend swatches are `<rect class="legend">`.
//!
//! Color maps (linear RGB interpolation, rounded per channel):
//!
//! | mode  | value            | from      | to        |
//! |-------|------------------|-----------|-----------|
//! | ratio | `0 → 1`          | `#f7f7f7` | `#00441b` |
//! | ratio | `0 → −3`         | `#f7f7f7` | `#67000d` |
//! | js    | `0 → 1`          | `#f7fbff` | `#08306b` |
//!
//! Ratio values are clipped to `[−3, 1]` and js values to `[0, 1]` for
//! coloring only. Undefined cells are drawn in `#bdbdbd` with class `cell missing`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeatmapMode {
    /// Diverging, zero-centered: red below zero, green above.
    Ratio,
    /// Sequential on `[0, 1]`.
    Js,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapSpec {
    pub title: String,
    pub mode: HeatmapMode,
    /// `matrix[row][col]`; `None` marks an undefined cell.
    pub matrix: Vec<Vec<Option<f64>>>,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub cell_size: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rgb(pub u8, pub u8, pub u8);

impl Rgb {
    pub fn hex(self) -> String {
        format!("#{:02x}{:02x}{:02x}", self.0, self.1, self.2)
    }

    fn lerp(self, to: Rgb, t: f64) -> Rgb {
        let ch = |a: u8, b: u8| (f64::from(a) + (f64::from(b) - f64::from(a)) * t).round() as u8;
        Rgb(ch(self.0, to.0), ch(self.1, to.1), ch(self.2, to.2))
    }
}

pub const NEUTRAL: Rgb = Rgb(0xf7, 0xf7, 0xf7);
pub const RATIO_POSITIVE: Rgb = Rgb(0x00, 0x44, 0x1b);
pub const RATIO_NEGATIVE: Rgb = Rgb(0x67, 0x00, 0x0d);
pub const JS_LOW: Rgb = Rgb(0xf7, 0xfb, 0xff);
pub const JS_HIGH: Rgb = Rgb(0x08, 0x30, 0x6b);
pub const MISSING: Rgb = Rgb(0xbd, 0xbd, 0xbd);

pub const RATIO_CLIP: (f64, f64) = (-3.0, 1.0);

/// Fill color of a cell value under `mode`.
pub fn color(mode: HeatmapMode, value: f64) -> Rgb {
    match mode {
        HeatmapMode::Ratio => {
            let v = value.clamp(RATIO_CLIP.0, RATIO_CLIP.1);
            if v >= 0.0 {
                NEUTRAL.lerp(RATIO_POSITIVE, v / RATIO_CLIP.1)
            } else {
                NEUTRAL.lerp(RATIO_NEGATIVE, v / RATIO_CLIP.0)
            }
        }
        HeatmapMode::Js => JS_LOW.lerp(JS_HIGH, value.clamp(0.0, 1.0)),
    }
}

fn legend_stops(mode: HeatmapMode) -> Vec<f64> {
    match mode {
        HeatmapMode::Ratio => {
            let mut v: Vec<f64> = (0..=6).map(|i| -3.0 + 0.5 * f64::from(i)).collect();
            v.extend([0.25, 0.5, 0.75, 1.0]);
            v
        }
        HeatmapMode::Js => (0..=10).map(|i| f64::from(i) / 10.0).collect(),
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c if (c as u32) < 0x20 && c != '\t' && c != '\n' && c != '\r' => out.push(' '),
            c => out.push(c),
        }
    }
    out
}

impl HeatmapSpec {
    pub fn validate(&self) -> Result<()> {
        let rows = self.matrix.len();
        if rows == 0 || self.matrix[0].is_empty() {
            return Err(Error::InvalidInput("heatmap matrix is empty".into()));
        }
        let cols = self.matrix[0].len();
        if let Some(bad) = self.matrix.iter().position(|r| r.len() != cols) {
            return Err(Error::InvalidInput(format!(
                "heatmap row {bad} has {} cells, expected {cols}",
                self.matrix[bad].len()
            )));
        }
        if self.row_labels.len() != rows || self.col_labels.len() != cols {
            return Err(Error::InvalidInput(format!(
                "labels are {}x{} for a {rows}x{cols} matrix",
                self.row_labels.len(),
                self.col_labels.len()
            )));
        }
        if self.cell_size == 0 {
            return Err(Error::InvalidInput("cell size must be positive".into()));
        }
        Ok(())
    }

    pub fn to_svg(&self) -> Result<String> {
        self.validate()?;
        let cell = self.cell_size as usize;
        let rows = self.matrix.len();
        let cols = self.matrix[0].len();
        let label_w = 7 * self
            .row_labels
            .iter()
            .map(|l| l.chars().count())
            .max()
            .unwrap_or(0)
            + 12;
        let top = 32;
        let grid_w = cols * cell;
        let grid_h = rows * cell;
        let legend_x = label_w + grid_w + 24;
        let stops = legend_stops(self.mode);
        let swatch = 14;
        let width = legend_x + 60;
        let height = (top + grid_h + 40).max(top + stops.len() * swatch + 24);

        let mut s = String::new();
        let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{label_w}" y="18" font-size="13">{}</text>"#,
            escape(&self.title)
        );
        let _ = writeln!(s, r#"<g class="cells">"#);
        for (r, row) in self.matrix.iter().enumerate() {
            for (c, value) in row.iter().enumerate() {
                let x = label_w + c * cell;
                let y = top + r * cell;
                let (class, fill, tip) = match value {
                    Some(v) => ("cell", color(self.mode, *v), v.to_string()),
                    None => ("cell missing", MISSING, "undefined".to_string()),
                };
                let _ = writeln!(
                    s,
                    r#"<rect class="{class}" data-row="{r}" data-col="{c}" x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{}"><title>{} / {}: {tip}</title></rect>"#,
                    fill.hex(),
                    escape(&self.row_labels[r]),
                    escape(&self.col_labels[c]),
                );
            }
        }
        let _ = writeln!(s, "</g>");
        let _ = writeln!(s, r#"<g class="row-labels" text-anchor="end">"#);
        for (r, label) in self.row_labels.iter().enumerate() {
            let y = top + r * cell + cell / 2 + 4;
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{y}">{}</text>"#,
                label_w - 4,
                escape(label)
            );
        }
        let _ = writeln!(s, "</g>");
        let _ = writeln!(s, r#"<g class="col-labels" text-anchor="middle">"#);
        for (c, label) in self.col_labels.iter().enumerate() {
            let x = label_w + c * cell + cell / 2;
            let _ = writeln!(
                s,
                r#"<text x="{x}" y="{}">{}</text>"#,
                top + grid_h + 14,
                escape(label)
            );
        }
        let _ = writeln!(s, "</g>");
        let _ = writeln!(s, r#"<g class="legend-group">"#);
        for (i, &v) in stops.iter().rev().enumerate() {
            let y = top + i * swatch;
            let _ = writeln!(
                s,
                r#"<rect class="legend" x="{legend_x}" y="{y}" width="{swatch}" height="{swatch}" fill="{}"/>"#,
                color(self.mode, v).hex()
            );
            if i == 0 || i + 1 == stops.len() || v == 0.0 {
                let _ = writeln!(
                    s,
                    r#"<text x="{}" y="{}">{v}</text>"#,
                    legend_x + swatch + 4,
                    y + swatch - 3
                );
            }
        }
        let _ = writeln!(s, "</g>");
        let _ = writeln!(s, "</svg>");
        Ok(s)
    }
}

pub fn emit_heatmap_svg(spec: &HeatmapSpec, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, spec.to_svg()?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(mode: HeatmapMode, matrix: Vec<Vec<Option<f64>>>) -> HeatmapSpec {
        HeatmapSpec {
            title: "t".into(),
            mode,
            row_labels: (0..matrix.len()).map(|i| format!("p{i}")).collect(),
            col_labels: (0..matrix[0].len()).map(|i| format!("{}", i + 1)).collect(),
            matrix,
            cell_size: 16,
        }
    }

    #[test]
    fn color_endpoints() {
        assert_eq!(color(HeatmapMode::Ratio, 0.0), NEUTRAL);
        assert_eq!(color(HeatmapMode::Ratio, 1.0), RATIO_POSITIVE);
        assert_eq!(color(HeatmapMode::Ratio, -3.0), RATIO_NEGATIVE);
        assert_eq!(color(HeatmapMode::Ratio, -50.0), RATIO_NEGATIVE);
        assert_eq!(color(HeatmapMode::Js, 0.0), JS_LOW);
        assert_eq!(color(HeatmapMode::Js, 1.0), JS_HIGH);
    }

    #[test]
    fn single_cell() {
        let svg = spec(HeatmapMode::Js, vec![vec![Some(0.5)]])
            .to_svg()
            .unwrap();
        assert_eq!(svg.matches(r#"class="cell""#).count(), 1);
        assert!(svg.contains(&color(HeatmapMode::Js, 0.5).hex()));
    }

    #[test]
    fn js_endpoint_cells_match_legend() {
        let svg = spec(HeatmapMode::Js, vec![vec![Some(0.0), Some(1.0)]])
            .to_svg()
            .unwrap();
        for end in [JS_LOW, JS_HIGH] {
            let fill = format!(r#"fill="{}""#, end.hex());
            let cells = svg
                .lines()
                .filter(|l| l.contains(r#"class="cell""#) && l.contains(&fill))
                .count();
            let legend = svg
                .lines()
                .filter(|l| l.contains(r#"class="legend""#) && l.contains(&fill))
                .count();
            assert_eq!((cells, legend), (1, 1), "{}", end.hex());
        }
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(spec(HeatmapMode::Js, vec![vec![]]).to_svg().is_err());
        let mut s = spec(
            HeatmapMode::Js,
            vec![vec![Some(0.1), Some(0.2)], vec![Some(0.3), Some(0.4)]],
        );
        s.matrix[1].pop();
        assert!(s.to_svg().is_err());
        let mut s = spec(HeatmapMode::Js, vec![vec![Some(0.1)]]);
        s.row_labels.push("extra".into());
        assert!(s.to_svg().is_err());
        let empty = HeatmapSpec {
            matrix: vec![],
            row_labels: vec![],
            ..spec(HeatmapMode::Js, vec![vec![None]])
        };
        assert!(empty.to_svg().is_err());
    }

    #[test]
    fn labels_are_escaped() {
        let mut s = spec(HeatmapMode::Ratio, vec![vec![None]]);
        s.row_labels[0] = "a<b & \"c\"".into();
        let svg = s.to_svg().unwrap();
        assert!(svg.contains("a&lt;b &amp; &quot;c&quot;"));
        assert!(svg.contains(r#"class="cell missing""#));
    }

    #[test]
    fn ramps_are_monotone() {
        let dist = |a: Rgb, b: Rgb| {
            (i32::from(a.0) - i32::from(b.0)).abs()
                + (i32::from(a.1) - i32::from(b.1)).abs()
                + (i32::from(a.2) - i32::from(b.2)).abs()
        };
        let mut prev = 0;
        for i in 0..=100 {
            let d = dist(color(HeatmapMode::Ratio, f64::from(i) / 100.0), NEUTRAL);
            assert!(d >= prev);
            prev = d;
        }
        let mut prev = 0;
        for i in 0..=300 {
            let d = dist(color(HeatmapMode::Ratio, -f64::from(i) / 100.0), NEUTRAL);
            assert!(d >= prev);
            prev = d;
        }
        let mut prev = 0;
        for i in 0..=100 {
            let d = dist(color(HeatmapMode::Js, f64::from(i) / 100.0), JS_LOW);
            assert!(d >= prev);
            prev = d;
        }
    }
}
