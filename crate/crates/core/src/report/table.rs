// SPDX-License-Identifier: MIT OR Apache-2.0

//! Per-layer CSV.
//!
//! Columns: `layer,target_prob,ratio,js`, then `top{i}_token,top{i}_prob`
//! for `i = 1..=top_k`. Missing values (undefined ratio, a phase that did
//! not run, fewer candidates than `top_k`) are empty fields, never `0`.
//! Numbers use the shortest representation that parses back to the same `f64`.

use std::path::Path;

use crate::error::Result;

use super::json::LayerRow;

pub fn header(top_k: usize) -> Vec<String> {
    let mut cols: Vec<String> = ["layer", "target_prob", "ratio", "js"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for i in 1..=top_k {
        cols.push(format!("top{i}_token"));
        cols.push(format!("top{i}_prob"));
    }
    cols
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn to_csv_string(rows: &[LayerRow], top_k: usize) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header(top_k))?;
    for row in rows {
        let mut rec = vec![
            row.index.to_string(),
            opt(row.target_prob),
            opt(row.ratio),
            opt(row.js),
        ];
        for i in 0..top_k {
            match row.top_k.get(i) {
                Some(tp) => {
                    rec.push(tp.token.to_string());
                    rec.push(tp.prob.to_string());
                }
                None => rec.extend([String::new(), String::new()]),
            }
        }
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn emit_csv(rows: &[LayerRow], top_k: usize, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_csv_string(rows, top_k)?)?;
    Ok(())
}
