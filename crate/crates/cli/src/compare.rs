use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::report::{to_json, AnyReport, ReportKind, SCHEMA_VERSION};
use crate::CliError;

pub const COMPARISON_JSON: &str = "comparison.json";
pub const COMPARISON_TXT: &str = "comparison.txt";

/// One method's metrics gathered from all input reports.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: String,
    pub loc1: Option<f64>,
    pub loc5: Option<f64>,
    /// Mean ROAD delta over correctly classified images, percentage points.
    pub road_delta_pct: Option<f64>,
    pub cam_images: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub schema_version: u32,
    pub manifest_sha256: String,
    pub columns: Vec<String>,
    pub rows: Vec<ComparisonRow>,
}

const COLUMNS: [&str; 5] = ["method", "loc1", "loc5", "road_delta_pct", "cam_images"];

/// Merges reports into one row per method, ordered by method label. All
/// inputs must come from the same fixture manifest, and each (method, kind)
/// pair may appear only once.
pub fn merge(reports: &[AnyReport]) -> Result<Comparison, CliError> {
    let first = reports.first().ok_or_else(|| CliError::Input("no reports to merge".into()))?;
    let manifest = first.header().manifest_sha256.clone();
    let mut rows: BTreeMap<String, ComparisonRow> = BTreeMap::new();
    let mut seen: BTreeMap<(String, ReportKind), ()> = BTreeMap::new();
    for r in reports {
        let h = r.header();
        if h.manifest_sha256 != manifest {
            return Err(CliError::Input(format!(
                "reports come from different fixture manifests ({} vs {})",
                manifest, h.manifest_sha256
            )));
        }
        if seen.insert((h.method.clone(), h.kind), ()).is_some() {
            return Err(CliError::Input(format!("two {:?} reports for method {}", h.kind, h.method)));
        }
        let row = rows.entry(h.method.clone()).or_insert_with(|| ComparisonRow {
            method: h.method.clone(),
            ..Default::default()
        });
        match r {
            AnyReport::Cam(c) => row.cam_images = Some(c.summary.written),
            AnyReport::Localize(l) => {
                row.loc1 = l.summary.loc1;
                row.loc5 = l.summary.loc5;
            }
            AnyReport::Road(d) => row.road_delta_pct = d.summary.mean_delta_pct,
        }
    }
    Ok(Comparison {
        schema_version: SCHEMA_VERSION,
        manifest_sha256: manifest,
        columns: COLUMNS.iter().map(|c| c.to_string()).collect(),
        rows: rows.into_values().collect(),
    })
}

fn cell<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| "-".to_string(), |v| v.to_string())
}

/// Column-aligned plain-text rendering.
pub fn render(c: &Comparison) -> String {
    let table: Vec<[String; 5]> = c
        .rows
        .iter()
        .map(|r| {
            [
                r.method.clone(),
                cell(r.loc1.map(|v| format!("{v:.4}"))),
                cell(r.loc5.map(|v| format!("{v:.4}"))),
                cell(r.road_delta_pct.map(|v| format!("{v:.3}"))),
                cell(r.cam_images),
            ]
        })
        .collect();
    let mut widths = COLUMNS.map(str::len);
    for row in &table {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &[String]| {
        for (i, (cell, w)) in cells.iter().zip(widths).enumerate() {
            if i == 0 {
                let _ = write!(out, "{cell:<w$}");
            } else {
                let _ = write!(out, "  {cell:>w$}");
            }
        }
        out.push('\n');
    };
    line(&mut out, &COLUMNS.map(String::from));
    for row in &table {
        line(&mut out, row);
    }
    out
}

pub fn cmd_report(inputs: &[impl AsRef<Path>], out: &Path) -> Result<String, CliError> {
    let reports = inputs
        .iter()
        .map(|p| AnyReport::load(p.as_ref()))
        .collect::<Result<Vec<_>, _>>()?;
    let comparison = merge(&reports)?;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let json_path = out.join(COMPARISON_JSON);
    std::fs::write(&json_path, to_json(&comparison)).map_err(|e| CliError::io(&json_path, e))?;
    let text = render(&comparison);
    let txt_path = out.join(COMPARISON_TXT);
    std::fs::write(&txt_path, &text).map_err(|e| CliError::io(&txt_path, e))?;
    Ok(text)
}
