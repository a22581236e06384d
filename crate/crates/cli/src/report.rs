use std::path::Path;

use kpcacam::kernel::{RBF_GAMMA_DEFAULT, SIGMOID_GAMMA_DEFAULT};
use kpcacam::localization::{LocalizationRecord, DEFAULT_IOU_THRESHOLD, DEFAULT_THRESHOLD_FRAC};
use kpcacam::road::DEFAULT_MORF_FRACTION;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL: &str = "kpcacam";
pub const REPORT_FILE: &str = "report.json";

/// Reference parameter values, echoed so a report states what "default"
/// meant for the build that wrote it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Defaults {
    pub sigmoid_gamma: f64,
    pub rbf_gamma: f64,
    pub threshold_frac: f64,
    pub iou_threshold: f64,
    pub morf_fraction: f64,
}

impl Default for Defaults {
    fn default() -> Self {
        Self {
            sigmoid_gamma: SIGMOID_GAMMA_DEFAULT,
            rbf_gamma: RBF_GAMMA_DEFAULT,
            threshold_frac: DEFAULT_THRESHOLD_FRAC,
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            morf_fraction: DEFAULT_MORF_FRACTION,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    Cam,
    Localize,
    Road,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub tool: String,
    pub version: String,
    pub kind: ReportKind,
    pub method: String,
    pub config: RunConfig,
    pub seed: u64,
    pub manifest_sha256: String,
    pub defaults: Defaults,
}

impl Header {
    pub fn new(kind: ReportKind, config: &RunConfig, manifest_sha256: &str) -> Self {
        Self {
            tool: TOOL.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            kind,
            method: config.method_label(),
            config: config.clone(),
            seed: config.morf.seed,
            manifest_sha256: manifest_sha256.into(),
            defaults: Defaults::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageError {
    pub image_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CamRow {
    pub image_id: String,
    pub predicted_class: usize,
    pub cam_npy: String,
    pub cam_png: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalizeSummary {
    pub loc1: Option<f64>,
    pub loc5: Option<f64>,
    pub top1_count: usize,
    pub top5_count: usize,
    pub evaluated: usize,
    pub threshold_frac: f64,
    pub iou_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadRow {
    pub image_id: String,
    pub class_index: usize,
    pub predicted_class: usize,
    pub top1_correct: bool,
    pub p_original: f64,
    pub p_masked: f64,
    pub delta_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadSummary {
    /// Mean over top-1-correct images; `None` when there are none.
    pub mean_delta_pct: Option<f64>,
    pub correct_count: usize,
    pub evaluated: usize,
    pub morf_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report<Row, Summary> {
    pub schema_version: u32,
    pub header: Header,
    pub rows: Vec<Row>,
    pub errors: Vec<ImageError>,
    pub summary: Summary,
}

pub type CamReport = Report<CamRow, CamSummary>;
pub type LocalizeReport = Report<LocalizationRecord, LocalizeSummary>;
pub type RoadReport = Report<RoadRow, RoadSummary>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CamSummary {
    pub written: usize,
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    std::fs::write(path, to_json(value)).map_err(|e| CliError::io(path, e))
}

/// Any report, checked against the schema of its declared kind.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyReport {
    Cam(CamReport),
    Localize(LocalizeReport),
    Road(RoadReport),
}

impl AnyReport {
    pub fn header(&self) -> &Header {
        match self {
            AnyReport::Cam(r) => &r.header,
            AnyReport::Localize(r) => &r.header,
            AnyReport::Road(r) => &r.header,
        }
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CliError::Input(format!("not JSON: {e}")))?;
        let version = value.get("schema_version").and_then(|v| v.as_u64());
        if version != Some(u64::from(SCHEMA_VERSION)) {
            return Err(CliError::Input(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                version.map_or("missing".to_string(), |v| v.to_string())
            )));
        }
        let kind: ReportKind = value
            .pointer("/header/kind")
            .cloned()
            .ok_or_else(|| CliError::Input("header.kind missing".into()))
            .and_then(|k| serde_json::from_value(k).map_err(|e| CliError::Input(format!("header.kind: {e}"))))?;
        let schema = |e: serde_json::Error| CliError::Input(format!("{kind:?} report does not match schema: {e}"));
        Ok(match kind {
            ReportKind::Cam => AnyReport::Cam(serde_json::from_value(value).map_err(schema)?),
            ReportKind::Localize => AnyReport::Localize(serde_json::from_value(value).map_err(schema)?),
            ReportKind::Road => AnyReport::Road(serde_json::from_value(value).map_err(schema)?),
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    }
}
