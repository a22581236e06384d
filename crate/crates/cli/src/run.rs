use std::path::{Path, PathBuf};

use kpcacam::backend::{topk, FixtureCorpus, FixtureRecord};
use kpcacam::localization::{localization_accuracy, LocalizationRecord, TOP5};
use kpcacam::npy::save_heatmap;
use kpcacam::{compute_cam, FixtureBackend, Heatmap, InferenceBackend, OnnxBackend};
use log::{info, warn};
use rayon::prelude::*;

use crate::config::{BackendSpec, RunConfig};
use crate::overlay::save_overlay;
use crate::report::{
    write_json, CamReport, CamRow, CamSummary, Header, ImageError, LocalizeReport, LocalizeSummary, Report,
    ReportKind, RoadReport, RoadRow, RoadSummary, REPORT_FILE, SCHEMA_VERSION,
};
use crate::CliError;

/// A backend plus the images (and ground truth) it is evaluated on.
pub struct Workspace {
    pub backend: Box<dyn InferenceBackend>,
    pub corpus: FixtureCorpus,
}

impl Workspace {
    pub fn open(cfg: &RunConfig) -> Result<Self, CliError> {
        match &cfg.backend {
            BackendSpec::Fixtures(dir) => {
                let backend = FixtureBackend::open(dir)?;
                let corpus = backend.corpus().clone();
                Ok(Self {
                    backend: Box::new(backend),
                    corpus,
                })
            }
            BackendSpec::Onnx(model) => {
                let data = match &cfg.data {
                    Some(d) => d.clone(),
                    None => model.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(".")),
                };
                let corpus = FixtureCorpus::open(&data)?;
                let m = corpus.manifest();
                let backend = OnnxBackend::load(
                    model,
                    m.input_shape,
                    &m.activation_layer_name,
                    m.logits_output.as_deref(),
                )?;
                if backend.metadata().num_classes != m.num_classes {
                    return Err(CliError::Config(format!(
                        "model has {} classes, manifest says {}",
                        backend.metadata().num_classes,
                        m.num_classes
                    )));
                }
                Ok(Self {
                    backend: Box::new(backend),
                    corpus,
                })
            }
        }
    }

    /// Records in image_id order.
    fn sorted_records(&self) -> Vec<&FixtureRecord> {
        let mut records: Vec<&FixtureRecord> = self.corpus.records().iter().collect();
        records.sort_by(|a, b| a.image_id.cmp(&b.image_id));
        records
    }

    /// CAM at image resolution and the backend's logits.
    fn cam_and_logits(&self, cfg: &RunConfig, r: &FixtureRecord) -> kpcacam::Result<(Heatmap, Vec<f64>)> {
        let act = self.backend.extract_activations(&r.image)?;
        let cam_cfg = cfg.cam_config().with_output_size((r.image.height(), r.image.width()));
        let cam = compute_cam(&act, &cam_cfg)?;
        let logits = self.backend.predict(&r.image)?;
        Ok((cam, logits))
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

/// Runs `f` on every record in a worker pool and splits results into rows
/// and per-image errors, both in image_id order.
fn per_image<T: Send>(
    ws: &Workspace,
    cfg: &RunConfig,
    f: impl Fn(&FixtureRecord) -> Result<T, String> + Sync,
) -> Result<(Vec<T>, Vec<ImageError>), CliError> {
    let records = ws.sorted_records();
    let results: Vec<Result<T, String>> = pool(cfg.jobs)?.install(|| {
        records
            .par_iter()
            .map(|r| {
                let out = f(r);
                match &out {
                    Ok(_) => info!("{}: ok", r.image_id),
                    Err(e) => warn!("{}: {e}", r.image_id),
                }
                out
            })
            .collect()
    });
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for (r, res) in records.iter().zip(results) {
        match res {
            Ok(row) => rows.push(row),
            Err(error) => errors.push(ImageError {
                image_id: r.image_id.clone(),
                error,
            }),
        }
    }
    Ok((rows, errors))
}

fn prepare_out(cfg: &RunConfig) -> Result<(), CliError> {
    std::fs::create_dir_all(&cfg.out).map_err(|e| CliError::io(&cfg.out, e))
}

fn finish<R: serde::Serialize, S: serde::Serialize>(
    report: &Report<R, S>,
    cfg: &RunConfig,
) -> Result<usize, CliError> {
    write_json(report, &cfg.out.join(REPORT_FILE))?;
    Ok(report.errors.len())
}

fn header(kind: ReportKind, cfg: &RunConfig, ws: &Workspace) -> Header {
    Header::new(kind, cfg, ws.corpus.manifest_sha256())
}

/// Writes `<id>.cam.npy` and `<id>.cam.png` per image. Returns the number
/// of failed images.
pub fn cmd_cam(cfg: &RunConfig) -> Result<usize, CliError> {
    let ws = Workspace::open(cfg)?;
    prepare_out(cfg)?;
    let (rows, errors) = per_image(&ws, cfg, |r| {
        let (cam, logits) = ws.cam_and_logits(cfg, r).map_err(|e| e.to_string())?;
        let npy = format!("{}.cam.npy", r.image_id);
        let png = format!("{}.cam.png", r.image_id);
        save_heatmap(&cam, cfg.out.join(&npy)).map_err(|e| e.to_string())?;
        save_overlay(&r.image, &cam, &cfg.out.join(&png)).map_err(|e| e.to_string())?;
        Ok(CamRow {
            image_id: r.image_id.clone(),
            predicted_class: topk(&logits, 1)[0],
            cam_npy: npy,
            cam_png: png,
        })
    })?;
    let report: CamReport = Report {
        schema_version: SCHEMA_VERSION,
        header: header(ReportKind::Cam, cfg, &ws),
        summary: CamSummary { written: rows.len() },
        rows,
        errors,
    };
    finish(&report, cfg)
}

pub fn cmd_localize(cfg: &RunConfig) -> Result<usize, CliError> {
    let ws = Workspace::open(cfg)?;
    prepare_out(cfg)?;
    let (rows, errors) = per_image(&ws, cfg, |r| {
        let gt = r.gt.as_ref().ok_or("missing gt.json")?;
        let (cam, logits) = ws.cam_and_logits(cfg, r).map_err(|e| e.to_string())?;
        let boxes = gt.boxes_in(cam.dim());
        let ranked = topk(&logits, TOP5);
        LocalizationRecord::evaluate(&r.image_id, &cam, &boxes, gt.class_index, &ranked, cfg.threshold_frac)
            .map_err(|e| e.to_string())
    })?;
    let acc = if rows.is_empty() {
        None
    } else {
        Some(localization_accuracy(&rows, cfg.iou_threshold)?)
    };
    let report: LocalizeReport = Report {
        schema_version: SCHEMA_VERSION,
        header: header(ReportKind::Localize, cfg, &ws),
        summary: LocalizeSummary {
            loc1: acc.and_then(|a| a.loc1),
            loc5: acc.and_then(|a| a.loc5),
            top1_count: acc.map_or(0, |a| a.top1_count),
            top5_count: acc.map_or(0, |a| a.top5_count),
            evaluated: rows.len(),
            threshold_frac: cfg.threshold_frac,
            iou_threshold: cfg.iou_threshold,
        },
        rows,
        errors,
    };
    finish(&report, cfg)
}

pub fn cmd_road(cfg: &RunConfig) -> Result<usize, CliError> {
    let ws = Workspace::open(cfg)?;
    prepare_out(cfg)?;
    let (rows, errors) = per_image(&ws, cfg, |r| {
        let gt = r.gt.as_ref().ok_or("missing gt.json")?;
        let (cam, logits) = ws.cam_and_logits(cfg, r).map_err(|e| e.to_string())?;
        let predicted = topk(&logits, 1)[0];
        let res = kpcacam::morf_confidence_drop(ws.backend.as_ref(), &r.image_id, &r.image, &cam, gt.class_index, &cfg.morf)
            .map_err(|e| e.to_string())?;
        Ok(RoadRow {
            image_id: res.image_id,
            class_index: res.class_index,
            predicted_class: predicted,
            top1_correct: predicted == gt.class_index,
            p_original: res.p_original,
            p_masked: res.p_masked,
            delta_pct: res.delta_pct,
        })
    })?;
    let correct: Vec<f64> = rows.iter().filter(|r| r.top1_correct).map(|r| r.delta_pct).collect();
    let mean = (!correct.is_empty()).then(|| correct.iter().sum::<f64>() / correct.len() as f64);
    let report: RoadReport = Report {
        schema_version: SCHEMA_VERSION,
        header: header(ReportKind::Road, cfg, &ws),
        summary: RoadSummary {
            mean_delta_pct: mean,
            correct_count: correct.len(),
            evaluated: rows.len(),
            morf_fraction: cfg.morf.fraction,
        },
        rows,
        errors,
    };
    finish(&report, cfg)
}
