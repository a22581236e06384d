use std::fmt;
use std::path::PathBuf;

use kpcacam::kernel::{KernelConfig, KernelFamily};
use kpcacam::{CamConfig, CamMethod, MorfConfig};
use serde::{Deserialize, Serialize};

use crate::args::{KernelArg, MethodArg, RunArgs};
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "path", rename_all = "snake_case")]
pub enum BackendSpec {
    Fixtures(PathBuf),
    Onnx(PathBuf),
}

impl std::str::FromStr for BackendSpec {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        let (kind, path) = s
            .split_once(':')
            .ok_or_else(|| CliError::Config(format!("backend '{s}' must be fixtures:<dir> or onnx:<path>")))?;
        if path.is_empty() {
            return Err(CliError::Config(format!("backend '{s}' has an empty path")));
        }
        match kind {
            "fixtures" => Ok(BackendSpec::Fixtures(path.into())),
            "onnx" => Ok(BackendSpec::Onnx(path.into())),
            other => Err(CliError::Config(format!("unknown backend kind '{other}'"))),
        }
    }
}

/// Everything a run depends on, validated before any image is touched.
/// Serialized verbatim into report headers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub backend: BackendSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    pub method: CamMethod,
    pub kernel: Option<KernelConfig>,
    pub threshold_frac: f64,
    pub iou_threshold: f64,
    pub morf: MorfConfig,
    #[serde(skip)]
    pub out: PathBuf,
    #[serde(skip)]
    pub jobs: usize,
}

impl RunConfig {
    pub fn from_args(a: &RunArgs) -> Result<Self, CliError> {
        let backend: BackendSpec = a.backend.parse()?;
        if a.data.is_some() && matches!(backend, BackendSpec::Fixtures(_)) {
            return Err(CliError::Config("--data applies only to an onnx backend".into()));
        }
        let kernel = match (a.method, a.kernel) {
            (MethodArg::Eigen, None) => {
                if a.gamma.is_some() || a.coef_r.is_some() || a.no_center {
                    return Err(CliError::Config("eigen takes no kernel parameters".into()));
                }
                None
            }
            (MethodArg::Eigen, Some(_)) => {
                return Err(CliError::Config("--kernel applies only to --method kpca".into()))
            }
            (MethodArg::Kpca, None) => {
                return Err(CliError::Config("--method kpca requires --kernel".into()))
            }
            (MethodArg::Kpca, Some(k)) => {
                let family = match k {
                    KernelArg::Rbf => KernelFamily::Rbf,
                    KernelArg::Sigmoid => KernelFamily::Sigmoid,
                    KernelArg::Linear => KernelFamily::Linear,
                };
                if family == KernelFamily::Linear && a.gamma.is_some() {
                    return Err(CliError::Config("the linear kernel takes no --gamma".into()));
                }
                if family != KernelFamily::Sigmoid && a.coef_r.is_some() {
                    return Err(CliError::Config("--coef-r applies only to the sigmoid kernel".into()));
                }
                let mut cfg = KernelConfig::new(family).centered(!a.no_center);
                if let Some(g) = a.gamma {
                    cfg.gamma = g;
                }
                if let Some(r) = a.coef_r {
                    cfg.r = r;
                }
                Some(cfg)
            }
        };
        let cfg = Self {
            backend,
            data: a.data.clone(),
            method: match a.method {
                MethodArg::Eigen => CamMethod::EigenCam,
                MethodArg::Kpca => CamMethod::KpcaCam,
            },
            kernel,
            threshold_frac: a.threshold_frac,
            iou_threshold: a.iou_threshold,
            morf: MorfConfig {
                fraction: a.morf_fraction,
                noise_std_frac: a.noise_std_frac,
                seed: a.seed,
                ..MorfConfig::default()
            },
            out: a.out.clone(),
            jobs: a.jobs,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.cam_config().validate()?;
        self.morf.validate()?;
        if !(self.threshold_frac > 0.0 && self.threshold_frac <= 1.0) {
            return Err(CliError::Config(format!(
                "--threshold-frac must be in (0, 1], got {}",
                self.threshold_frac
            )));
        }
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(CliError::Config(format!(
                "--iou-threshold must be in (0, 1], got {}",
                self.iou_threshold
            )));
        }
        Ok(())
    }

    pub fn cam_config(&self) -> CamConfig {
        CamConfig {
            method: self.method,
            kernel: self.kernel,
            output_size: None,
        }
    }

    pub fn method_label(&self) -> String {
        MethodLabel(self.method, self.kernel).to_string()
    }
}

struct MethodLabel(CamMethod, Option<KernelConfig>);

impl fmt::Display for MethodLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.0, self.1) {
            (CamMethod::EigenCam, _) | (CamMethod::KpcaCam, None) => f.write_str("eigen_cam"),
            (CamMethod::KpcaCam, Some(k)) => {
                write!(f, "kpca_cam[{}", k.family)?;
                match k.family {
                    KernelFamily::Rbf => write!(f, " gamma={}", k.gamma)?,
                    KernelFamily::Sigmoid => write!(f, " gamma={} r={}", k.gamma, k.r)?,
                    KernelFamily::Linear => {}
                }
                if !k.center {
                    f.write_str(" uncentered")?;
                }
                f.write_str("]")
            }
        }
    }
}
