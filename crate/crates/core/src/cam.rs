//! Eigen-CAM and KPCA-CAM.
//!
//! Both methods flatten the activation tensor into one C-dimensional feature
//! vector per spatial location and project those vectors onto a single
//! principal direction. Eigen-CAM uses linear PCA over the channel
//! covariance; KPCA-CAM builds the HW×HW kernel matrix K, takes its dominant
//! eigenvector V₁ and returns `L = K·V₁`. Neither method looks at a class
//! label, so one map explains whatever the network attends to.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::eigen::{self, sign_correct};
use crate::error::{Error, Result};
use crate::kernel::{center_kernel, feature_rows, kernel_matrix, KernelConfig};
use crate::tensor::{bilinear_resize, minmax_normalize, ActivationTensor, Heatmap};

/// Projections whose magnitude is below this fraction of the input scale are
/// rounding residue (e.g. centering a constant column) and are zeroed.
const NUMERICAL_ZERO: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CamMethod {
    EigenCam,
    KpcaCam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CamConfig {
    pub method: CamMethod,
    /// Present iff `method` is [`CamMethod::KpcaCam`].
    pub kernel: Option<KernelConfig>,
    /// Upsampling target `(height, width)`; `None` keeps the feature-map grid.
    pub output_size: Option<(usize, usize)>,
}

impl CamConfig {
    pub fn eigen_cam() -> Self {
        Self {
            method: CamMethod::EigenCam,
            kernel: None,
            output_size: None,
        }
    }

    pub fn kpca_cam(kernel: KernelConfig) -> Self {
        Self {
            method: CamMethod::KpcaCam,
            kernel: Some(kernel),
            output_size: None,
        }
    }

    pub fn with_output_size(mut self, size: (usize, usize)) -> Self {
        self.output_size = Some(size);
        self
    }

    pub fn validate(&self) -> Result<()> {
        match (self.method, &self.kernel) {
            (CamMethod::EigenCam, None) => {}
            (CamMethod::KpcaCam, Some(k)) => k.validate()?,
            (CamMethod::EigenCam, Some(_)) => {
                return Err(Error::Config("eigen_cam takes no kernel parameters".into()))
            }
            (CamMethod::KpcaCam, None) => {
                return Err(Error::Config("kpca_cam requires kernel parameters".into()))
            }
        }
        if let Some((h, w)) = self.output_size {
            if h == 0 || w == 0 {
                return Err(Error::Config(format!("output size must be non-empty, got {h}x{w}")));
            }
        }
        Ok(())
    }
}

fn max_abs<'a>(values: impl IntoIterator<Item = &'a f64>) -> f64 {
    values.into_iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn finish_projection(mut projection: Vec<f64>, scale: f64) -> Array1<f64> {
    if max_abs(&projection) <= NUMERICAL_ZERO * scale {
        projection.iter_mut().for_each(|v| *v = 0.0);
    }
    sign_correct(&mut projection);
    Array1::from(projection)
}

/// Eigen-CAM core: projection of the column-centered features onto the
/// leading eigenvector of the C×C scatter matrix, sign-corrected.
pub fn project_first_component(features: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
    let (n, c) = features.dim();
    if n == 0 || c == 0 {
        return Err(Error::Input(format!("feature matrix must be non-empty, got {n}x{c}")));
    }
    let mean = features.mean_axis(Axis(0)).expect("non-empty");
    let centered: Array2<f64> = &features - &mean;
    let scatter = centered.t().dot(&centered);
    let scatter = (&scatter + &scatter.t()) * 0.5;
    let top = eigen::top_eigenpair(scatter.view(), eigen::DEFAULT_TOL, eigen::DEFAULT_MAX_ITER)?;
    let projection = centered.dot(&top.vector);
    Ok(finish_projection(projection.to_vec(), max_abs(features.iter())))
}

/// KPCA-CAM core: `L = K·V₁` for the (optionally centered) kernel matrix,
/// sign-corrected.
pub fn kpca_project(features: ArrayView2<'_, f64>, kernel: &KernelConfig) -> Result<Array1<f64>> {
    let k = kernel_matrix(features, kernel)?;
    let scale = max_abs(k.view().iter());
    let k = if kernel.center { center_kernel(&k) } else { k };
    let top = eigen::top_eigenpair(k.view(), eigen::DEFAULT_TOL, eigen::DEFAULT_MAX_ITER)?;
    let projection = k.view().dot(&top.vector);
    Ok(finish_projection(projection.to_vec(), scale))
}

/// Full pipeline: flatten, project, reshape to H×W, optionally upsample,
/// then min-max normalize into [0, 1].
pub fn compute_cam(activations: &ActivationTensor, cfg: &CamConfig) -> Result<Heatmap> {
    cfg.validate()?;
    let features = feature_rows(activations);
    let projection = match (cfg.method, &cfg.kernel) {
        (CamMethod::EigenCam, _) => project_first_component(features.view())?,
        (CamMethod::KpcaCam, Some(kernel)) => kpca_project(features.view(), kernel)?,
        (CamMethod::KpcaCam, None) => unreachable!("validated above"),
    };
    let map = Heatmap::from_shape_vec((activations.height(), activations.width()), projection.to_vec())?;
    let map = match cfg.output_size {
        Some(size) => bilinear_resize(&map, size)?,
        None => map,
    };
    Ok(minmax_normalize(&map))
}
