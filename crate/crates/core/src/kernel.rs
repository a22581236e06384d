//! Pairwise kernel matrices over spatial feature vectors.

use std::fmt;

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::ActivationTensor;

/// Default slope for the sigmoid kernel.
pub const SIGMOID_GAMMA_DEFAULT: f64 = 0.1;
/// Default spread for the RBF kernel.
pub const RBF_GAMMA_DEFAULT: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Rbf,
    Sigmoid,
    Linear,
}

impl KernelFamily {
    pub fn default_gamma(self) -> Option<f64> {
        match self {
            KernelFamily::Rbf => Some(RBF_GAMMA_DEFAULT),
            KernelFamily::Sigmoid => Some(SIGMOID_GAMMA_DEFAULT),
            KernelFamily::Linear => None,
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelFamily::Rbf => "rbf",
            KernelFamily::Sigmoid => "sigmoid",
            KernelFamily::Linear => "linear",
        })
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rbf" => Ok(KernelFamily::Rbf),
            "sigmoid" => Ok(KernelFamily::Sigmoid),
            "linear" => Ok(KernelFamily::Linear),
            other => Err(Error::Config(format!("unknown kernel '{other}'"))),
        }
    }
}

/// Largest f64 below 1. tanh rounds to ±1 once |x| exceeds about 19.
const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub family: KernelFamily,
    /// Ignored by the linear family.
    pub gamma: f64,
    /// Additive offset inside the sigmoid's tanh; ignored otherwise.
    pub r: f64,
    /// Double-center K before the eigen-solve.
    pub center: bool,
}

impl KernelConfig {
    /// Family defaults: γ from the family, r = 0, centering on.
    pub fn new(family: KernelFamily) -> Self {
        Self {
            family,
            gamma: family.default_gamma().unwrap_or(1.0),
            r: 0.0,
            center: true,
        }
    }

    pub fn rbf(gamma: f64) -> Self {
        Self { gamma, ..Self::new(KernelFamily::Rbf) }
    }

    pub fn sigmoid(gamma: f64, r: f64) -> Self {
        Self { gamma, r, ..Self::new(KernelFamily::Sigmoid) }
    }

    pub fn linear() -> Self {
        Self::new(KernelFamily::Linear)
    }

    pub fn centered(mut self, center: bool) -> Self {
        self.center = center;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.family {
            KernelFamily::Rbf | KernelFamily::Sigmoid => {
                if !(self.gamma > 0.0 && self.gamma.is_finite()) {
                    return Err(Error::Config(format!(
                        "{} kernel needs gamma > 0, got {}",
                        self.family, self.gamma
                    )));
                }
                if !self.r.is_finite() {
                    return Err(Error::Config(format!("kernel offset r must be finite, got {}", self.r)));
                }
            }
            KernelFamily::Linear => {}
        }
        Ok(())
    }

    fn eval(&self, a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
        match self.family {
            KernelFamily::Rbf => {
                let sq: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
                (-self.gamma * sq).exp()
            }
            KernelFamily::Sigmoid => (self.gamma * a.dot(&b) + self.r).tanh().clamp(-BELOW_ONE, BELOW_ONE),
            KernelFamily::Linear => a.dot(&b),
        }
    }
}

/// Symmetric n×n matrix of pairwise kernel evaluations, n = H·W.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix(Array2<f64>);

impl KernelMatrix {
    /// Wraps a matrix after checking it is square, finite and symmetric
    /// within 1e-12.
    pub fn from_array(m: Array2<f64>) -> Result<Self> {
        let (r, c) = m.dim();
        if r != c || r == 0 {
            return Err(Error::Input(format!("kernel matrix must be square and non-empty, got {r}x{c}")));
        }
        for i in 0..r {
            for j in i..r {
                let (a, b) = (m[[i, j]], m[[j, i]]);
                if !a.is_finite() || (a - b).abs() > 1e-12 {
                    return Err(Error::Input(format!("kernel matrix is not symmetric/finite at ({i},{j})")));
                }
            }
        }
        Ok(Self(m))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }
}

/// Flattens C×H×W activations into an HW×C matrix, one row per spatial
/// location in row-major order: `F[h·W + w][c] = A[c][h][w]`.
pub fn feature_rows(activations: &ActivationTensor) -> Array2<f64> {
    let a = activations.view();
    let (c, h, w) = a.dim();
    let flat = a
        .into_shape_with_order((c, h * w))
        .expect("activation view is standard layout");
    flat.t().to_owned()
}

/// Builds K with `K[i][j] = k(F[i], F[j])`. Only the upper triangle is
/// evaluated; the lower one is mirrored so symmetry is exact.
pub fn kernel_matrix(features: ArrayView2<'_, f64>, cfg: &KernelConfig) -> Result<KernelMatrix> {
    cfg.validate()?;
    let (n, c) = features.dim();
    if n == 0 || c == 0 {
        return Err(Error::Input(format!("feature matrix must be non-empty, got {n}x{c}")));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("feature matrix contains non-finite values".into()));
    }

    let mut k = Array2::zeros((n, n));
    for i in 0..n {
        let fi = features.row(i);
        for j in i..n {
            let v = cfg.eval(fi, features.row(j));
            k[[i, j]] = v;
            k[[j, i]] = v;
        }
    }
    Ok(KernelMatrix(k))
}

/// Double centering `K − 1ₙK − K1ₙ + 1ₙK1ₙ`: the implicit feature-space
/// points become zero-mean, so every row and column of the result sums to 0.
pub fn center_kernel(k: &KernelMatrix) -> KernelMatrix {
    let n = k.n();
    let m = k.view();
    let inv_n = 1.0 / n as f64;
    let row_means: Vec<f64> = m.rows().into_iter().map(|r| r.sum() * inv_n).collect();
    let grand = row_means.iter().sum::<f64>() * inv_n;

    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let v = m[[i, j]] - row_means[i] - row_means[j] + grand;
            out[[i, j]] = v;
            out[[j, i]] = v;
        }
    }
    KernelMatrix(out)
}
