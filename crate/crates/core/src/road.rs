//! ROAD most-relevant-first occlusion.
//!
//! The top fraction of pixels by CAM value is removed and each removed pixel
//! is re-synthesized as a weighted average of its 8 neighbours plus a small
//! Gaussian perturbation. Removed pixels may neighbour each other, so the
//! values come from solving a sparse linear system per channel. The class
//! confidence before and after removal is then compared.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backend::{softmax, InferenceBackend};
use crate::error::{Error, Result};
use crate::tensor::{Heatmap, ImageTensor};

pub const DEFAULT_MORF_FRACTION: f64 = 0.25;
pub const DEFAULT_NOISE_STD_FRAC: f64 = 0.01;

const AXIAL_WEIGHT: f64 = 1.0 / 6.0;
const DIAGONAL_WEIGHT: f64 = 1.0 / 12.0;
/// Caps the contraction estimate so one stalled sweep cannot block
/// termination forever.
const MAX_CONTRACTION: f64 = 0.999;
const RATIO_WINDOW: usize = 8;
/// The error estimate is only asymptotic, so it must clear a tenth of the
/// target.
const ERROR_MARGIN: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MorfConfig {
    /// Share of all pixels removed, in (0, 1).
    pub fraction: f64,
    /// Noise standard deviation as a fraction of each channel's value range.
    pub noise_std_frac: f64,
    pub seed: u64,
    /// Max-norm residual target, relative to the channel range.
    pub solver_tol: f64,
    pub solver_max_iter: usize,
}

impl Default for MorfConfig {
    fn default() -> Self {
        Self {
            fraction: DEFAULT_MORF_FRACTION,
            noise_std_frac: DEFAULT_NOISE_STD_FRAC,
            seed: 0,
            solver_tol: 1e-6,
            solver_max_iter: 10_000,
        }
    }
}

impl MorfConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fraction > 0.0 && self.fraction < 1.0) {
            return Err(Error::Config(format!("MoRF fraction must be in (0, 1), got {}", self.fraction)));
        }
        if !(self.noise_std_frac >= 0.0 && self.noise_std_frac.is_finite()) {
            return Err(Error::Config(format!("noise_std_frac must be >= 0, got {}", self.noise_std_frac)));
        }
        if !(self.solver_tol > 0.0) || self.solver_max_iter == 0 {
            return Err(Error::Config("solver_tol and solver_max_iter must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadResult {
    pub image_id: String,
    pub class_index: usize,
    pub p_original: f64,
    pub p_masked: f64,
    /// `100 · (p_masked − p_original)`, percentage points.
    pub delta_pct: f64,
}

/// Flat row-major indices of the `⌊fraction·h·w⌋` highest-valued pixels,
/// most relevant first; equal values keep row-major order.
pub fn select_morf_pixels(map: &Heatmap, fraction: f64) -> Vec<usize> {
    let values: Vec<f64> = map.values().collect();
    let count = ((fraction * values.len() as f64).floor() as usize).min(values.len());
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order.truncate(count);
    order
}

/// In-bounds 8-neighbours of `(y, x)` with the stencil weights renormalized
/// to sum to one.
pub fn neighbor_weights(height: usize, width: usize, y: usize, x: usize) -> Vec<(usize, f64)> {
    let mut out = Vec::with_capacity(8);
    for dy in -1i64..=1 {
        for dx in -1i64..=1 {
            if dy == 0 && dx == 0 {
                continue;
            }
            let (ny, nx) = (y as i64 + dy, x as i64 + dx);
            if ny < 0 || nx < 0 || ny >= height as i64 || nx >= width as i64 {
                continue;
            }
            let w = if dy == 0 || dx == 0 { AXIAL_WEIGHT } else { DIAGONAL_WEIGHT };
            out.push((ny as usize * width + nx as usize, w));
        }
    }
    let total: f64 = out.iter().map(|(_, w)| w).sum();
    out.iter_mut().for_each(|(_, w)| *w /= total);
    out
}

/// Deterministic Gaussian draws for one channel, one per masked pixel in
/// ascending pixel order. The stream depends only on
/// `(seed, image_id, channel)`.
pub fn imputation_noise(seed: u64, image_id: &str, channel: usize, count: usize, std: f64) -> Vec<f64> {
    if std == 0.0 {
        return vec![0.0; count];
    }
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update((image_id.len() as u64).to_le_bytes());
    hasher.update(image_id.as_bytes());
    hasher.update((channel as u64).to_le_bytes());
    let digest: [u8; 32] = hasher.finalize().into();
    let mut rng = ChaCha8Rng::from_seed(digest);
    let normal = Normal::new(0.0, std).expect("finite std");
    (0..count).map(|_| normal.sample(&mut rng)).collect()
}

/// Replaces `masked` pixels by solving, per channel,
/// `x_p = Σ_q w_pq·x_q + ε_p` over 8-neighbourhoods (Gauss–Seidel, masked
/// pixels swept in ascending order). Unmasked pixels are copied unchanged.
pub fn noisy_linear_imputation(
    image: &ImageTensor,
    image_id: &str,
    masked: &[usize],
    cfg: &MorfConfig,
) -> Result<ImageTensor> {
    let (c, h, w) = (image.channels(), image.height(), image.width());
    let n = h * w;
    let mut order: Vec<usize> = masked.to_vec();
    order.sort_unstable();
    order.dedup();
    if order.last().is_some_and(|&p| p >= n) {
        return Err(Error::Input(format!("masked pixel index out of range for {h}x{w} image")));
    }
    if order.is_empty() {
        return Ok(image.clone());
    }
    if order.len() == n {
        return Err(Error::Input("every pixel is masked; nothing to impute from".into()));
    }

    // slot[p] = position of pixel p among the unknowns
    let mut slot = vec![usize::MAX; n];
    for (i, &p) in order.iter().enumerate() {
        slot[p] = i;
    }
    let stencils: Vec<Vec<(usize, f64)>> = order
        .iter()
        .map(|&p| neighbor_weights(h, w, p / w, p % w))
        .collect();

    let mut out = image.view().to_owned();
    for ch in 0..c {
        let plane: Vec<f64> = image.view().index_axis(ndarray::Axis(0), ch).iter().copied().collect();
        let (lo, hi) = plane.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
        let range = hi - lo;
        let scale = if range > 0.0 { range } else { 1.0 };
        let noise = imputation_noise(cfg.seed, image_id, ch, order.len(), cfg.noise_std_frac * range);

        // constant part: known neighbours plus noise; coupling: unknown neighbours
        let mut rhs = Vec::with_capacity(order.len());
        let mut coupling: Vec<Vec<(usize, f64)>> = Vec::with_capacity(order.len());
        for (i, stencil) in stencils.iter().enumerate() {
            let mut b = noise[i];
            let mut links = Vec::new();
            for &(q, wq) in stencil {
                match slot[q] {
                    usize::MAX => b += wq * plane[q],
                    j => links.push((j, wq)),
                }
            }
            rhs.push(b);
            coupling.push(links);
        }

        let known: Vec<f64> = plane
            .iter()
            .enumerate()
            .filter(|(p, _)| slot[*p] == usize::MAX)
            .map(|(_, &v)| v)
            .collect();
        let start = known.iter().sum::<f64>() / known.len() as f64;
        let mut x = vec![start; order.len()];

        let residual = |x: &[f64]| {
            (0..x.len())
                .map(|i| {
                    let s: f64 = coupling[i].iter().map(|&(j, wj)| wj * x[j]).sum();
                    (x[i] - s - rhs[i]).abs()
                })
                .fold(0.0, f64::max)
        };
        // Stop once the residual meets the target and the a-posteriori error
        // estimate d·ρ/(1 − ρ) does too (d: largest update of the sweep, ρ: the
        // largest contraction of d over the last few sweeps).
        let target = cfg.solver_tol * scale;
        let mut last = residual(&x);
        let mut converged = last == 0.0;
        let mut prev_step = f64::INFINITY;
        let mut ratios = [MAX_CONTRACTION; RATIO_WINDOW];
        for sweep in 0..cfg.solver_max_iter {
            if converged {
                break;
            }
            let mut step: f64 = 0.0;
            for i in 0..x.len() {
                let s: f64 = coupling[i].iter().map(|&(j, wj)| wj * x[j]).sum();
                let v = rhs[i] + s;
                step = step.max((v - x[i]).abs());
                x[i] = v;
            }
            if prev_step.is_finite() && prev_step > 0.0 {
                ratios[sweep % RATIO_WINDOW] = (step / prev_step).min(MAX_CONTRACTION);
            }
            let rho = ratios.iter().copied().fold(0.0, f64::max);
            prev_step = step;
            last = residual(&x);
            converged = last <= target && (step == 0.0 || step * rho / (1.0 - rho) <= ERROR_MARGIN * target);
        }
        if !converged {
            return Err(Error::Convergence {
                iterations: cfg.solver_max_iter,
                residual: last / scale,
            });
        }

        for (i, &p) in order.iter().enumerate() {
            out[[ch, p / w, p % w]] = x[i];
        }
    }
    ImageTensor::new(out, image.value_range())
}

/// Softmax confidence of `class_index` before and after removing the CAM's
/// most relevant pixels.
pub fn morf_confidence_drop(
    backend: &dyn InferenceBackend,
    image_id: &str,
    image: &ImageTensor,
    map: &Heatmap,
    class_index: usize,
    cfg: &MorfConfig,
) -> Result<RoadResult> {
    cfg.validate()?;
    if map.dim() != (image.height(), image.width()) {
        return Err(Error::Input(format!(
            "heatmap {:?} does not match image {}x{}",
            map.dim(),
            image.height(),
            image.width()
        )));
    }
    let num_classes = backend.metadata().num_classes;
    if class_index >= num_classes {
        return Err(Error::Input(format!("class {class_index} out of range for {num_classes} classes")));
    }

    let confidence = |img: &ImageTensor| -> Result<f64> {
        let logits = backend.predict(img)?;
        if logits.len() != num_classes {
            return Err(Error::Backend(format!("expected {num_classes} logits, got {}", logits.len())));
        }
        Ok(softmax(&logits)[class_index])
    };

    let p_original = confidence(image)?;
    let removed = select_morf_pixels(map, cfg.fraction);
    let masked_image = noisy_linear_imputation(image, image_id, &removed, cfg)?;
    let p_masked = confidence(&masked_image)?;
    Ok(RoadResult {
        image_id: image_id.to_string(),
        class_index,
        p_original,
        p_masked,
        delta_pct: 100.0 * (p_masked - p_original),
    })
}
