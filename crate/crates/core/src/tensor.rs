//! Dense containers shared by every stage of the pipeline, plus the two
//! image-grid utilities applied to CAMs (upsampling and min-max scaling).

use ndarray::{Array2, Array3, ArrayView2, ArrayView3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn ensure_finite<'a>(what: &str, mut values: impl Iterator<Item = &'a f64>) -> Result<()> {
    if values.any(|v| !v.is_finite()) {
        return Err(Error::Input(format!("{what} contains non-finite values")));
    }
    Ok(())
}

/// C×H×W block of convolutional feature-map values.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTensor {
    data: Array3<f64>,
}

impl ActivationTensor {
    pub fn new(data: Array3<f64>) -> Result<Self> {
        let (c, h, w) = data.dim();
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::Input(format!(
                "activation tensor must be non-empty, got {c}x{h}x{w}"
            )));
        }
        ensure_finite("activation tensor", data.iter())?;
        Ok(Self { data })
    }

    pub fn from_shape_vec(shape: (usize, usize, usize), values: Vec<f64>) -> Result<Self> {
        let data = Array3::from_shape_vec(shape, values)
            .map_err(|e| Error::Input(format!("activation tensor shape: {e}")))?;
        Self::new(data)
    }

    pub fn channels(&self) -> usize {
        self.data.dim().0
    }

    pub fn height(&self) -> usize {
        self.data.dim().1
    }

    pub fn width(&self) -> usize {
        self.data.dim().2
    }

    pub fn view(&self) -> ArrayView3<'_, f64> {
        self.data.view()
    }

    pub fn into_inner(self) -> Array3<f64> {
        self.data
    }
}

/// H×W saliency map. Values are arbitrary reals until passed through
/// [`minmax_normalize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    data: Array2<f64>,
}

impl Heatmap {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        let (h, w) = data.dim();
        if h == 0 || w == 0 {
            return Err(Error::Input(format!("heatmap must be non-empty, got {h}x{w}")));
        }
        ensure_finite("heatmap", data.iter())?;
        Ok(Self { data })
    }

    pub fn from_shape_vec(shape: (usize, usize), values: Vec<f64>) -> Result<Self> {
        let data = Array2::from_shape_vec(shape, values)
            .map_err(|e| Error::Input(format!("heatmap shape: {e}")))?;
        Self::new(data)
    }

    pub fn height(&self) -> usize {
        self.data.nrows()
    }

    pub fn width(&self) -> usize {
        self.data.ncols()
    }

    pub fn dim(&self) -> (usize, usize) {
        self.data.dim()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    /// Row-major values.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().copied()
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.data
    }
}

/// Model input image, channels-first. `value_range` records the nominal
/// (lo, hi) scale of the values, e.g. (0, 255) or (0, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    data: Array3<f64>,
    value_range: (f64, f64),
}

impl ImageTensor {
    pub fn new(data: Array3<f64>, value_range: (f64, f64)) -> Result<Self> {
        let (c, h, w) = data.dim();
        if c != 1 && c != 3 {
            return Err(Error::Input(format!("image must have 1 or 3 channels, got {c}")));
        }
        if h == 0 || w == 0 {
            return Err(Error::Input(format!("image must be non-empty, got {h}x{w}")));
        }
        ensure_finite("image", data.iter())?;
        if !(value_range.0.is_finite() && value_range.1.is_finite() && value_range.0 <= value_range.1)
        {
            return Err(Error::Input(format!("bad image value range {value_range:?}")));
        }
        Ok(Self { data, value_range })
    }

    /// Builds an image whose value range is the observed min/max.
    pub fn with_observed_range(data: Array3<f64>) -> Result<Self> {
        let lo = data.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let range = if lo.is_finite() && hi.is_finite() { (lo, hi) } else { (0.0, 0.0) };
        Self::new(data, range)
    }

    pub fn channels(&self) -> usize {
        self.data.dim().0
    }

    pub fn height(&self) -> usize {
        self.data.dim().1
    }

    pub fn width(&self) -> usize {
        self.data.dim().2
    }

    pub fn shape(&self) -> [usize; 3] {
        let (c, h, w) = self.data.dim();
        [c, h, w]
    }

    pub fn value_range(&self) -> (f64, f64) {
        self.value_range
    }

    pub fn view(&self) -> ArrayView3<'_, f64> {
        self.data.view()
    }

    pub fn into_inner(self) -> Array3<f64> {
        self.data
    }
}

/// Axis-aligned pixel rectangle `[x_min, x_max) × [y_min, y_max)`.
///
/// Serialized as `[x_min, y_min, x_max, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[i64; 4]", into = "[usize; 4]")]
pub struct BoundingBox {
    pub x_min: usize,
    pub y_min: usize,
    pub x_max: usize,
    pub y_max: usize,
}

impl BoundingBox {
    pub fn new(x_min: usize, y_min: usize, x_max: usize, y_max: usize) -> Result<Self> {
        if x_min >= x_max || y_min >= y_max {
            return Err(Error::Input(format!(
                "degenerate box ({x_min},{y_min},{x_max},{y_max})"
            )));
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn width(&self) -> usize {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> usize {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }
}

impl TryFrom<[i64; 4]> for BoundingBox {
    type Error = Error;

    fn try_from(v: [i64; 4]) -> Result<Self> {
        if v.iter().any(|&c| c < 0) {
            return Err(Error::Input(format!("negative box coordinate in {v:?}")));
        }
        Self::new(v[0] as usize, v[1] as usize, v[2] as usize, v[3] as usize)
    }
}

impl From<BoundingBox> for [usize; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.x_min, b.y_min, b.x_max, b.y_max]
    }
}

/// Source coordinate and interpolation weight for one output index under
/// align-corners sampling.
fn align_corners_axis(out_len: usize, in_len: usize) -> Vec<(usize, usize, f64)> {
    (0..out_len)
        .map(|i| {
            if in_len == 1 || out_len == 1 {
                return (0, 0, 0.0);
            }
            let src = (i * (in_len - 1)) as f64 / (out_len - 1) as f64;
            let lo = (src.floor() as usize).min(in_len - 1);
            let hi = (lo + 1).min(in_len - 1);
            (lo, hi, src - lo as f64)
        })
        .collect()
}

/// Align-corners bilinear resize to `(height, width)`.
///
/// Output corners equal input corners when both input sides are ≥ 2, and
/// every output value lies within the range of its four source pixels.
pub fn bilinear_resize(map: &Heatmap, target: (usize, usize)) -> Result<Heatmap> {
    let (th, tw) = target;
    if th == 0 || tw == 0 {
        return Err(Error::Input(format!("resize target must be non-empty, got {th}x{tw}")));
    }
    let (h, w) = map.dim();
    let src = map.view();
    let rows = align_corners_axis(th, h);
    let cols = align_corners_axis(tw, w);

    let out = Array2::from_shape_fn((th, tw), |(i, j)| {
        let (y0, y1, fy) = rows[i];
        let (x0, x1, fx) = cols[j];
        let (a, b, c, d) = (src[[y0, x0]], src[[y0, x1]], src[[y1, x0]], src[[y1, x1]]);
        let top = a + fx * (b - a);
        let bottom = c + fx * (d - c);
        let v = top + fy * (bottom - top);
        // rounding can overshoot the corner hull by an ulp
        let lo = a.min(b).min(c).min(d);
        let hi = a.max(b).max(c).max(d);
        v.clamp(lo, hi)
    });
    Heatmap::new(out)
}

/// `(x - min) / (max - min)` elementwise; a constant map becomes all zeros.
pub fn minmax_normalize(map: &Heatmap) -> Heatmap {
    let (lo, hi) = (map.min(), map.max());
    let span = hi - lo;
    let data = if span > 0.0 {
        map.view().mapv(|v| (v - lo) / span)
    } else {
        Array2::zeros(map.dim())
    };
    Heatmap { data }
}
