use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{COLORS, SIZE};

/// Channel level of a present color; 7/8 is exact in f32.
pub const BRIGHT: f64 = 0.875;
/// Present-channel level of a blob too faint for the detectors.
pub const FAINT: f64 = 0.5;
pub const ABSENT: f64 = 0.125;

const NOISE_SEED: u64 = 0x70_79;

/// Axis-aligned solid rectangle `[x, x+w) × [y, y+h)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Blob {
    pub color: usize,
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
    pub level: f64,
}

impl Blob {
    const fn bright(color: usize, x: usize, y: usize, w: usize, h: usize) -> Self {
        Self { color, x, y, w, h, level: BRIGHT }
    }

    pub fn box_coords(&self) -> [usize; 4] {
        [self.x, self.y, self.x + self.w, self.y + self.h]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub image_id: String,
    /// Ground-truth class; its blobs are the ground-truth boxes.
    pub class_index: usize,
    pub blobs: Vec<Blob>,
}

impl Scene {
    pub fn gt_boxes(&self) -> Vec<[usize; 4]> {
        self.blobs
            .iter()
            .filter(|b| b.color == self.class_index)
            .map(Blob::box_coords)
            .collect()
    }

    /// Background noise on a 1/64 grid in [1/16, 1/4], then the blobs in
    /// order. All values are exact in f32.
    pub fn render(&self, index: u64) -> Array3<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(NOISE_SEED ^ index);
        let mut img = Array3::from_shape_simple_fn((3, SIZE, SIZE), || f64::from(rng.random_range(4u8..=16)) / 64.0);
        for b in &self.blobs {
            for (ch, &present) in COLORS[b.color].iter().enumerate() {
                let v = if present { b.level } else { ABSENT };
                img.slice_mut(ndarray::s![ch, b.y..b.y + b.h, b.x..b.x + b.w]).fill(v);
            }
        }
        img
    }
}

fn scene(i: usize, class_index: usize, blobs: &[Blob]) -> Scene {
    Scene {
        image_id: format!("toy_{i:03}"),
        class_index,
        blobs: blobs.to_vec(),
    }
}

/// The bundled scenes. Most are single bright blobs; a few are built to be
/// misclassified (a larger distractor, a faint blob) or to exercise multiple
/// ground-truth boxes and image borders.
pub fn scenes() -> Vec<Scene> {
    vec![
        scene(0, 0, &[Blob::bright(0, 6, 8, 10, 10)]),
        scene(1, 1, &[Blob::bright(1, 14, 5, 12, 9)]),
        scene(2, 2, &[Blob::bright(2, 9, 15, 9, 12)]),
        scene(3, 3, &[Blob::bright(3, 17, 17, 11, 11)]),
        scene(4, 4, &[Blob::bright(4, 4, 12, 10, 13)]),
        scene(5, 5, &[Blob::bright(5, 10, 3, 13, 10)]),
        scene(6, 0, &[Blob::bright(0, 16, 14, 12, 12), Blob::bright(2, 3, 3, 5, 5)]),
        scene(7, 1, &[Blob::bright(1, 3, 20, 8, 8), Blob::bright(4, 16, 4, 12, 12)]),
        scene(
            8,
            2,
            &[Blob {
                level: FAINT,
                ..Blob::bright(2, 10, 10, 12, 12)
            }],
        ),
        scene(9, 3, &[Blob::bright(3, 3, 4, 8, 8), Blob::bright(3, 20, 19, 8, 8)]),
        scene(10, 5, &[Blob::bright(5, 0, 0, 9, 9)]),
        scene(11, 0, &[Blob::bright(0, 9, 22, 14, 6)]),
    ]
}
