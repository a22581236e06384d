use kpcacam::backend::{softmax, BackendMetadata};
use kpcacam::road::{
    imputation_noise, morf_confidence_drop, neighbor_weights, noisy_linear_imputation, select_morf_pixels,
};
use kpcacam::{ActivationTensor, Heatmap, ImageTensor, InferenceBackend, MorfConfig, Result};
use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, Array3, Axis};
use proptest::prelude::*;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_image(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> ImageTensor {
    ImageTensor::with_observed_range(Array3::from_shape_simple_fn((c, h, w), || rng.random_range(0.0..1.0))).unwrap()
}

/// Assembles `(I − W_mm) x = W_mu u + ε` for one channel and solves it with
/// dense LU.
fn dense_solve(image: &ImageTensor, image_id: &str, masked: &[usize], ch: usize, cfg: &MorfConfig) -> Vec<f64> {
    let (h, w) = (image.height(), image.width());
    let mut order = masked.to_vec();
    order.sort_unstable();
    let plane = image.view().index_axis(Axis(0), ch).to_owned();
    let flat: Vec<f64> = plane.iter().copied().collect();
    let range = flat.iter().copied().fold(f64::NEG_INFINITY, f64::max) - flat.iter().copied().fold(f64::INFINITY, f64::min);
    let noise = imputation_noise(cfg.seed, image_id, ch, order.len(), cfg.noise_std_frac * range);
    let m = order.len();
    let mut a = DMatrix::<f64>::identity(m, m);
    let mut b = DVector::<f64>::from_vec(noise);
    for (i, &p) in order.iter().enumerate() {
        for (q, wq) in neighbor_weights(h, w, p / w, p % w) {
            match order.binary_search(&q) {
                Ok(j) => a[(i, j)] -= wq,
                Err(_) => b[i] += wq * flat[q],
            }
        }
    }
    a.lu().solve(&b).expect("diagonally dominant").iter().copied().collect()
}

#[test]
fn gauss_seidel_matches_dense_solve_on_small_masks() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let cfg = MorfConfig::default();
    let mut worst: f64 = 0.0;
    for size in 1..=12 {
        for trial in 0..25 {
            let image = random_image(&mut rng, 3, 8, 8);
            // alternate scattered masks with compact blocks, which couple the most
            let masked: Vec<usize> = if trial % 2 == 0 {
                sample(&mut rng, 64, size).into_vec()
            } else {
                let (y0, x0) = (rng.random_range(0..4), rng.random_range(0..4));
                (0..size).map(|i| (y0 + i / 4) * 8 + x0 + i % 4).collect()
            };
            let id = format!("img{size}_{trial}");
            let out = noisy_linear_imputation(&image, &id, &masked, &cfg).unwrap();
            for ch in 0..3 {
                let expected = dense_solve(&image, &id, &masked, ch, &cfg);
                let mut order = masked.clone();
                order.sort_unstable();
                for (p, e) in order.iter().zip(&expected) {
                    let d = (out.view()[[ch, p / 8, p % 8]] - e).abs();
                    worst = worst.max(d);
                    assert!(d <= 1e-6, "size {size} trial {trial} ch {ch}: |Δ| = {d}");
                }
            }
        }
    }
    eprintln!("worst dense-solve deviation {worst:.3e}");
}

#[test]
fn coupled_horizontal_pair() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let image = random_image(&mut rng, 1, 5, 5);
    let masked = [12, 13];
    let cfg = MorfConfig {
        noise_std_frac: 0.0,
        ..MorfConfig::default()
    };
    let out = noisy_linear_imputation(&image, "pair", &masked, &cfg).unwrap();
    let expected = dense_solve(&image, "pair", &masked, 0, &cfg);
    assert!((out.view()[[0, 2, 2]] - expected[0]).abs() <= 1e-6);
    assert!((out.view()[[0, 2, 3]] - expected[1]).abs() <= 1e-6);
}

#[test]
fn zero_noise_maximum_principle() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let cfg = MorfConfig {
        noise_std_frac: 0.0,
        ..MorfConfig::default()
    };
    for case in 0..100 {
        let (h, w) = (rng.random_range(3..16), rng.random_range(3..16));
        let image = random_image(&mut rng, 3, h, w);
        let count = rng.random_range(1..h * w);
        let masked = sample(&mut rng, h * w, count).into_vec();
        let out = noisy_linear_imputation(&image, "mp", &masked, &cfg).unwrap();
        for ch in 0..3 {
            let known: Vec<f64> = (0..h * w)
                .filter(|p| !masked.contains(p))
                .map(|p| image.view()[[ch, p / w, p % w]])
                .collect();
            let lo = known.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = known.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let slack = 1e-6 * (hi - lo).max(1.0);
            for &p in &masked {
                let v = out.view()[[ch, p / w, p % w]];
                assert!(v >= lo - slack && v <= hi + slack, "case {case}: {v} outside [{lo}, {hi}]");
            }
        }
    }
}

#[test]
fn imputation_is_deterministic_and_leaves_unmasked_pixels() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let image = random_image(&mut rng, 3, 12, 12);
    let masked = sample(&mut rng, 144, 36).into_vec();
    let cfg = MorfConfig {
        seed: 7,
        ..MorfConfig::default()
    };
    let a = noisy_linear_imputation(&image, "d", &masked, &cfg).unwrap();
    let b = noisy_linear_imputation(&image, "d", &masked, &cfg).unwrap();
    assert!(a.view().iter().zip(b.view().iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
    for p in (0..144).filter(|p| !masked.contains(p)) {
        for ch in 0..3 {
            assert_eq!(a.view()[[ch, p / 12, p % 12]].to_bits(), image.view()[[ch, p / 12, p % 12]].to_bits());
        }
    }
    let other = noisy_linear_imputation(&image, "d", &masked, &MorfConfig { seed: 8, ..cfg }).unwrap();
    assert_ne!(a, other);
}

#[test]
fn residual_within_tolerance() {
    let mut rng = ChaCha8Rng::seed_from_u64(45);
    let image = random_image(&mut rng, 1, 16, 16);
    let masked = sample(&mut rng, 256, 64).into_vec();
    let cfg = MorfConfig::default();
    let out = noisy_linear_imputation(&image, "r", &masked, &cfg).unwrap();
    let (lo, hi) = image.view().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let mut order = masked.clone();
    order.sort_unstable();
    let noise = imputation_noise(cfg.seed, "r", 0, order.len(), cfg.noise_std_frac * (hi - lo));
    let x = out.view().index_axis(Axis(0), 0).to_owned();
    for (i, &p) in order.iter().enumerate() {
        let avg: f64 = neighbor_weights(16, 16, p / 16, p % 16)
            .into_iter()
            .map(|(q, wq)| wq * x[[q / 16, q % 16]])
            .sum();
        assert!((x[[p / 16, p % 16]] - avg - noise[i]).abs() <= cfg.solver_tol * (hi - lo));
    }
}

/// Two-class linear model: logit₀ = a · image[0, y, x], logit₁ = 0.
struct OnePixel {
    meta: BackendMetadata,
    pixel: (usize, usize),
    gain: f64,
}

impl InferenceBackend for OnePixel {
    fn metadata(&self) -> &BackendMetadata {
        &self.meta
    }

    fn predict(&self, image: &ImageTensor) -> Result<Vec<f64>> {
        Ok(vec![self.gain * image.view()[[0, self.pixel.0, self.pixel.1]], 0.0])
    }

    fn extract_activations(&self, _: &ImageTensor) -> Result<ActivationTensor> {
        unimplemented!("not needed for ROAD")
    }
}

fn one_pixel(shape: [usize; 3], pixel: (usize, usize)) -> OnePixel {
    OnePixel {
        meta: BackendMetadata {
            num_classes: 2,
            input_shape: shape,
            activation_layer_name: "none".into(),
        },
        pixel,
        gain: 3.0,
    }
}

#[test]
fn linear_one_pixel_backend_closed_form() {
    // 8×8 single-channel image: the read pixel (3, 4) is 1, its axial
    // neighbours 0.5, its diagonal neighbours 0.2, the rest 0.
    let mut data = Array3::zeros((1, 8, 8));
    data[[0, 3, 4]] = 1.0;
    for (y, x) in [(2, 4), (4, 4), (3, 3), (3, 5)] {
        data[[0, y, x]] = 0.5;
    }
    for (y, x) in [(2, 3), (2, 5), (4, 3), (4, 5)] {
        data[[0, y, x]] = 0.2;
    }
    let image = ImageTensor::with_observed_range(data).unwrap();
    let mut map = Array2::zeros((8, 8));
    map[[3, 4]] = 1.0;
    let map = Heatmap::new(map).unwrap();
    let cfg = MorfConfig {
        fraction: 1.0 / 64.0,
        noise_std_frac: 0.0,
        ..MorfConfig::default()
    };
    let backend = one_pixel([1, 8, 8], (3, 4));
    let r = morf_confidence_drop(&backend, "lin", &image, &map, 0, &cfg).unwrap();

    let imputed = 4.0 * (1.0 / 6.0) * 0.5 + 4.0 * (1.0 / 12.0) * 0.2;
    let p0 = softmax(&[3.0, 0.0])[0];
    let p1 = softmax(&[3.0 * imputed, 0.0])[0];
    assert!((r.p_original - p0).abs() < 1e-12);
    assert!((r.p_masked - p1).abs() < 1e-9);
    assert!((r.delta_pct - 100.0 * (p1 - p0)).abs() < 1e-7);
}

#[test]
fn no_masked_pixels_gives_zero_delta() {
    let mut rng = ChaCha8Rng::seed_from_u64(46);
    let image = random_image(&mut rng, 1, 8, 8);
    let map = Heatmap::new(Array2::from_shape_simple_fn((8, 8), || rng.random_range(0.0..1.0))).unwrap();
    let cfg = MorfConfig {
        fraction: 0.01,
        noise_std_frac: 0.0,
        ..MorfConfig::default()
    };
    assert!(select_morf_pixels(&map, cfg.fraction).is_empty());
    let r = morf_confidence_drop(&one_pixel([1, 8, 8], (2, 2)), "z", &image, &map, 0, &cfg).unwrap();
    assert_eq!(r.delta_pct, 0.0);
    assert_eq!(r.p_original, r.p_masked);
}

#[test]
fn heatmap_resolution_must_match_image() {
    let mut rng = ChaCha8Rng::seed_from_u64(47);
    let image = random_image(&mut rng, 1, 8, 8);
    let map = Heatmap::new(Array2::zeros((4, 4))).unwrap();
    assert!(morf_confidence_drop(&one_pixel([1, 8, 8], (0, 0)), "x", &image, &map, 0, &MorfConfig::default()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn delta_invariant_to_cam_scale(values in proptest::collection::vec(0.0f64..1.0, 64), s in 0.01f64..100.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let image = random_image(&mut rng, 1, 8, 8);
        let map = Heatmap::new(Array2::from_shape_vec((8, 8), values.clone()).unwrap()).unwrap();
        let scaled = Heatmap::new(Array2::from_shape_vec((8, 8), values.iter().map(|v| v * s).collect()).unwrap()).unwrap();
        prop_assert_eq!(select_morf_pixels(&map, 0.25), select_morf_pixels(&scaled, 0.25));
        let backend = one_pixel([1, 8, 8], (4, 4));
        let cfg = MorfConfig { seed, ..MorfConfig::default() };
        let a = morf_confidence_drop(&backend, "s", &image, &map, 0, &cfg).unwrap();
        let b = morf_confidence_drop(&backend, "s", &image, &scaled, 0, &cfg).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn selection_is_top_fraction(values in proptest::collection::vec(0.0f64..1.0, 1..200), fraction in 0.0f64..1.0) {
        let n = values.len();
        let map = Heatmap::new(Array2::from_shape_vec((1, n), values.clone()).unwrap()).unwrap();
        let picked = select_morf_pixels(&map, fraction);
        prop_assert_eq!(picked.len(), (fraction * n as f64).floor() as usize);
        let min_picked = picked.iter().map(|&i| values[i]).fold(f64::INFINITY, f64::min);
        for i in (0..n).filter(|i| !picked.contains(i)) {
            prop_assert!(values[i] <= min_picked);
        }
    }
}
