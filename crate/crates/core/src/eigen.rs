//! Symmetric eigen-decomposition.
//!
//! [`top_eigenpair`] is the production path: a deterministic block power
//! iteration with a Rayleigh–Ritz step, returning the eigenpair of largest
//! magnitude. [`full_symmetric_eig`] is a cyclic Jacobi solver used as the
//! reference oracle and for spectrum checks.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Relative residual target `‖Kv − λv‖ ≤ tol · max(1, ‖K‖_F)`.
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 5000;

/// Number of simultaneously iterated vectors. Convergence of the leading
/// Ritz vector goes with |λ_{p+1} / λ_1| instead of |λ_2 / λ_1|.
const BLOCK_SIZE: usize = 8;
const MAX_JACOBI_SWEEPS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub value: f64,
    /// Unit norm, sign-corrected.
    pub vector: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenBasis {
    /// Descending.
    pub values: Array1<f64>,
    /// Orthonormal columns, `vectors.column(i)` pairs with `values[i]`.
    pub vectors: Array2<f64>,
}

pub fn frobenius_norm(m: ArrayView2<'_, f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Makes the largest-magnitude component positive (first index wins ties).
pub fn sign_correct(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn check_symmetric(k: ArrayView2<'_, f64>) -> Result<()> {
    let (r, c) = k.dim();
    if r != c || r == 0 {
        return Err(Error::Input(format!("expected a non-empty square matrix, got {r}x{c}")));
    }
    if k.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("matrix contains non-finite values".into()));
    }
    let scale = k.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    for i in 0..r {
        for j in (i + 1)..r {
            if (k[[i, j]] - k[[j, i]]).abs() > 1e-10 * scale {
                return Err(Error::Input(format!("matrix is not symmetric at ({i},{j})")));
            }
        }
    }
    Ok(())
}

/// Cyclic Jacobi on a symmetric matrix, in place. Returns the accumulated
/// rotations; the eigenvalues are left on the diagonal of `a`.
fn jacobi_in_place(a: &mut Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    let mut v = Array2::eye(n);
    let fro = frobenius_norm(a.view());
    if fro == 0.0 {
        return Ok(v);
    }
    let target = (n as f64) * f64::EPSILON * fro;

    for _ in 0..MAX_JACOBI_SWEEPS {
        let off = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| 2.0 * a[[i, j]] * a[[i, j]])
            .sum::<f64>()
            .sqrt();
        if off <= target {
            return Ok(v);
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let (akp, akq) = (a[[k, p]], a[[k, q]]);
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[[p, k]], a[[q, k]]);
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                a[[p, q]] = 0.0;
                a[[q, p]] = 0.0;
                for k in 0..n {
                    let (vkp, vkq) = (v[[k, p]], v[[k, q]]);
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let off = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .map(|(i, j)| 2.0 * a[[i, j]] * a[[i, j]])
        .sum::<f64>()
        .sqrt();
    Err(Error::Convergence {
        iterations: MAX_JACOBI_SWEEPS,
        residual: off / fro,
    })
}

/// Complete eigen-decomposition of a symmetric matrix, eigenvalues in
/// descending (signed) order.
pub fn full_symmetric_eig(k: ArrayView2<'_, f64>) -> Result<EigenBasis> {
    check_symmetric(k)?;
    let mut a = k.to_owned();
    let rotations = jacobi_in_place(&mut a)?;
    let diag = a.diag().to_owned();

    let mut order: Vec<usize> = (0..diag.len()).collect();
    order.sort_by(|&i, &j| diag[j].total_cmp(&diag[i]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| diag[i]).collect();
    let vectors = rotations.select(Axis(1), &order);
    Ok(EigenBasis { values, vectors })
}

/// Modified Gram–Schmidt (two passes) over the columns of `q`. Columns that
/// collapse are replaced by unit vectors.
fn orthonormalize(q: &mut Array2<f64>) {
    let (n, p) = q.dim();
    let mut next_unit = 0;
    for j in 0..p {
        let original = q.column(j).dot(&q.column(j)).sqrt();
        let mut attempts = 0;
        loop {
            for _ in 0..2 {
                for i in 0..j {
                    let proj = q.column(i).dot(&q.column(j));
                    let qi = q.column(i).to_owned();
                    q.column_mut(j).scaled_add(-proj, &qi);
                }
            }
            let norm = q.column(j).dot(&q.column(j)).sqrt();
            if norm > 1e-10 * original.max(f64::MIN_POSITIVE) && norm > 0.0 {
                q.column_mut(j).mapv_inplace(|x| x / norm);
                break;
            }
            attempts += 1;
            assert!(attempts <= n + 1, "no independent unit vector left");
            let mut col = q.column_mut(j);
            col.fill(0.0);
            col[next_unit % n] = 1.0;
            next_unit += 1;
        }
    }
}

fn start_block(n: usize, p: usize) -> Array2<f64> {
    let mut q = Array2::zeros((n, p));
    q.column_mut(0).fill(1.0);
    // fixed seed: outputs must be reproducible
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for j in 1..p {
        for i in 0..n {
            q[[i, j]] = rng.random_range(-1.0..1.0);
        }
    }
    orthonormalize(&mut q);
    q
}

/// Dominant (largest-magnitude) eigenpair of a symmetric matrix.
///
/// Stops once `‖Kv − λv‖₂ ≤ tol · max(1, ‖K‖_F)`. Ties in magnitude go to
/// the larger signed eigenvalue. The returned vector is sign-corrected.
pub fn top_eigenpair(k: ArrayView2<'_, f64>, tol: f64, max_iter: usize) -> Result<EigenPair> {
    check_symmetric(k)?;
    let n = k.nrows();
    let p = n.min(BLOCK_SIZE);
    let threshold = tol * frobenius_norm(k).max(1.0);

    let mut q = start_block(n, p);
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter.max(1) {
        let z = k.dot(&q);
        let mut h = q.t().dot(&z);
        // symmetrize away rounding before the small eigen-solve
        let ht = h.t().to_owned();
        h = (&h + &ht) * 0.5;
        let ritz = jacobi_in_place(&mut h)?;
        let theta = h.diag().to_owned();

        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&i, &j| {
            theta[j]
                .abs()
                .total_cmp(&theta[i].abs())
                .then(theta[j].total_cmp(&theta[i]))
                .then(i.cmp(&j))
        });
        let ritz = ritz.select(Axis(1), &order);
        let lead = ritz.column(0);
        let value = theta[order[0]];

        let mut vector = q.dot(&lead);
        let kv = z.dot(&lead);
        let norm = vector.dot(&vector).sqrt();
        vector /= norm;
        let r = &kv / norm - &vector * value;
        residual = r.dot(&r).sqrt();
        if residual <= threshold {
            let mut vector = vector.to_vec();
            sign_correct(&mut vector);
            return Ok(EigenPair {
                value,
                vector: Array1::from(vector),
            });
        }

        q = z.dot(&ritz);
        orthonormalize(&mut q);
    }
    Err(Error::Convergence {
        iterations: max_iter,
        residual: residual / frobenius_norm(k).max(1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn assert_unit_residual(k: &Array2<f64>, pair: &EigenPair) {
        let norm = pair.vector.dot(&pair.vector).sqrt();
        assert!((norm - 1.0).abs() < 1e-9);
        let r = k.dot(&pair.vector) - &pair.vector * pair.value;
        let res = r.dot(&r).sqrt();
        assert!(res <= 1e-8 * frobenius_norm(k.view()).max(1.0), "residual {res}");
    }

    #[test]
    fn diagonal_top_pair() {
        let k = Array2::from_diag(&array![5.0, 2.0, 1.0]);
        let pair = top_eigenpair(k.view(), DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!((pair.value - 5.0).abs() < 1e-12);
        assert!((pair.vector[0] - 1.0).abs() < 1e-12);
        assert!(pair.vector[1].abs() < 1e-12 && pair.vector[2].abs() < 1e-12);
    }

    #[test]
    fn two_by_two_top_pair() {
        let k = array![[2.0, 1.0], [1.0, 2.0]];
        let pair = top_eigenpair(k.view(), DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!((pair.value - 3.0).abs() < 1e-12);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((pair.vector[0] - h).abs() < 1e-12 && (pair.vector[1] - h).abs() < 1e-12);
        let oracle = full_symmetric_eig(k.view()).unwrap();
        assert!((oracle.values[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn identity_satisfies_residual_contract() {
        let k = Array2::eye(3);
        let pair = top_eigenpair(k.view(), DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!((pair.value - 1.0).abs() < 1e-12);
        assert_unit_residual(&k, &pair);
    }

    #[test]
    fn zero_matrix_has_zero_top_value() {
        let k = Array2::zeros((5, 5));
        let pair = top_eigenpair(k.view(), DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(pair.value, 0.0);
        assert_unit_residual(&k, &pair);
    }

    #[test]
    fn picks_largest_magnitude_for_indefinite_matrix() {
        let k = Array2::from_diag(&array![1.0, -4.0, 2.0, 0.5, 0.0, -1.0, 3.0, 0.1, 0.2, 0.3]);
        let pair = top_eigenpair(k.view(), DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!((pair.value + 4.0).abs() < 1e-12);
        assert!((pair.vector[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn diagonal_full_solver() {
        let k = Array2::from_diag(&array![1.0, 4.0, 9.0]);
        let basis = full_symmetric_eig(k.view()).unwrap();
        assert_eq!(basis.values.to_vec(), vec![9.0, 4.0, 1.0]);
        let expected = array![[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0]];
        for (a, b) in basis.vectors.iter().zip(expected.iter()) {
            assert!((a.abs() - b).abs() < 1e-15);
        }
    }

    #[test]
    fn rank_one_full_solver() {
        let v = array![0.6, 0.0, -0.8];
        let k = v.view().insert_axis(Axis(1)).dot(&v.view().insert_axis(Axis(0)));
        let basis = full_symmetric_eig(k.view()).unwrap();
        assert!((basis.values[0] - 1.0).abs() < 1e-14);
        assert!(basis.values[1].abs() < 1e-14 && basis.values[2].abs() < 1e-14);
        let dot = basis.vectors.column(0).dot(&v);
        assert!((dot.abs() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_asymmetric_and_non_finite() {
        let k = array![[1.0, 2.0], [0.0, 1.0]];
        assert!(matches!(top_eigenpair(k.view(), 1e-10, 10), Err(Error::Input(_))));
        assert!(matches!(full_symmetric_eig(k.view()), Err(Error::Input(_))));
        let k = array![[f64::NAN]];
        assert!(top_eigenpair(k.view(), 1e-10, 10).is_err());
    }

    #[test]
    fn reports_non_convergence() {
        // |λ2/λ1| close to one and a single iteration allowed
        let n = 12;
        let k = Array2::from_shape_fn((n, n), |(i, j)| {
            if i == j { 10.0 - i as f64 * 0.01 } else { 0.001 * ((i + j) as f64).sin() }
        });
        let k = (&k + &k.t()) * 0.5;
        match top_eigenpair(k.view(), 1e-14, 1) {
            Err(Error::Convergence { iterations, residual }) => {
                assert_eq!(iterations, 1);
                assert!(residual > 0.0);
            }
            other => panic!("expected convergence error, got {other:?}"),
        }
    }

    #[test]
    fn sign_correction_rule() {
        let mut v = vec![0.1, -0.9, 0.3];
        sign_correct(&mut v);
        assert_eq!(v, vec![-0.1, 0.9, -0.3]);
        let mut v = vec![-0.5, 0.5];
        sign_correct(&mut v);
        assert_eq!(v, vec![0.5, -0.5]);
    }
}
