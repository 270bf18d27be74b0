//! Small dense linear-algebra helpers shared by the identification chain and
//! the policies: deterministic symmetric eigendecomposition, operator norms,
//! projector distances, and Haar-random orthonormal factors.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Largest absolute entry of `M - M'`.
pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut dev = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            dev = dev.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    dev
}

/// Errors unless `M` is square and symmetric within `tol`.
pub fn check_symmetric(m: &DMatrix<f64>, tol: f64) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "expected square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let dev = max_asymmetry(m);
    if dev > tol {
        return Err(Error::NotSymmetric { max_dev: dev, tol });
    }
    Ok(())
}

fn argmax_abs(v: &DVector<f64>) -> usize {
    let mut best = 0;
    let mut best_val = v[0].abs();
    for i in 1..v.len() {
        if v[i].abs() > best_val {
            best = i;
            best_val = v[i].abs();
        }
    }
    best
}

/// Full symmetric eigendecomposition with a deterministic ordering:
/// eigenvalues descending; within numerically equal eigenvalues (gap < 1e-12)
/// eigenvectors are ordered by the index of their largest-magnitude component,
/// and every eigenvector's sign is fixed so that component is positive.
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = m.clone().symmetric_eigen();
    let mut cols: Vec<(f64, DVector<f64>, usize)> = (0..n)
        .map(|j| {
            let mut v: DVector<f64> = eig.eigenvectors.column(j).into_owned();
            let pivot = argmax_abs(&v);
            if v[pivot] < 0.0 {
                v.neg_mut();
            }
            (eig.eigenvalues[j], v, pivot)
        })
        .collect();
    // Descending by eigenvalue; f64 here is always finite.
    cols.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    // Reorder runs of numerically tied eigenvalues by pivot index.
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && (cols[start].0 - cols[end].0).abs() < 1e-12 {
            end += 1;
        }
        cols[start..end].sort_by_key(|c| c.2);
        start = end;
    }
    let values: Vec<f64> = cols.iter().map(|c| c.0).collect();
    let vectors = DMatrix::from_columns(&cols.iter().map(|c| c.1.clone()).collect::<Vec<_>>());
    (values, vectors)
}

/// Operator (spectral) norm of a symmetric matrix: max |eigenvalue|.
pub fn op_norm_sym(m: &DMatrix<f64>) -> f64 {
    m.symmetric_eigenvalues()
        .iter()
        .fold(0.0f64, |acc, &ev| acc.max(ev.abs()))
}

/// Columns spanning the top-`r` eigenspace (algebraically largest eigenvalues)
/// of a symmetric matrix, in the deterministic order of [`sym_eigen_desc`].
pub fn top_r_eigenvectors(m: &DMatrix<f64>, r: usize) -> DMatrix<f64> {
    let (_, vecs) = sym_eigen_desc(m);
    vecs.columns(0, r).into_owned()
}

/// Operator-norm distance between the orthogonal projectors onto the column
/// spans of `u1` and `u2`: `||U1 U1' - U2 U2'||_op`. Lies in [0, 1] when the
/// ranks agree.
pub fn projector_distance(u1: &DMatrix<f64>, u2: &DMatrix<f64>) -> f64 {
    let p1 = u1 * u1.transpose();
    let p2 = u2 * u2.transpose();
    op_norm_sym(&(p1 - p2))
}

/// Vector of i.i.d. standard normal draws.
pub fn gaussian_vec<R: Rng>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Matrix of i.i.d. standard normal draws.
pub fn gaussian_mat<R: Rng>(rng: &mut R, nrows: usize, ncols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(nrows, ncols, |_, _| rng.sample(StandardNormal))
}

/// `d x r` matrix with orthonormal columns: QR of a Gaussian matrix with the
/// sign of each column fixed by the corresponding diagonal entry of R (this
/// makes the draw Haar-distributed and deterministic given the RNG stream).
pub fn random_orthonormal<R: Rng>(rng: &mut R, d: usize, r: usize) -> DMatrix<f64> {
    assert!(r <= d, "need r <= d for an orthonormal d x r factor");
    let g = gaussian_mat(rng, d, r);
    let qr = g.qr();
    let rmat = qr.r();
    let mut q = qr.q();
    for j in 0..r {
        if rmat[(j, j)] < 0.0 {
            for i in 0..d {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

/// Haar-random rotation in SO(r): a random orthogonal matrix with determinant
/// +1 (for r = 1 this is always the scalar +1).
pub fn haar_rotation<R: Rng>(rng: &mut R, r: usize) -> DMatrix<f64> {
    let mut q = random_orthonormal(rng, r, r);
    if q.determinant() < 0.0 {
        let last = r - 1;
        for i in 0..r {
            q[(i, last)] = -q[(i, last)];
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn eigen_sorted_descending_with_vectors() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0, 2.0]));
        let (vals, vecs) = sym_eigen_desc(&m);
        assert_abs_diff_eq!(vals[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(vals[1], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(vals[2], 1.0, epsilon = 1e-12);
        // Eigenvector of 3.0 is e2, of 2.0 is e3, of 1.0 is e1.
        assert_abs_diff_eq!(vecs[(1, 0)].abs(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(vecs[(2, 1)].abs(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(vecs[(0, 2)].abs(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn eigen_degenerate_identity_is_deterministic() {
        let m = DMatrix::<f64>::identity(4, 4);
        let u1 = top_r_eigenvectors(&m, 1);
        let u2 = top_r_eigenvectors(&m, 1);
        assert_eq!(u1, u2);
        assert_abs_diff_eq!(u1.norm(), 1.0, epsilon = 1e-12);
        // Tie-break orders by pivot index, so the first basis vector wins.
        assert_abs_diff_eq!(u1[(0, 0)], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn eigen_sign_convention_positive_pivot() {
        // Eigenvector directions are sign-fixed: largest-|.| entry positive.
        let m = DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]);
        let (_, vecs) = sym_eigen_desc(&m);
        for j in 0..2 {
            let col: DVector<f64> = vecs.column(j).into_owned();
            assert!(col[argmax_abs(&col)] > 0.0);
        }
    }

    #[test]
    fn projector_distance_basic_cases() {
        let e1 = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let e2 = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        assert_abs_diff_eq!(projector_distance(&e1, &e1), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(projector_distance(&e1, &e2), 1.0, epsilon = 1e-12);
        let phi = 0.3f64;
        let rot = DMatrix::from_column_slice(2, 1, &[phi.cos(), phi.sin()]);
        assert_abs_diff_eq!(projector_distance(&e1, &rot), phi.sin(), epsilon = 1e-12);
    }

    #[test]
    fn random_orthonormal_has_orthonormal_columns() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let q = random_orthonormal(&mut rng, 6, 3);
        let gram = q.transpose() * &q;
        assert!((gram - DMatrix::identity(3, 3)).norm() < 1e-10);
    }

    #[test]
    fn haar_rotation_is_special_orthogonal() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for r in [1usize, 2, 3, 5] {
            let q = haar_rotation(&mut rng, r);
            assert!((q.transpose() * &q - DMatrix::identity(r, r)).norm() < 1e-10);
            assert!((q.determinant() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn rotation_in_dim_one_is_plus_one() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for _ in 0..20 {
            let q = haar_rotation(&mut rng, 1);
            assert_abs_diff_eq!(q[(0, 0)], 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn check_symmetric_rejects_asymmetry() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(check_symmetric(&m, 1e-9).is_err());
        assert!(check_symmetric(&m, 0.6).is_ok());
    }

    proptest! {
        #[test]
        fn op_norm_matches_two_by_two_brute_force(a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0) {
            // Eigenvalues of [[a, b], [b, c]] in closed form.
            let m = DMatrix::from_row_slice(2, 2, &[a, b, b, c]);
            let tr = a + c;
            let disc = ((a - c) / 2.0).powi(2) + b * b;
            let l1 = tr / 2.0 + disc.sqrt();
            let l2 = tr / 2.0 - disc.sqrt();
            let expect = l1.abs().max(l2.abs());
            prop_assert!((op_norm_sym(&m) - expect).abs() < 1e-9);
        }

        #[test]
        fn projector_distance_symmetric_and_bounded(seed in 0u64..500) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let u1 = random_orthonormal(&mut rng, 5, 2);
            let u2 = random_orthonormal(&mut rng, 5, 2);
            let d12 = projector_distance(&u1, &u2);
            let d21 = projector_distance(&u2, &u1);
            prop_assert!((d12 - d21).abs() < 1e-10);
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&d12));
        }

        #[test]
        fn eigen_reconstructs_matrix(seed in 0u64..200) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let g = gaussian_mat(&mut rng, 4, 4);
            let m = &g + g.transpose();
            let (vals, vecs) = sym_eigen_desc(&m);
            let lam = DMatrix::from_diagonal(&DVector::from_vec(vals.clone()));
            let rec = &vecs * lam * vecs.transpose();
            prop_assert!((rec - &m).norm() < 1e-8);
            for w in vals.windows(2) {
                prop_assert!(w[0] >= w[1] - 1e-12);
            }
        }
    }
}
