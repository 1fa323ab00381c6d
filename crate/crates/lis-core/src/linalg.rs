//! Small dense linear algebra helpers shared across the crate.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Replace `x` by its symmetric part `(x + xᵀ)/2`.
///
/// Riccati-type recursions amplify rounding asymmetry, so every covariance
/// block is passed through this after an update.
pub fn symmetrize(x: &mut DMatrix<f64>) {
    let xt = x.transpose();
    *x += xt;
    *x *= 0.5;
}

/// Symmetric part of `x` as a new matrix.
pub fn symmetrized(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut y = x.clone();
    symmetrize(&mut y);
    y
}

/// Largest-magnitude entry, 0 for an empty matrix.
pub fn max_abs(x: &DMatrix<f64>) -> f64 {
    x.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Max-norm distance between two equally sized matrices.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

pub fn all_finite(x: &DMatrix<f64>) -> bool {
    x.iter().all(|v| v.is_finite())
}

/// Eigenvalues of the symmetric part of `x`, ascending.
pub fn symmetric_eigenvalues(x: &DMatrix<f64>) -> DVector<f64> {
    let mut ev = symmetrized(x).symmetric_eigenvalues();
    ev.as_mut_slice()
        .sort_by(|a, b| a.partial_cmp(b).expect("eigenvalue is NaN"));
    ev
}

pub fn min_eigenvalue(x: &DMatrix<f64>) -> f64 {
    symmetric_eigenvalues(x)[0]
}

pub fn max_eigenvalue(x: &DMatrix<f64>) -> f64 {
    let ev = symmetric_eigenvalues(x);
    ev[ev.len() - 1]
}

/// Whether the symmetric part of `x` is positive semidefinite up to `tol`.
pub fn is_psd(x: &DMatrix<f64>, tol: f64) -> bool {
    x.nrows() == x.ncols() && min_eigenvalue(x) >= -tol
}

/// Symmetric PSD square root via eigendecomposition.
///
/// Slightly negative eigenvalues (roundoff) are clamped to zero; genuinely
/// indefinite input is an error.
pub fn sqrt_psd(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.nrows() != x.ncols() {
        return Err(Error::DimensionMismatch("matrix square root of a non-square matrix".into()));
    }
    let eig = symmetrized(x).symmetric_eigen();
    let scale = max_abs(x).max(1.0);
    let mut d = eig.eigenvalues.clone();
    for v in d.iter_mut() {
        if *v < -1e-9 * scale {
            return Err(Error::NotPositiveDefinite(format!(
                "matrix square root requested with eigenvalue {v}"
            )));
        }
        *v = v.max(0.0).sqrt();
    }
    let mut root = &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose();
    symmetrize(&mut root);
    Ok(root)
}

/// Solve `S X = B` for symmetric positive definite `S` via Cholesky.
pub fn solve_spd(s: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let chol = symmetrized(s).cholesky()?;
    Some(chol.solve(b))
}

/// Spectral radius of a square matrix (largest eigenvalue modulus).
///
/// Uses the Schur-based eigenvalue solver and falls back to power iteration
/// if it fails to converge.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    assert_eq!(m.nrows(), m.ncols(), "spectral radius of a non-square matrix");
    if m.is_empty() {
        return 0.0;
    }
    match nalgebra::linalg::Schur::try_new(m.clone(), 1e-14, 100_000) {
        Some(schur) => schur
            .complex_eigenvalues()
            .iter()
            .fold(0.0_f64, |r, ev| r.max(ev.norm())),
        None => matrix_power_radius(m, 10_000, 1e-12),
    }
}

/// Power-iteration estimate of the spectral radius of `m` acting on vectors.
///
/// Suitable for nonnegative-spectrum cases and as a fallback; may
/// underestimate when the dominant eigenvalue is defective or complex with
/// near-tied modulus.
pub fn matrix_power_radius(m: &DMatrix<f64>, max_iter: usize, tol: f64) -> f64 {
    let n = m.nrows();
    let mut v = DVector::<f64>::from_element(n, 1.0 / (n as f64).sqrt());
    let mut lambda = 0.0_f64;
    for _ in 0..max_iter {
        let w = m * &v;
        let norm = w.norm();
        if norm < 1e-300 {
            return 0.0;
        }
        let next = norm;
        v = w / norm;
        if (next - lambda).abs() <= tol * next.max(1.0) {
            return next;
        }
        lambda = next;
    }
    lambda
}

/// Kronecker product A ⊗ B.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Column-stacking vectorization, consistent with `vec(AXBᵀ) = (B⊗A)vec(X)`.
pub fn vec_of(x: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(x.as_slice())
}

/// Inverse of [`vec_of`] for an `r × c` target.
pub fn unvec(v: &DVector<f64>, r: usize, c: usize) -> DMatrix<f64> {
    assert_eq!(v.len(), r * c);
    DMatrix::from_column_slice(r, c, v.as_slice())
}

/// Frobenius inner product ⟨X, Y⟩ = Tr(Yᵀ X).
pub fn frob_inner(x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    x.iter().zip(y.iter()).map(|(a, b)| a * b).sum()
}

/// Matrix 2-norm (largest singular value).
pub fn norm2(x: &DMatrix<f64>) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.clone().singular_values()[0]
}

/// Assemble a block-diagonal matrix from square or rectangular blocks.
pub fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn symmetrize_removes_skew_part() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 3.0]);
        let s = symmetrized(&x);
        assert_relative_eq!(s[(0, 1)], 1.0);
        assert_relative_eq!(s[(1, 0)], 1.0);
        assert_relative_eq!(s[(0, 0)], 1.0);
    }

    #[test]
    fn spectral_radius_of_rotation_scaled() {
        // 0.5 * rotation has both eigenvalues at modulus 0.5.
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -0.5, 0.5, 0.0]);
        assert_relative_eq!(spectral_radius(&m), 0.5, max_relative = 1e-12);
    }

    #[test]
    fn kron_vectorization_identity() {
        // vec(A X Bᵀ) = (B ⊗ A) vec(X)
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = DMatrix::from_row_slice(2, 2, &[0.5, -1.0, 2.0, 0.25]);
        let x = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 0.5, 3.0]);
        let lhs = vec_of(&(&a * &x * b.transpose()));
        let rhs = kron(&b, &a) * vec_of(&x);
        assert_relative_eq!((lhs - rhs).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn sqrt_psd_squares_back() {
        let g = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.0, 0.2, 2.0, 0.3, 0.0, 0.3, 0.5]);
        let x = &g * g.transpose();
        let r = sqrt_psd(&x).unwrap();
        assert_relative_eq!((&r * &r - &x).norm(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn sqrt_psd_rejects_indefinite() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(sqrt_psd(&x).is_err());
    }

    #[test]
    fn block_diag_layout() {
        let a = DMatrix::from_row_slice(1, 1, &[2.0]);
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let d = block_diag(&[a, b]);
        assert_eq!(d.shape(), (3, 3));
        assert_eq!(d[(0, 0)], 2.0);
        assert_eq!(d[(1, 1)], 1.0);
        assert_eq!(d[(2, 1)], 3.0);
        assert_eq!(d[(0, 1)], 0.0);
    }
}
