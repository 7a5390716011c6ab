//! Small dense/matrix-free linear algebra helpers.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Operator (spectral) norm of a symmetric matrix.
pub fn operator_norm_symmetric(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let eig = nalgebra::SymmetricEigen::new(m.clone());
    eig.eigenvalues.iter().fold(0.0f64, |acc, &l| acc.max(l.abs()))
}

/// Maximum absolute asymmetry `max_ij |m_ij - m_ji|`.
pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Smallest eigenvalue and a unit eigenvector of a symmetric matrix.
/// Fails with [`Error::NotSymmetric`] when asymmetry exceeds `tol`.
pub fn min_eigenpair_symmetric(m: &DMatrix<f64>, tol: f64) -> Result<(f64, DVector<f64>)> {
    let asym = max_asymmetry(m);
    if asym > tol {
        return Err(Error::NotSymmetric {
            max_asymmetry: asym,
            tol,
        });
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(sym);
    let (mut idx, mut min) = (0usize, f64::INFINITY);
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        if l < min {
            min = l;
            idx = i;
        }
    }
    let mut v: DVector<f64> = eig.eigenvectors.column(idx).into();
    canonicalize_sign(&mut v);
    Ok((min, v))
}

/// Flips a vector so its first nonzero coordinate is positive.
pub fn canonicalize_sign(v: &mut DVector<f64>) {
    if let Some(&first) = v.iter().find(|x| x.abs() > 1e-14) {
        if first < 0.0 {
            *v = -v.clone();
        }
    }
}

/// Smallest eigenvalue of a symmetric operator given only matrix-vector
/// products, via Lanczos with full reorthogonalization.
///
/// `dim` is the ambient dimension; convergence is declared when the residual
/// `||A v - lambda v||` drops below `tol`.
pub fn min_eigenvalue_operator<F>(dim: usize, apply: F, tol: f64, max_iters: usize) -> Result<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    if dim == 0 {
        return Err(Error::InvalidInput("zero-dimensional operator".into()));
    }
    let mut stream = crate::rng::Stream::from_seed(0x1a2b_3c4d);
    let mut q = DVector::from_iterator(dim, (0..dim).map(|_| stream.normal()));
    q /= q.norm();

    let mut basis: Vec<DVector<f64>> = vec![q.clone()];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut best = f64::INFINITY;

    let limit = max_iters.min(dim.max(1) * 4 + 8);
    for k in 0..limit {
        let mut w = apply(&basis[k]);
        let alpha = basis[k].dot(&w);
        alphas.push(alpha);
        w -= alpha * &basis[k];
        if k > 0 {
            w -= betas[k - 1] * &basis[k - 1];
        }
        // Full reorthogonalization keeps the small tridiagonal reliable.
        for b in &basis {
            let c = b.dot(&w);
            w -= c * b;
        }
        let (lambda, residual) = tridiag_min_eig(&alphas, &betas);
        best = lambda;
        let beta = w.norm();
        if residual * beta <= tol || beta <= 1e-14 || basis.len() >= dim {
            return Ok(best);
        }
        betas.push(beta);
        basis.push(w / beta);
    }
    Ok(best)
}

/// Smallest eigenvalue of the Lanczos tridiagonal together with the magnitude
/// of the last entry of its eigenvector (the residual multiplier).
fn tridiag_min_eig(alphas: &[f64], betas: &[f64]) -> (f64, f64) {
    let n = alphas.len();
    let mut t = DMatrix::zeros(n, n);
    for i in 0..n {
        t[(i, i)] = alphas[i];
        if i + 1 < n {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = nalgebra::SymmetricEigen::new(t);
    let (mut idx, mut min) = (0usize, f64::INFINITY);
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        if l < min {
            min = l;
            idx = i;
        }
    }
    (min, eig.eigenvectors[(n - 1, idx)].abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_eig_diag() {
        let m = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 2.0]);
        let (l, v) = min_eigenpair_symmetric(&m, 1e-8).unwrap();
        assert!((l + 1.0).abs() < 1e-12);
        assert!((v[0].abs() - 1.0).abs() < 1e-12 && v[1].abs() < 1e-12);
        assert!(v[0] > 0.0, "sign canonicalization");
    }

    #[test]
    fn min_eig_identity() {
        let m = DMatrix::identity(3, 3);
        let (l, v) = min_eigenpair_symmetric(&m, 1e-8).unwrap();
        assert!((l - 1.0).abs() < 1e-12);
        assert!((v.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn asymmetric_matrix_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(
            min_eigenpair_symmetric(&m, 1e-8),
            Err(Error::NotSymmetric { .. })
        ));
    }

    #[test]
    fn lanczos_matches_dense() {
        let mut stream = crate::rng::Stream::from_seed(5);
        for _ in 0..20 {
            let n = 6;
            let mut m = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..=i {
                    let x = stream.uniform_in(-2.0, 2.0);
                    m[(i, j)] = x;
                    m[(j, i)] = x;
                }
            }
            let (dense, _) = min_eigenpair_symmetric(&m, 1e-8).unwrap();
            let lanczos =
                min_eigenvalue_operator(n, |v| &m * v, 1e-8, 200).unwrap();
            assert!((dense - lanczos).abs() < 1e-6, "dense {dense} vs lanczos {lanczos}");
        }
    }
}
