//! Dense symmetric eigen helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100_000;

/// Eigen-decomposition of a symmetric matrix with eigenvalues in
/// non-increasing order. Equal eigenvalues keep the solver's output order.
pub fn symmetric_eigen_desc(m: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::numeric("eigen-decomposition of a non-square matrix"));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("matrix has non-finite entries"));
    }
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, MAX_SWEEPS)
        .ok_or_else(|| Error::numeric("symmetric eigensolver did not converge"))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

/// Smallest eigenvalue divided by the largest eigenvalue magnitude.
#[cfg(test)]
pub fn min_eigenvalue_relative(m: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(m.clone());
    let max = eig.eigenvalues.amax();
    if max == 0.0 {
        return 0.0;
    }
    eig.eigenvalues.min() / max
}

/// Solution of `A x = lambda B x` for symmetric `A` and symmetric positive
/// semi-definite `B`.
#[derive(Debug, Clone)]
pub struct GeneralizedEigen {
    /// Non-increasing.
    pub values: DVector<f64>,
    /// One column per eigenvalue, `B`-orthonormal.
    pub vectors: DMatrix<f64>,
    /// Dimension of the retained range of `B`.
    pub rank: usize,
}

/// Reduces the pencil `(A, B)` to a standard symmetric problem by whitening
/// with the eigen-decomposition `B = U diag(mu) U^T`.
///
/// Eigenvalues of `B` at or below `rank_tol * mu_max` are dropped, so a
/// singular `B` restricts the problem to the range of `B`. With `rank_tol = 0`
/// only non-positive `mu` are dropped.
pub fn generalized_symmetric_eigen(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    rank_tol: f64,
) -> Result<GeneralizedEigen> {
    let n = a.nrows();
    if a.shape() != b.shape() || n != a.ncols() {
        return Err(Error::numeric("generalized eigenproblem needs two square matrices of one size"));
    }
    let (mu, u) = symmetric_eigen_desc(b)?;
    let mu_max = mu.max();
    if !(mu_max > 0.0) {
        return Err(Error::numeric("right-hand matrix has no positive eigenvalue"));
    }
    let cut = (rank_tol * mu_max).max(0.0);
    let rank = mu.iter().take_while(|&&m| m > cut).count();
    let whiten = DMatrix::from_fn(n, rank, |r, c| u[(r, c)] / mu[c].sqrt());
    let reduced = whiten.transpose() * a * &whiten;
    let reduced = (&reduced + reduced.transpose()) * 0.5;
    let (values, y) = symmetric_eigen_desc(&reduced)?;
    let vectors = whiten * y;
    Ok(GeneralizedEigen {
        values,
        vectors,
        rank,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sorted_descending() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 5.0, 0.0, 0.0, 0.0, 3.0]);
        let (v, vecs) = symmetric_eigen_desc(&m).unwrap();
        assert_eq!(v.as_slice(), &[5.0, 3.0, 1.0]);
        assert!((vecs[(1, 0)].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn generalized_matches_definition() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 1.0]);
        let b = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.0, 0.1, 0.0, 0.1, 0.5]);
        let g = generalized_symmetric_eigen(&a, &b, 0.0).unwrap();
        assert_eq!(g.rank, 3);
        for k in 0..3 {
            let x = g.vectors.column(k);
            let r = &a * x - (&b * x) * g.values[k];
            assert!(r.norm() < 1e-12);
            assert!(((x.transpose() * &b * x)[(0, 0)] - 1.0).abs() < 1e-12);
        }
        assert!(g.values[0] >= g.values[1] && g.values[1] >= g.values[2]);
    }

    #[test]
    fn singular_rhs_is_restricted_to_range() {
        // B = diag(1, 0): only the first coordinate survives
        let a = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]);
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let g = generalized_symmetric_eigen(&a, &b, 1e-12).unwrap();
        assert_eq!(g.rank, 1);
        assert!((g.values[0] - 3.0).abs() < 1e-12);
        assert!(generalized_symmetric_eigen(&a, &DMatrix::zeros(2, 2), 0.0).is_err());
    }

    #[test]
    fn min_eigen_relative_sign() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!((min_eigenvalue_relative(&m) + 1.0 / 3.0).abs() < 1e-12);
    }
}
