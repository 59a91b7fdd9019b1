//! Thin sparse linear-algebra layer over `faer`: triplet assembly, sparse LU
//! with residual reporting, and an inverse-iteration eigenvalue estimator.
//!
//! Parallelism is pinned to sequential once per process so that repeated
//! factorisations of identical matrices are bit-for-bit deterministic.

use faer::sparse::{SparseColMat, Triplet};
use std::sync::Once;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SparseError {
    #[error("linear solver breakdown: {0}")]
    Breakdown(String),
    #[error("eigenvalue iteration failed to converge (last shift {0:.3e})")]
    EigenFailure(f64),
}

fn pin_sequential() {
    static ONCE: Once = Once::new();
    ONCE.call_once(|| {
        faer::set_global_parallelism(faer::Par::Seq);
    });
}

/// Square or rectangular sparse matrix built from (row, col, value) triplets;
/// duplicate entries accumulate.
pub struct SparseMatrix {
    inner: SparseColMat<usize, f64>,
}

impl SparseMatrix {
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        entries: &[(usize, usize, f64)],
    ) -> Result<Self, SparseError> {
        pin_sequential();
        let triplets: Vec<Triplet<usize, usize, f64>> =
            entries.iter().map(|&(i, j, v)| Triplet::new(i, j, v)).collect();
        let inner = SparseColMat::try_new_from_triplets(nrows, ncols, &triplets)
            .map_err(|e| SparseError::Breakdown(format!("triplet assembly: {e:?}")))?;
        Ok(SparseMatrix { inner })
    }

    pub fn nrows(&self) -> usize {
        self.inner.nrows()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.inner.ncols());
        let xm = faer::MatRef::from_column_major_slice(x, x.len(), 1);
        let y = self.inner.as_ref() * xm;
        (0..y.nrows()).map(|i| y[(i, 0)]).collect()
    }

    pub fn lu(&self) -> Result<SparseLu, SparseError> {
        pin_sequential();
        let lu = self
            .inner
            .sp_lu()
            .map_err(|e| SparseError::Breakdown(format!("sparse LU: {e:?}")))?;
        Ok(SparseLu { lu })
    }
}

pub struct SparseLu {
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
}

impl SparseLu {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        use faer::linalg::solvers::Solve;
        let b = faer::MatRef::from_column_major_slice(rhs, rhs.len(), 1);
        let x = self.lu.solve(b);
        (0..x.nrows()).map(|i| x[(i, 0)]).collect()
    }
}

/// Relative residual ‖Ax − b‖₂ / max(‖b‖₂, floor).
pub fn relative_residual(a: &SparseMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.matvec(x);
    let num: f64 = ax.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|q| q * q).sum::<f64>().sqrt();
    num / den.max(1e-30)
}

/// Smallest eigenvalue of K v = λ M v on the span of the given matrices, by
/// inverse iteration with a deterministic start vector. K must be invertible.
pub fn smallest_generalized_eigenvalue(
    k: &SparseMatrix,
    m: &SparseMatrix,
    tol: f64,
    max_iter: usize,
) -> Result<f64, SparseError> {
    let n = k.nrows();
    let lu = k.lu()?;
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + (i % 7) as f64 * 0.1).collect();
    let mut lambda_old = f64::INFINITY;
    for _ in 0..max_iter {
        let mv = m.matvec(&v);
        let w = lu.solve(&mv);
        // Rayleigh quotient λ = (wᵀ K w)/(wᵀ M w) with K w = M v
        let mw = m.matvec(&w);
        let num: f64 = w.iter().zip(&mv).map(|(a, b)| a * b).sum();
        let den: f64 = w.iter().zip(&mw).map(|(a, b)| a * b).sum();
        let lambda = num / den;
        let norm = den.sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(SparseError::EigenFailure(lambda));
        }
        v = w.iter().map(|a| a / norm).collect();
        if (lambda - lambda_old).abs() <= tol * lambda.abs() {
            return Ok(lambda);
        }
        lambda_old = lambda;
    }
    Err(SparseError::EigenFailure(lambda_old))
}
