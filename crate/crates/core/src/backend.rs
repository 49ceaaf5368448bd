//! Thin `f64` adapter over `faer` for sparse LU, dense Cholesky/LU, symmetric
//! eigendecomposition and matrix products.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::grid::SparseOperator;
use crate::scalar::Real;

/// Sparse LU factorization of `A + shift * I`.
pub struct SparseLu {
    dim: usize,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
}

impl SparseLu {
    pub fn new<T: Real>(a: &SparseOperator<T>, shift: T) -> Result<Self> {
        let n = a.dim();
        let s = shift.to_f64_lossy();
        let mut t: Vec<Triplet<usize, usize, f64>> =
            a.triplets().map(|(r, c, v)| Triplet::new(r, c, v.to_f64_lossy())).collect();
        if s != 0.0 {
            t.extend((0..n).map(|i| Triplet::new(i, i, s)));
        }
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &t)
            .map_err(|e| Error::LinearSolve(format!("{e:?}")))?;
        let lu = mat.sp_lu().map_err(|e| Error::LinearSolve(format!("{e:?}")))?;
        Ok(Self { dim: n, lu })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Solves in `f64`, returns `f64`.
    pub fn solve_f64(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: rhs.len() });
        }
        let mut b = Mat::<f64>::from_fn(self.dim, 1, |i, _| rhs[i]);
        self.lu.solve_in_place(b.as_mut());
        let x: Vec<f64> = (0..self.dim).map(|i| b[(i, 0)]).collect();
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::LinearSolve("singular factorization produced non-finite values".into()));
        }
        Ok(x)
    }

    pub fn solve<T: Real>(&self, rhs: &[T]) -> Result<Vec<T>> {
        let b: Vec<f64> = rhs.iter().map(|v| v.to_f64_lossy()).collect();
        Ok(self.solve_f64(&b)?.into_iter().map(T::lit).collect())
    }
}

fn to_faer<T: Real>(m: &DenseMatrix<T>) -> Mat<f64> {
    Mat::from_fn(m.rows(), m.cols(), |r, c| m[(r, c)].to_f64_lossy())
}

fn from_faer(m: faer::MatRef<'_, f64>) -> DenseMatrix<f64> {
    DenseMatrix::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)])
}

/// Eigenpairs of a symmetric matrix, eigenvalues ascending, eigenvectors as
/// orthonormal columns.
pub fn symmetric_eigen<T: Real>(m: &DenseMatrix<T>) -> Result<(Vec<f64>, DenseMatrix<f64>)> {
    let a = to_faer(m);
    let e = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::EigenFailure { message: format!("{e:?}"), history: vec![] })?;
    let s = e.S().column_vector();
    let vals = (0..m.rows()).map(|i| s[i]).collect();
    Ok((vals, from_faer(e.U())))
}

/// Largest real part over the eigenvalues of a general square matrix.
pub fn max_real_eigenvalue<T: Real>(m: &DenseMatrix<T>) -> Result<f64> {
    let vals = to_faer(m)
        .eigenvalues()
        .map_err(|e| Error::EigenFailure { message: format!("{e:?}"), history: vec![] })?;
    Ok(vals.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
}

/// `W * X * W^T` for square `W`, `X`.
pub fn congruence(w: &DenseMatrix<f64>, x: &DenseMatrix<f64>) -> DenseMatrix<f64> {
    let wf = to_faer(w);
    let xf = to_faer(x);
    let tmp = &wf * &xf;
    let out = &tmp * wf.transpose();
    from_faer(out.as_ref())
}

/// `W^T * B`.
pub fn transpose_mul(w: &DenseMatrix<f64>, b: &DenseMatrix<f64>) -> DenseMatrix<f64> {
    let out = to_faer(w).transpose() * to_faer(b);
    from_faer(out.as_ref())
}

/// Cholesky factor of a symmetric positive definite matrix.
pub struct DenseCholesky {
    llt: faer::linalg::solvers::Llt<f64>,
    dim: usize,
}

impl DenseCholesky {
    pub fn new<T: Real>(m: &DenseMatrix<T>) -> Result<Self> {
        let llt = to_faer(m)
            .llt(Side::Lower)
            .map_err(|e| Error::Conditioning(format!("Cholesky factorization failed: {e:?}")))?;
        Ok(Self { llt, dim: m.rows() })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut b = Mat::<f64>::from_fn(self.dim, 1, |i, _| rhs[i]);
        self.llt.solve_in_place(b.as_mut());
        (0..self.dim).map(|i| b[(i, 0)]).collect()
    }
}

/// Solves a dense square system by LU with partial pivoting.
pub fn dense_solve<T: Real>(m: &DenseMatrix<T>, rhs: &[T]) -> Result<Vec<T>> {
    if !m.is_square() || rhs.len() != m.rows() {
        return Err(Error::DimensionMismatch { expected: m.rows(), got: rhs.len() });
    }
    let lu = to_faer(m).partial_piv_lu();
    let mut b = Mat::<f64>::from_fn(m.rows(), 1, |i, _| rhs[i].to_f64_lossy());
    lu.solve_in_place(b.as_mut());
    let x: Vec<T> = (0..m.rows()).map(|i| T::lit(b[(i, 0)])).collect();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::LinearSolve("dense system is singular".into()));
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_lu_solves() {
        let a = SparseOperator::<f64>::from_triplets(
            3,
            &[(0, 0, 4.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0), (2, 2, 2.0)],
            true,
        )
        .unwrap();
        let lu = SparseLu::new(&a, 1.0).unwrap();
        let x: Vec<f64> = lu.solve(&[6.0, 5.0, 3.0]).unwrap();
        // (A + I) x = b with x = (1, 1, 1)
        for v in x {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn eigen_and_congruence_reconstruct() {
        let m = DenseMatrix::from_fn(4, 4, |r, c| if r == c { -(r as f64) - 2.0 } else { 0.3 / (1.0 + (r + c) as f64) });
        let (vals, w) = symmetric_eigen(&m).unwrap();
        assert!(vals.windows(2).all(|p| p[0] <= p[1]));
        let back = congruence(&w, &DenseMatrix::from_diagonal(&vals));
        assert!(back.max_abs_diff(&m) < 1e-12);
    }

    #[test]
    fn general_eigenvalues_of_rotation_block() {
        // eigenvalues -1 +- 2i and -3
        let m = DenseMatrix::from_col_major(3, 3, vec![-1.0, -2.0, 0.0, 2.0, -1.0, 0.0, 0.0, 0.0, -3.0]).unwrap();
        assert!((max_real_eigenvalue(&m).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let m = DenseMatrix::from_diagonal(&[1.0, -1.0]);
        assert!(DenseCholesky::new(&m).is_err());
    }
}
