//! Leading eigenvalues of symmetric sparse Jacobians.
//!
//! The spectrum of `A` is shifted past its Gershgorin upper bound `s`, so
//! `s I - A` is positive definite and the eigenvalues of `A` closest to the
//! top of the spectrum become the dominant eigenvalues of `(s I - A)^{-1}`.
//! Lanczos with full reorthogonalization then resolves them in a few dozen
//! sparse triangular solves.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backend::{symmetric_eigen, SparseLu};
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::grid::SparseOperator;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy)]
pub struct EigenSettings {
    /// Number of leading eigenvalues to resolve.
    pub count: usize,
    /// Absolute tolerance on each resolved eigenvalue.
    pub tol: f64,
    /// Maximum Lanczos basis size.
    pub max_basis: usize,
}

impl Default for EigenSettings {
    fn default() -> Self {
        Self { count: 6, tol: 1e-9, max_basis: 160 }
    }
}

/// Leading eigenpairs, eigenvalues in descending order.
#[derive(Debug, Clone)]
pub struct LeadingEigen<T> {
    pub values: Vec<T>,
    pub vectors: Vec<Vec<T>>,
}

impl<T: Real> LeadingEigen<T> {
    /// Largest eigenvalue.
    pub fn largest(&self) -> T {
        self.values[0]
    }

    /// Number of resolved eigenvalues strictly above zero.
    pub fn unstable_count(&self) -> usize {
        self.values.iter().filter(|&&v| v > T::zero()).count()
    }
}

fn negated<T: Real>(a: &SparseOperator<T>) -> Result<SparseOperator<T>> {
    let t: Vec<_> = a.triplets().map(|(r, c, v)| (r, c, -v)).collect();
    SparseOperator::from_triplets(a.dim(), &t, a.is_symmetric())
}

fn check_symmetric<T: Real>(a: &SparseOperator<T>) -> Result<()> {
    let scale = a.triplets().fold(T::zero(), |m, (_, _, v)| m.max(v.abs()));
    if a.asymmetry() > T::lit(1e-12) * scale.max(T::one()) {
        return Err(Error::InvalidArgument("eigenvalue routines require a symmetric operator".into()));
    }
    Ok(())
}

/// The `settings.count` largest eigenvalues of symmetric `a`, with unit
/// eigenvectors.
pub fn leading_eigenpairs<T: Real>(a: &SparseOperator<T>, settings: &EigenSettings) -> Result<LeadingEigen<T>> {
    check_symmetric(a)?;
    let n = a.dim();
    if n == 0 {
        return Err(Error::InvalidArgument("empty operator".into()));
    }
    let count = settings.count.clamp(1, n);
    let shift = a.gershgorin_upper().to_f64_lossy();
    let shift = shift + shift.abs().max(1.0) * 1e-2 + 1.0;
    let lu = SparseLu::new(&negated(a)?, T::lit(shift))?;

    let max_basis = settings.max_basis.max(count + 2).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(0x1a2c_0ffe);
    let mut q: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let nq = norm(&q);
    q.iter_mut().for_each(|v| *v /= nq);

    let mut basis: Vec<Vec<f64>> = vec![q];
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut history = Vec::new();

    loop {
        let k = basis.len() - 1;
        let mut w = lu.solve_f64(&basis[k])?;
        let a_k = dot(&basis[k], &w);
        alpha.push(a_k);
        // Full reorthogonalization, applied twice.
        for _ in 0..2 {
            for qj in &basis {
                let c = dot(qj, &w);
                w.iter_mut().zip(qj).for_each(|(wi, &qi)| *wi -= c * qi);
            }
        }
        let b_k = norm(&w);
        let m = alpha.len();
        let exhausted = b_k <= 1e-14 * a_k.abs().max(1e-300) || m == max_basis;

        if m >= count && (m % 4 == 0 || exhausted) {
            let tri = DenseMatrix::from_fn(m, m, |r, c| {
                if r == c {
                    alpha[r]
                } else if r == c + 1 {
                    beta[c]
                } else if c == r + 1 {
                    beta[r]
                } else {
                    0.0
                }
            });
            let (theta, s) = symmetric_eigen(&tri)?;
            // theta ascending: the largest Ritz values map to the largest eigenvalues of A.
            let mut converged = true;
            let mut vals = Vec::with_capacity(count);
            for i in 0..count {
                let idx = m - 1 - i;
                let th = theta[idx];
                if th <= 0.0 {
                    converged = false;
                    break;
                }
                let res = b_k * s[(m - 1, idx)].abs();
                let lam = shift - 1.0 / th;
                if res / (th * th) > settings.tol * lam.abs().max(1.0) {
                    converged = false;
                }
                vals.push(lam);
            }
            if let Some(&top) = vals.first() {
                history.push(top);
            }
            if converged || exhausted {
                if !converged && !(exhausted && m == n) {
                    return Err(Error::EigenFailure {
                        message: format!("Lanczos basis of size {m} did not resolve {count} eigenvalues"),
                        history,
                    });
                }
                let mut vectors = Vec::with_capacity(count);
                for i in 0..count {
                    let idx = m - 1 - i;
                    let mut y = vec![0.0; n];
                    for (j, qj) in basis.iter().enumerate().take(m) {
                        let c = s[(j, idx)];
                        y.iter_mut().zip(qj).for_each(|(yi, &qi)| *yi += c * qi);
                    }
                    let ny = norm(&y);
                    vectors.push(y.into_iter().map(|v| T::lit(v / ny)).collect());
                }
                return Ok(LeadingEigen { values: vals.into_iter().map(T::lit).collect(), vectors });
            }
        }
        if exhausted {
            return Err(Error::EigenFailure { message: "Lanczos breakdown".into(), history });
        }
        beta.push(b_k);
        w.iter_mut().for_each(|v| *v /= b_k);
        basis.push(w);
    }
}

/// Largest eigenvalue of symmetric `a`; negative means asymptotically stable.
pub fn stability_eig<T: Real>(a: &SparseOperator<T>) -> Result<T> {
    let settings = EigenSettings { count: 1, ..EigenSettings::default() };
    Ok(leading_eigenpairs(a, &settings)?.largest())
}

/// Refines an approximate eigenpair by shifted inverse iteration.
///
/// Returns the Rayleigh quotient and the unit eigenvector.
pub fn inverse_iteration<T: Real>(a: &SparseOperator<T>, approx_value: T, start: &[T], tol: f64) -> Result<(T, Vec<T>)> {
    let n = a.dim();
    if start.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: start.len() });
    }
    let lam0 = approx_value.to_f64_lossy();
    let shift = lam0 + 1e-7 * lam0.abs().max(1.0);
    let lu = SparseLu::new(a, T::lit(-shift))?;
    let mut x: Vec<f64> = start.iter().map(|v| v.to_f64_lossy()).collect();
    let nx = norm(&x);
    if nx == 0.0 {
        return Err(Error::InvalidArgument("zero start vector".into()));
    }
    x.iter_mut().for_each(|v| *v /= nx);
    let af: Vec<(usize, usize, f64)> = a.triplets().map(|(r, c, v)| (r, c, v.to_f64_lossy())).collect();
    let apply = |x: &[f64]| {
        let mut y = vec![0.0; n];
        for &(r, c, v) in &af {
            y[r] += v * x[c];
        }
        y
    };
    let mut history = Vec::new();
    for _ in 0..50 {
        let mut y = lu.solve_f64(&x)?;
        let ny = norm(&y);
        y.iter_mut().for_each(|v| *v /= ny);
        x = y;
        let ax = apply(&x);
        let lam = dot(&x, &ax);
        history.push(lam);
        let res = ax.iter().zip(&x).map(|(p, q)| (p - lam * q).powi(2)).sum::<f64>().sqrt();
        if res <= tol * lam.abs().max(1.0) {
            return Ok((T::lit(lam), x.into_iter().map(T::lit).collect()));
        }
    }
    Err(Error::EigenFailure { message: "inverse iteration did not converge".into(), history })
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}
