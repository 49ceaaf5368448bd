//! Diagnostics derived from a stationary covariance: norms, entry bounds,
//! confidence-ellipsoid membership and power-law fits of norm blow-up.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backend::DenseCholesky;
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::grid::Field;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovNorms<T> {
    /// `max |V_ij|`
    pub max_norm: T,
    pub diag_l1: T,
    pub diag_l2: T,
    pub diag_linf: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    MaxNorm,
    DiagL1,
    DiagL2,
    DiagLinf,
}

impl<T: Copy> CovNorms<T> {
    pub fn get(&self, kind: NormKind) -> T {
        match kind {
            NormKind::MaxNorm => self.max_norm,
            NormKind::DiagL1 => self.diag_l1,
            NormKind::DiagL2 => self.diag_l2,
            NormKind::DiagLinf => self.diag_linf,
        }
    }
}

pub fn cov_norms<T: Real>(v: &DenseMatrix<T>) -> CovNorms<T> {
    let d = v.diagonal();
    CovNorms {
        max_norm: v.max_abs(),
        diag_l1: d.iter().map(|x| x.abs()).sum(),
        diag_l2: crate::scalar::norm2(&d),
        diag_linf: crate::scalar::norm_inf(&d),
    }
}

/// Extreme entries of `V`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovBounds<T> {
    pub c_min: T,
    pub c_max: T,
}

impl<T: Real> CovBounds<T> {
    pub fn from_covariance(v: &DenseMatrix<T>) -> Self {
        Self { c_min: v.min_entry(), c_max: v.max_entry() }
    }

    pub fn unbounded() -> Self {
        Self { c_min: T::neg_infinity(), c_max: T::infinity() }
    }
}

/// Cholesky factor of `V`, reusable across membership queries.
pub struct CovarianceFactor {
    chol: DenseCholesky,
    dim: usize,
}

impl CovarianceFactor {
    pub fn new<T: Real>(v: &DenseMatrix<T>) -> Result<Self> {
        if !v.is_square() {
            return Err(Error::DimensionMismatch { expected: v.rows(), got: v.cols() });
        }
        Ok(Self { chol: DenseCholesky::new(v)?, dim: v.rows() })
    }

    /// `d^T V^{-1} d`
    pub fn quadratic_form<T: Real>(&self, d: &[T]) -> Result<f64> {
        if d.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: d.len() });
        }
        let df: Vec<f64> = d.iter().map(|v| v.to_f64_lossy()).collect();
        let x = self.chol.solve(&df);
        Ok(df.iter().zip(&x).map(|(a, b)| a * b).sum())
    }
}

/// `(p - p*)^T V^{-1} (p - p*) <= r^2`, via one Cholesky solve.
pub fn ellipsoid_membership<T: Real>(v: &DenseMatrix<T>, p: &Field<T>, p_star: &Field<T>, r: T) -> Result<bool> {
    if p.len() != p_star.len() {
        return Err(Error::DimensionMismatch { expected: p_star.len(), got: p.len() });
    }
    let d: Vec<T> = p.values.iter().zip(&p_star.values).map(|(&a, &b)| a - b).collect();
    let q = CovarianceFactor::new(v)?.quadratic_form(&d)?;
    let r = r.to_f64_lossy();
    // Relative slack for rounding in the solve, so boundary points count as inside.
    Ok(q <= r * r * (1.0 + 64.0 * f64::EPSILON))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub mu_crit: f64,
    pub alpha: f64,
    pub kappa: f64,
    pub window: (f64, f64),
    pub r_squared: f64,
    pub n_points: usize,
}

impl ScalingFit {
    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Least-squares fit of `norm = kappa |mu_c - mu|^(-alpha)` in log-log
/// coordinates.
pub fn fit_scaling(points: &[(f64, f64)], mu_crit: f64) -> Result<ScalingFit> {
    if points.len() < 3 {
        return Err(Error::InvalidArgument(format!("scaling fit needs at least 3 points, got {}", points.len())));
    }
    if points.iter().any(|&(_, y)| !(y > 0.0)) {
        return Err(Error::InvalidArgument("scaling fit needs positive norm values".into()));
    }
    let below = points.iter().all(|&(m, _)| m < mu_crit);
    let above = points.iter().all(|&(m, _)| m > mu_crit);
    if !(below || above) {
        return Err(Error::InvalidArgument("all points must lie strictly on one side of mu_crit".into()));
    }
    let xs: Vec<f64> = points.iter().map(|&(m, _)| (mu_crit - m).abs().ln()).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, y)| y.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("scaling fit needs distinct parameter values".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    let lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    Ok(ScalingFit { mu_crit, alpha: -slope, kappa: intercept.exp(), window: (lo, hi), r_squared, n_points: points.len() })
}

/// Points with `mu` in `[lo, hi]`, minus the `exclude_nearest` closest to
/// `mu_crit`.
pub fn select_window(points: &[(f64, f64)], mu_crit: f64, lo: f64, hi: f64, exclude_nearest: usize) -> Vec<(f64, f64)> {
    let mut sel: Vec<(f64, f64)> = points.iter().copied().filter(|&(m, _)| m >= lo && m <= hi && m != mu_crit).collect();
    sel.sort_by(|a, b| (a.0 - mu_crit).abs().partial_cmp(&(b.0 - mu_crit).abs()).unwrap());
    let mut kept: Vec<(f64, f64)> = sel.into_iter().skip(exclude_nearest).collect();
    kept.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    kept
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norms_of_diagonal() {
        let v = DenseMatrix::<f64>::from_diagonal(&[0.5, 1.0 / 6.0]);
        let n = cov_norms(&v);
        assert_eq!(n.max_norm, 0.5);
        assert!((n.diag_l1 - 2.0 / 3.0).abs() < 1e-15);
        assert!((n.diag_l2 - (0.25f64 + 1.0 / 36.0).sqrt()).abs() < 1e-15);
        assert_eq!(n.diag_linf, 0.5);
        let z = cov_norms(&DenseMatrix::<f64>::zeros(3, 3));
        assert_eq!(z, CovNorms { max_norm: 0.0, diag_l1: 0.0, diag_l2: 0.0, diag_linf: 0.0 });
    }

    #[test]
    fn membership_cases() {
        let f = |v: Vec<f64>| Field::from(v);
        let id = DenseMatrix::identity(2);
        let zero = f(vec![0.0, 0.0]);
        assert!(ellipsoid_membership(&id, &zero, &zero, 0.0).unwrap());
        let p = f(vec![2.0f64.sqrt(), 2.0f64.sqrt()]);
        assert!(!ellipsoid_membership(&id, &p, &zero, 1.0).unwrap());
        assert!(ellipsoid_membership(&id, &p, &zero, 2.0).unwrap());
        let v = DenseMatrix::from_diagonal(&[4.0, 1.0]);
        assert!(ellipsoid_membership(&v, &f(vec![2.0, 0.0]), &zero, 1.0).unwrap());
        let bad = DenseMatrix::from_diagonal(&[1.0, -1.0]);
        assert!(matches!(ellipsoid_membership(&bad, &zero, &zero, 1.0), Err(Error::Conditioning(_))));
    }

    #[test]
    fn exact_power_law() {
        let pts: Vec<(f64, f64)> = (0..10).map(|i| {
            let mu = 0.5 + 0.1 * i as f64;
            (mu, 2.0 / (1.5 - mu).powf(0.5))
        }).collect();
        let fit = fit_scaling(&pts, 1.5).unwrap();
        assert!((fit.alpha - 0.5).abs() < 1e-12);
        assert!((fit.kappa - 2.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_rejects_bad_input() {
        assert!(fit_scaling(&[(0.1, 1.0), (0.2, 2.0)], 1.0).is_err());
        assert!(fit_scaling(&[(0.1, 1.0), (0.2, -2.0), (0.3, 1.0)], 1.0).is_err());
        assert!(fit_scaling(&[(0.1, 1.0), (1.2, 2.0), (0.3, 1.0)], 1.0).is_err());
    }

    #[test]
    fn window_excludes_nearest() {
        let pts: Vec<(f64, f64)> = (0..6).map(|i| (i as f64 * 0.1, 1.0)).collect();
        let w = select_window(&pts, 0.55, 0.0, 0.5, 2);
        assert_eq!(w.iter().map(|p| p.0).collect::<Vec<_>>(), vec![0.0, 0.1, 0.2, 0.30000000000000004]);
    }
}
