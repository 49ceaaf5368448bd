//! Matrix-free Krylov solvers for nonsymmetric systems `A x = b`.
//!
//! Convergence is measured by the relative residual `|b - A x| / |b|` in the
//! Euclidean norm. The residual reported on return is always recomputed from
//! the iterate, not taken from the recurrence.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{dot, norm2, Real};

pub trait LinearOperator<T> {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[T], y: &mut [T]);
    /// `y = A^T x`; only QMR needs it.
    fn apply_transpose(&self, x: &[T], y: &mut [T]);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KrylovMethod {
    Bicgstab,
    Gmres,
    Qmr,
}

impl std::fmt::Display for KrylovMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            KrylovMethod::Bicgstab => "bicgstab",
            KrylovMethod::Gmres => "gmres",
            KrylovMethod::Qmr => "qmr",
        })
    }
}

impl std::str::FromStr for KrylovMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bicgstab" => Ok(Self::Bicgstab),
            "gmres" => Ok(Self::Gmres),
            "qmr" => Ok(Self::Qmr),
            other => Err(Error::InvalidArgument(format!("unknown solver '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct KrylovSettings {
    pub tol: f64,
    pub maxit: usize,
    /// GMRES restart length; 0 means no restart (basis grows up to `maxit`).
    pub restart: usize,
}

#[derive(Debug, Clone)]
pub struct KrylovOutcome<T> {
    pub x: Vec<T>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    /// Relative residual after each iteration (recurrence estimate).
    pub history: Vec<f64>,
}

fn true_residual<T: Real>(op: &dyn LinearOperator<T>, b: &[T], x: &[T], r: &mut [T]) -> f64 {
    op.apply(x, r);
    for (ri, &bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    norm2(r).to_f64_lossy()
}

fn prepare<T: Real>(op: &dyn LinearOperator<T>, b: &[T], x0: Option<&[T]>) -> Result<Vec<T>> {
    let n = op.dim();
    if b.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: b.len() });
    }
    match x0 {
        Some(x) if x.len() != n => Err(Error::DimensionMismatch { expected: n, got: x.len() }),
        Some(x) => Ok(x.to_vec()),
        None => Ok(vec![T::zero(); n]),
    }
}

pub fn solve<T: Real>(
    method: KrylovMethod,
    op: &dyn LinearOperator<T>,
    b: &[T],
    x0: Option<&[T]>,
    settings: &KrylovSettings,
) -> Result<KrylovOutcome<T>> {
    match method {
        KrylovMethod::Bicgstab => bicgstab(op, b, x0, settings),
        KrylovMethod::Gmres => gmres(op, b, x0, settings),
        KrylovMethod::Qmr => qmr(op, b, x0, settings),
    }
}

/// BiCGStab (van der Vorst). One iteration costs two operator applications.
pub fn bicgstab<T: Real>(
    op: &dyn LinearOperator<T>,
    b: &[T],
    x0: Option<&[T]>,
    settings: &KrylovSettings,
) -> Result<KrylovOutcome<T>> {
    let n = op.dim();
    let mut x = prepare(op, b, x0)?;
    let bnorm = norm2(b).to_f64_lossy();
    if bnorm == 0.0 {
        return Ok(KrylovOutcome { x: vec![T::zero(); n], iterations: 0, residual: 0.0, converged: true, history: vec![] });
    }
    let mut r = vec![T::zero(); n];
    let mut res = true_residual(op, b, &x, &mut r) / bnorm;
    let mut history = Vec::new();
    let mut best = (res, x.clone());
    if res <= settings.tol {
        return Ok(KrylovOutcome { x, iterations: 0, residual: res, converged: true, history });
    }

    let mut iterations = 0;
    let mut r_hat = r.clone();
    let mut p = vec![T::zero(); n];
    let mut v = vec![T::zero(); n];
    let mut s = vec![T::zero(); n];
    let mut t = vec![T::zero(); n];
    let (mut rho, mut alpha, mut omega) = (T::one(), T::one(), T::one());
    let mut fresh = true;

    while iterations < settings.maxit {
        iterations += 1;
        let rho_new = dot(&r_hat, &r);
        if rho_new == T::zero() || !rho_new.is_finite() {
            // Breakdown: restart from the current iterate with a new shadow.
            true_residual(op, b, &x, &mut r);
            r_hat.copy_from_slice(&r);
            fresh = true;
            if dot(&r_hat, &r) == T::zero() {
                break;
            }
            continue;
        }
        if fresh {
            p.copy_from_slice(&r);
            fresh = false;
        } else {
            let beta = (rho_new / rho) * (alpha / omega);
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
        }
        op.apply(&p, &mut v);
        let rv = dot(&r_hat, &v);
        if rv == T::zero() {
            fresh = true;
            r_hat.copy_from_slice(&r);
            continue;
        }
        alpha = rho_new / rv;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        let s_res = norm2(&s).to_f64_lossy() / bnorm;
        if s_res <= settings.tol {
            for i in 0..n {
                x[i] += alpha * p[i];
            }
            res = true_residual(op, b, &x, &mut r) / bnorm;
            history.push(res);
            if res <= settings.tol {
                return Ok(KrylovOutcome { x, iterations, residual: res, converged: true, history });
            }
            r_hat.copy_from_slice(&r);
            fresh = true;
            rho = rho_new;
            continue;
        }
        op.apply(&s, &mut t);
        let tt = dot(&t, &t);
        omega = if tt == T::zero() { T::zero() } else { dot(&t, &s) / tt };
        for i in 0..n {
            x[i] += alpha * p[i] + omega * s[i];
            r[i] = s[i] - omega * t[i];
        }
        rho = rho_new;
        res = norm2(&r).to_f64_lossy() / bnorm;
        history.push(res);
        if res < best.0 {
            best.0 = res;
            best.1.copy_from_slice(&x);
        }
        if res <= settings.tol {
            res = true_residual(op, b, &x, &mut r) / bnorm;
            if res <= settings.tol {
                return Ok(KrylovOutcome { x, iterations, residual: res, converged: true, history });
            }
            r_hat.copy_from_slice(&r);
            fresh = true;
        }
        if omega == T::zero() {
            r_hat.copy_from_slice(&r);
            fresh = true;
        }
    }
    let final_res = true_residual(op, b, &x, &mut r) / bnorm;
    let (residual, x) = if final_res <= best.0 { (final_res, x) } else { (true_residual(op, b, &best.1, &mut r) / bnorm, best.1) };
    Ok(KrylovOutcome { x, iterations, residual, converged: residual <= settings.tol, history })
}

/// GMRES with optional restarts, modified Gram-Schmidt Arnoldi and Givens
/// rotations. One iteration is one Arnoldi step.
pub fn gmres<T: Real>(
    op: &dyn LinearOperator<T>,
    b: &[T],
    x0: Option<&[T]>,
    settings: &KrylovSettings,
) -> Result<KrylovOutcome<T>> {
    let n = op.dim();
    let mut x = prepare(op, b, x0)?;
    let bnorm = norm2(b).to_f64_lossy();
    if bnorm == 0.0 {
        return Ok(KrylovOutcome { x: vec![T::zero(); n], iterations: 0, residual: 0.0, converged: true, history: vec![] });
    }
    let m = if settings.restart == 0 { settings.maxit } else { settings.restart.min(settings.maxit) };
    let mut r = vec![T::zero(); n];
    let mut res = true_residual(op, b, &x, &mut r) / bnorm;
    let mut history = Vec::new();
    let mut iterations = 0;
    if res <= settings.tol {
        return Ok(KrylovOutcome { x, iterations, residual: res, converged: true, history });
    }
    // The basis is allocated lazily so that an unrestarted run only pays for
    // the vectors it uses.
    let mut basis: Vec<Vec<T>> = Vec::new();
    let mut w = vec![T::zero(); n];

    while iterations < settings.maxit {
        let beta = norm2(&r);
        if basis.is_empty() {
            basis.push(vec![T::zero(); n]);
        }
        for (d, &s) in basis[0].iter_mut().zip(&r) {
            *d = s / beta;
        }
        // Hessenberg matrix column-wise, rotations and rhs in f64.
        let mut h: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut cs: Vec<(f64, f64)> = Vec::with_capacity(m);
        let mut g = vec![0.0; m + 1];
        g[0] = beta.to_f64_lossy();
        let mut k = 0;
        while k < m && iterations < settings.maxit {
            iterations += 1;
            op.apply(&basis[k], &mut w);
            let mut hk = vec![0.0; k + 2];
            for (i, q) in basis.iter().enumerate().take(k + 1) {
                let c = dot(q, &w);
                hk[i] = c.to_f64_lossy();
                for (wi, &qi) in w.iter_mut().zip(q) {
                    *wi -= c * qi;
                }
            }
            let wn = norm2(&w);
            hk[k + 1] = wn.to_f64_lossy();
            for (i, &(c, s)) in cs.iter().enumerate() {
                let (a, bb) = (hk[i], hk[i + 1]);
                hk[i] = c * a + s * bb;
                hk[i + 1] = -s * a + c * bb;
            }
            let (a, bb) = (hk[k], hk[k + 1]);
            let rho = a.hypot(bb);
            let (c, s) = if rho == 0.0 { (1.0, 0.0) } else { (a / rho, bb / rho) };
            hk[k] = rho;
            hk[k + 1] = 0.0;
            g[k + 1] = -s * g[k];
            g[k] *= c;
            cs.push((c, s));
            h.push(hk);
            k += 1;
            let est = g[k].abs() / bnorm;
            history.push(est);
            if est <= settings.tol || wn == T::zero() {
                break;
            }
            if basis.len() <= k {
                basis.push(vec![T::zero(); n]);
            }
            for (d, &wi) in basis[k].iter_mut().zip(&w) {
                *d = wi / wn;
            }
        }
        // Back substitution for the k x k upper-triangular system.
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for (j, yj) in y.iter().enumerate().skip(i + 1) {
                s -= h[j][i] * yj;
            }
            y[i] = s / h[i][i];
        }
        for (q, &yi) in basis.iter().zip(&y) {
            let c = T::lit(yi);
            for (xi, &qi) in x.iter_mut().zip(q) {
                *xi += c * qi;
            }
        }
        res = true_residual(op, b, &x, &mut r) / bnorm;
        if res <= settings.tol {
            return Ok(KrylovOutcome { x, iterations, residual: res, converged: true, history });
        }
    }
    Ok(KrylovOutcome { x, iterations, residual: res, converged: false, history })
}

/// Unpreconditioned QMR without look-ahead. One iteration applies both the
/// operator and its transpose.
pub fn qmr<T: Real>(
    op: &dyn LinearOperator<T>,
    b: &[T],
    x0: Option<&[T]>,
    settings: &KrylovSettings,
) -> Result<KrylovOutcome<T>> {
    let n = op.dim();
    let mut x = prepare(op, b, x0)?;
    let bnorm = norm2(b).to_f64_lossy();
    if bnorm == 0.0 {
        return Ok(KrylovOutcome { x: vec![T::zero(); n], iterations: 0, residual: 0.0, converged: true, history: vec![] });
    }
    let mut r = vec![T::zero(); n];
    let mut res = true_residual(op, b, &x, &mut r) / bnorm;
    let mut history = Vec::new();
    if res <= settings.tol {
        return Ok(KrylovOutcome { x, iterations: 0, residual: res, converged: true, history });
    }

    let mut v_t = r.clone();
    let mut w_t = r.clone();
    let mut rho = norm2(&v_t);
    let mut xi = norm2(&w_t);
    let (mut gamma, mut eta, mut theta) = (T::one(), -T::one(), T::zero());
    let mut eps = T::one();
    let mut v = vec![T::zero(); n];
    let mut w = vec![T::zero(); n];
    let mut p = vec![T::zero(); n];
    let mut q = vec![T::zero(); n];
    let mut p_t = vec![T::zero(); n];
    let mut d = vec![T::zero(); n];
    let mut s = vec![T::zero(); n];
    let mut iterations = 0;

    while iterations < settings.maxit {
        if rho == T::zero() || xi == T::zero() {
            break;
        }
        iterations += 1;
        for i in 0..n {
            v[i] = v_t[i] / rho;
            w[i] = w_t[i] / xi;
        }
        let delta = dot(&w, &v);
        if delta == T::zero() {
            break;
        }
        if iterations == 1 {
            p.copy_from_slice(&v);
            q.copy_from_slice(&w);
        } else {
            let cp = xi * delta / eps;
            let cq = rho * delta / eps;
            for i in 0..n {
                p[i] = v[i] - cp * p[i];
                q[i] = w[i] - cq * q[i];
            }
        }
        op.apply(&p, &mut p_t);
        eps = dot(&q, &p_t);
        if eps == T::zero() {
            break;
        }
        let beta = eps / delta;
        if beta == T::zero() {
            break;
        }
        for i in 0..n {
            v_t[i] = p_t[i] - beta * v[i];
        }
        let rho_prev = rho;
        rho = norm2(&v_t);
        op.apply_transpose(&q, &mut w_t);
        for i in 0..n {
            w_t[i] -= beta * w[i];
        }
        xi = norm2(&w_t);
        let theta_prev = theta;
        let gamma_prev = gamma;
        theta = rho / (gamma_prev * beta.abs());
        gamma = T::one() / (T::one() + theta * theta).sqrt();
        if gamma == T::zero() {
            break;
        }
        eta = -eta * rho_prev * gamma * gamma / (beta * gamma_prev * gamma_prev);
        if iterations == 1 {
            for i in 0..n {
                d[i] = eta * p[i];
                s[i] = eta * p_t[i];
            }
        } else {
            let c = (theta_prev * gamma) * (theta_prev * gamma);
            for i in 0..n {
                d[i] = eta * p[i] + c * d[i];
                s[i] = eta * p_t[i] + c * s[i];
            }
        }
        for i in 0..n {
            x[i] += d[i];
            r[i] -= s[i];
        }
        res = norm2(&r).to_f64_lossy() / bnorm;
        history.push(res);
        if res <= settings.tol {
            let mut tmp = vec![T::zero(); n];
            res = true_residual(op, b, &x, &mut tmp) / bnorm;
            if res <= settings.tol {
                return Ok(KrylovOutcome { x, iterations, residual: res, converged: true, history });
            }
        }
    }
    let mut tmp = vec![T::zero(); n];
    res = true_residual(op, b, &x, &mut tmp) / bnorm;
    Ok(KrylovOutcome { x, iterations, residual: res, converged: res <= settings.tol, history })
}

/// Dense operator, mostly for tests.
pub struct DenseOperator<'a, T> {
    pub matrix: &'a crate::dense::DenseMatrix<T>,
}

impl<T: Real> LinearOperator<T> for DenseOperator<'_, T> {
    fn dim(&self) -> usize {
        self.matrix.rows()
    }

    fn apply(&self, x: &[T], y: &mut [T]) {
        y.iter_mut().for_each(|v| *v = T::zero());
        for (c, &xc) in x.iter().enumerate() {
            for (yi, &a) in y.iter_mut().zip(self.matrix.col(c)) {
                *yi += a * xc;
            }
        }
    }

    fn apply_transpose(&self, x: &[T], y: &mut [T]) {
        for (c, yc) in y.iter_mut().enumerate() {
            *yc = dot(self.matrix.col(c), x);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::DenseMatrix;
    use rand::{Rng, SeedableRng};

    fn random_system(n: usize, seed: u64) -> (DenseMatrix<f64>, Vec<f64>, Vec<f64>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let noise: Vec<f64> = (0..n * n).map(|_| rng.random_range(-0.5..0.5) / n as f64).collect();
        let a = DenseMatrix::from_fn(n, n, |r, c| {
            let v = noise[r + c * n];
            if r == c { 2.0 + r as f64 * 0.1 + v } else { v }
        });
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut b = vec![0.0; n];
        DenseOperator { matrix: &a }.apply(&x, &mut b);
        (a, x, b)
    }

    #[test]
    fn all_methods_solve_nonsymmetric_system() {
        let (a, x, b) = random_system(40, 3);
        let op = DenseOperator { matrix: &a };
        let settings = KrylovSettings { tol: 1e-10, maxit: 200, restart: 10 };
        for m in [KrylovMethod::Bicgstab, KrylovMethod::Gmres, KrylovMethod::Qmr] {
            let out = solve(m, &op, &b, None, &settings).unwrap();
            assert!(out.converged, "{m} did not converge: {}", out.residual);
            let err = out.x.iter().zip(&x).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            assert!(err < 1e-8, "{m}: error {err}");
        }
    }

    #[test]
    fn unrestarted_gmres_terminates_in_n_steps() {
        let (a, _, b) = random_system(12, 5);
        let op = DenseOperator { matrix: &a };
        let out = gmres(&op, &b, None, &KrylovSettings { tol: 1e-12, maxit: 200, restart: 0 }).unwrap();
        assert!(out.converged);
        assert!(out.iterations <= 12);
    }

    #[test]
    fn exact_warm_start_needs_no_iterations() {
        let (a, x, b) = random_system(10, 7);
        let op = DenseOperator { matrix: &a };
        let out = bicgstab(&op, &b, Some(&x), &KrylovSettings { tol: 1e-8, maxit: 10, restart: 0 }).unwrap();
        assert_eq!(out.iterations, 0);
    }

    #[test]
    fn zero_rhs() {
        let (a, _, _) = random_system(5, 1);
        let op = DenseOperator { matrix: &a };
        let out = qmr(&op, &[0.0; 5], None, &KrylovSettings { tol: 1e-8, maxit: 10, restart: 0 }).unwrap();
        assert!(out.converged);
        assert!(out.x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn reports_non_convergence() {
        let (a, _, b) = random_system(30, 9);
        let op = DenseOperator { matrix: &a };
        let out = gmres(&op, &b, None, &KrylovSettings { tol: 1e-14, maxit: 2, restart: 0 }).unwrap();
        assert!(!out.converged);
        assert_eq!(out.iterations, 2);
    }

    #[test]
    fn method_names_round_trip() {
        for m in [KrylovMethod::Bicgstab, KrylovMethod::Gmres, KrylovMethod::Qmr] {
            assert_eq!(m.to_string().parse::<KrylovMethod>().unwrap(), m);
        }
        assert!("cg".parse::<KrylovMethod>().is_err());
    }
}
