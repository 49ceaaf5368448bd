//! Stationary covariance of the linearized dynamics `dP = A P dt + B dbeta`.
//!
//! `V` solves `A V + V A^T + B B^T = 0`. The map `L(V) = A V + V A^T` acts on
//! `vec(V)` as `I (x) A + A (x) I`; it is applied matrix-free with two
//! sparse-dense products, and the Krylov solvers work directly on the
//! column-major storage of `V`.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::backend::{congruence, dense_solve, max_real_eigenvalue, symmetric_eigen, transpose_mul};
use crate::dense::DenseMatrix;
use crate::detcont::{Branch, PointKind, SteadyState};
use crate::eigen::stability_eig;
use crate::error::{Error, Result};
use crate::grid::{Grid2D, SparseOperator};
use crate::krylov::{self, KrylovMethod, KrylovSettings, LinearOperator};
use crate::noise::{assemble_b, NoiseSpec};
use crate::scalar::{norm2, Real};

/// `L(X) = A X + X A^T` on column-major `J x J` data.
pub struct LyapunovOperator<'a, T> {
    a: &'a SparseOperator<T>,
    at: SparseOperator<T>,
}

impl<'a, T: Real> LyapunovOperator<'a, T> {
    pub fn new(a: &'a SparseOperator<T>) -> Self {
        Self { a, at: a.transpose() }
    }
}

fn lyap_apply_raw<T: Real>(a: &SparseOperator<T>, x: &[T], y: &mut [T]) {
    let n = a.dim();
    for c in 0..n {
        let xc = &x[c * n..(c + 1) * n];
        let yc = &mut y[c * n..(c + 1) * n];
        // (A X)[:, c]
        a.apply(xc, yc);
        // (X A^T)[:, c] = sum_k A[c, k] X[:, k]
        for (k, v) in a.row(c) {
            let xk = &x[k * n..(k + 1) * n];
            for (yi, &xi) in yc.iter_mut().zip(xk) {
                *yi += v * xi;
            }
        }
    }
}

impl<T: Real> LinearOperator<T> for LyapunovOperator<'_, T> {
    fn dim(&self) -> usize {
        self.a.dim() * self.a.dim()
    }

    fn apply(&self, x: &[T], y: &mut [T]) {
        lyap_apply_raw(self.a, x, y);
    }

    fn apply_transpose(&self, x: &[T], y: &mut [T]) {
        lyap_apply_raw(&self.at, x, y);
    }
}

/// `A V + V A^T`.
pub fn lyap_apply<T: Real>(a: &SparseOperator<T>, v: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    let n = a.dim();
    if v.rows() != n || v.cols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: v.rows().max(v.cols()) });
    }
    let mut out = DenseMatrix::zeros(n, n);
    lyap_apply_raw(a, v.as_slice(), out.as_mut_slice());
    Ok(out)
}

/// `|L(V) + B B^T|_2 / |B B^T|_2` in the vectorized 2-norm.
pub fn relative_residual<T: Real>(a: &SparseOperator<T>, v: &DenseMatrix<T>, bbt: &DenseMatrix<T>) -> Result<f64> {
    let mut r = lyap_apply(a, v)?;
    for (ri, &q) in r.as_mut_slice().iter_mut().zip(bbt.as_slice()) {
        *ri += q;
    }
    let denom = norm2(bbt.as_slice()).to_f64_lossy();
    let num = norm2(r.as_slice()).to_f64_lossy();
    Ok(if denom == 0.0 { num } else { num / denom })
}

/// Largest admissible `J` for the explicit Kronecker path.
pub const KRONECKER_MAX_DIM: usize = 50;

/// Explicit `I (x) A + A (x) I`, a `J^2 x J^2` dense matrix.
pub fn kronecker_matrix<T: Real>(a: &SparseOperator<T>) -> Result<DenseMatrix<T>> {
    let n = a.dim();
    if n > KRONECKER_MAX_DIM {
        return Err(Error::InvalidArgument(format!(
            "explicit Kronecker assembly is limited to J <= {KRONECKER_MAX_DIM}, got {n}"
        )));
    }
    let mut k = DenseMatrix::zeros(n * n, n * n);
    for (r, c, v) in a.triplets() {
        for i in 0..n {
            // (I (x) A): block-diagonal copies of A.
            k[(i * n + r, i * n + c)] += v;
            // (A (x) I): A[r, c] times the identity block at (r, c).
            k[(r * n + i, c * n + i)] += v;
        }
    }
    Ok(k)
}

/// Dense direct solve of the Kronecker system, for small `J`.
pub fn solve_lyapunov_dense<T: Real>(a: &SparseOperator<T>, b: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    let k = kronecker_matrix(a)?;
    let n = a.dim();
    let rhs: Vec<T> = b.mul_transpose_self().as_slice().iter().map(|&v| -v).collect();
    let x = dense_solve(&k, &rhs)?;
    DenseMatrix::from_col_major(n, n, x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearSolverConfig {
    pub method: KrylovMethod,
    pub tol: f64,
    pub maxit: usize,
    /// GMRES restart length; 0 disables restarting.
    pub gmres_restart: usize,
    /// Memory cap for the GMRES basis, in bytes.
    pub max_basis_bytes: u64,
}

impl Default for LinearSolverConfig {
    fn default() -> Self {
        Self { method: KrylovMethod::Bicgstab, tol: 1e-4, maxit: 200, gmres_restart: 10, max_basis_bytes: 2 << 30 }
    }
}

impl LinearSolverConfig {
    pub fn with_method(method: KrylovMethod) -> Self {
        Self { method, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.maxit == 0 {
            return Err(Error::InvalidArgument("solver needs tol > 0 and maxit >= 1".into()));
        }
        Ok(())
    }

    pub fn solver_id(&self) -> String {
        match self.method {
            KrylovMethod::Gmres => format!("gmres({})", self.gmres_restart),
            m => m.to_string(),
        }
    }

    fn check_memory(&self, unknowns: usize, scalar_bytes: usize) -> Result<()> {
        if self.method != KrylovMethod::Gmres {
            return Ok(());
        }
        let len = if self.gmres_restart == 0 { self.maxit } else { self.gmres_restart.min(self.maxit) };
        let bytes = (len as u64 + 1) * unknowns as u64 * scalar_bytes as u64;
        if bytes > self.max_basis_bytes {
            return Err(Error::InvalidArgument(format!(
                "{} needs {} MiB for its Krylov basis, above the {} MiB cap",
                self.solver_id(),
                bytes >> 20,
                self.max_basis_bytes >> 20
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CovarianceSolution<T> {
    pub v: DenseMatrix<T>,
    pub iterations: usize,
    /// Relative residual of the symmetrized `V`.
    pub residual: f64,
    pub wall_time_s: f64,
    pub solver_id: String,
    pub mu: Option<T>,
    pub warm_started: bool,
}

/// Fails unless every eigenvalue of `a` has negative real part.
pub fn check_hurwitz<T: Real>(a: &SparseOperator<T>) -> Result<()> {
    let largest = if a.asymmetry() == T::zero() {
        stability_eig(a)?.to_f64_lossy()
    } else if a.dim() <= 600 {
        max_real_eigenvalue(&a.to_dense())?
    } else {
        log::warn!("skipping Hurwitz check for a nonsymmetric operator of dimension {}", a.dim());
        return Ok(());
    };
    if largest >= 0.0 {
        return Err(Error::NotHurwitz { largest_eig: largest });
    }
    Ok(())
}

/// Solves `A V + V A^T + B B^T = 0` with the configured Krylov method.
pub fn solve_lyapunov<T: Real>(
    a: &SparseOperator<T>,
    b: &DenseMatrix<T>,
    cfg: &LinearSolverConfig,
    warm_start: Option<&DenseMatrix<T>>,
) -> Result<CovarianceSolution<T>> {
    cfg.validate()?;
    let n = a.dim();
    if b.rows() != n {
        return Err(Error::DimensionMismatch { expected: n, got: b.rows() });
    }
    if let Some(w) = warm_start {
        if w.rows() != n || w.cols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: w.rows() });
        }
    }
    cfg.check_memory(n * n, std::mem::size_of::<T>())?;
    check_hurwitz(a)?;

    let start = Instant::now();
    let bbt = b.mul_transpose_self();
    let rhs: Vec<T> = bbt.as_slice().iter().map(|&v| -v).collect();
    let op = LyapunovOperator::new(a);
    let settings = KrylovSettings { tol: cfg.tol, maxit: cfg.maxit, restart: cfg.gmres_restart };
    let out = krylov::solve(cfg.method, &op, &rhs, warm_start.map(|w| w.as_slice()), &settings)?;
    if !out.converged {
        return Err(Error::KrylovFailure {
            solver: cfg.solver_id(),
            iterations: out.iterations,
            residual: out.residual,
            best_iterate: out.x.iter().map(|v| v.to_f64_lossy()).collect(),
        });
    }
    let mut v = DenseMatrix::from_col_major(n, n, out.x)?;
    v.symmetrize();
    let residual = relative_residual(a, &v, &bbt)?;
    Ok(CovarianceSolution {
        v,
        iterations: out.iterations,
        residual,
        wall_time_s: start.elapsed().as_secs_f64(),
        solver_id: cfg.solver_id(),
        mu: None,
        warm_started: warm_start.is_some(),
    })
}

/// Exact `V` from the eigendecomposition of symmetric Hurwitz `A`:
/// `V = W [ (W^T B B^T W)_ij / (-a_i - a_j) ] W^T`.
pub fn spectral_oracle<T: Real>(a: &SparseOperator<T>, b: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    let n = a.dim();
    if b.rows() != n {
        return Err(Error::DimensionMismatch { expected: n, got: b.rows() });
    }
    let scale = a.triplets().fold(T::zero(), |m, (_, _, v)| m.max(v.abs()));
    if a.asymmetry() > T::lit(1e-12) * scale.max(T::one()) {
        return Err(Error::InvalidArgument("spectral oracle requires a symmetric operator".into()));
    }
    let (vals, w) = symmetric_eigen(&a.to_dense())?;
    if let Some(&top) = vals.last() {
        if top >= 0.0 {
            return Err(Error::NotHurwitz { largest_eig: top });
        }
    }
    let bf = DenseMatrix::from_fn(n, b.cols(), |r, c| b[(r, c)].to_f64_lossy());
    let c = transpose_mul(&w, &bf);
    let mut m = c.mul_transpose_self();
    for j in 0..n {
        for i in 0..n {
            m[(i, j)] /= -vals[i] - vals[j];
        }
    }
    let mut v = congruence(&w, &m);
    v.symmetrize();
    Ok(DenseMatrix::from_f64(&v))
}

/// Classical RK4 for `dV/dt = A V + V A^T + B B^T`, `V(0) = 0`.
pub fn integrate_cov_ode<T: Real>(a: &SparseOperator<T>, b: &DenseMatrix<T>, t_end: T, dt: T) -> Result<DenseMatrix<T>> {
    let n = a.dim();
    if !(dt > T::zero()) || !(t_end >= T::zero()) {
        return Err(Error::InvalidArgument("need dt > 0 and T >= 0".into()));
    }
    if b.rows() != n {
        return Err(Error::DimensionMismatch { expected: n, got: b.rows() });
    }
    let q = b.mul_transpose_self();
    let len = n * n;
    let rhs = |v: &[T], out: &mut [T]| {
        lyap_apply_raw(a, v, out);
        for (o, &qi) in out.iter_mut().zip(q.as_slice()) {
            *o += qi;
        }
    };
    // Growth guard: a stable solution never exceeds |Q| T + |V_inf|-sized values.
    let guard = T::lit(1e8) * (q.max_abs() * (t_end + T::one()) + T::one());
    let steps = (t_end / dt).ceil().to_usize().unwrap_or(0);
    let mut v = vec![T::zero(); len];
    let (mut k1, mut k2, mut k3, mut k4) = (vec![T::zero(); len], vec![T::zero(); len], vec![T::zero(); len], vec![T::zero(); len]);
    let mut tmp = vec![T::zero(); len];
    let mut t = T::zero();
    let half = T::lit(0.5);
    let sixth = T::one() / T::lit(6.0);
    for _ in 0..steps {
        let h = dt.min(t_end - t);
        if h <= T::zero() {
            break;
        }
        rhs(&v, &mut k1);
        for i in 0..len {
            tmp[i] = v[i] + half * h * k1[i];
        }
        rhs(&tmp, &mut k2);
        for i in 0..len {
            tmp[i] = v[i] + half * h * k2[i];
        }
        rhs(&tmp, &mut k3);
        for i in 0..len {
            tmp[i] = v[i] + h * k3[i];
        }
        rhs(&tmp, &mut k4);
        for i in 0..len {
            v[i] += h * sixth * (k1[i] + T::lit(2.0) * (k2[i] + k3[i]) + k4[i]);
        }
        t += h;
        let big = crate::scalar::norm_inf(&v);
        if !big.is_finite() || big > guard {
            return Err(Error::StepSize { time: t.to_f64_lossy() });
        }
    }
    let mut out = DenseMatrix::from_col_major(n, n, v)?;
    out.symmetrize();
    Ok(out)
}

/// Outcome at one branch point.
#[derive(Debug, Clone)]
pub enum CovariancePoint<T> {
    Solved { index: usize, solution: CovarianceSolution<T> },
    Skipped { index: usize, mu: T, reason: String },
    Failed { index: usize, mu: T, error: String },
}

impl<T: Real> CovariancePoint<T> {
    pub fn index(&self) -> usize {
        match self {
            Self::Solved { index, .. } | Self::Skipped { index, .. } | Self::Failed { index, .. } => *index,
        }
    }

    pub fn solution(&self) -> Option<&CovarianceSolution<T>> {
        match self {
            Self::Solved { solution, .. } => Some(solution),
            _ => None,
        }
    }
}

/// Lazily solves along a branch, warm-starting each solve from the previous
/// solution. Only one `V` is held between steps.
pub struct CovarianceContinuation<'a, T> {
    problem: &'a SteadyState<T>,
    branch: &'a Branch<T>,
    spec: NoiseSpec<T>,
    cfg: LinearSolverConfig,
    next: usize,
    warm: Option<DenseMatrix<T>>,
}

impl<'a, T: Real> CovarianceContinuation<'a, T> {
    pub fn new(problem: &'a SteadyState<T>, branch: &'a Branch<T>, spec: &NoiseSpec<T>, cfg: &LinearSolverConfig) -> Self {
        Self { problem, branch, spec: spec.clone(), cfg: *cfg, next: 0, warm: None }
    }

    fn step(&mut self, index: usize) -> CovariancePoint<T> {
        let p = &self.branch.points[index];
        if !p.stable {
            return CovariancePoint::Skipped { index, mu: p.mu, reason: "unstable steady state".into() };
        }
        if p.kind != PointKind::Regular {
            return CovariancePoint::Skipped { index, mu: p.mu, reason: format!("{} (singular Jacobian)", p.kind) };
        }
        let attempt = || -> Result<CovarianceSolution<T>> {
            let a = self.problem.jacobian(&p.state, p.mu)?;
            let b = assemble_b(&p.state, &self.spec, self.problem.grid())?;
            solve_lyapunov(&a, &b.b, &self.cfg, self.warm.as_ref())
        };
        match attempt() {
            Ok(mut solution) => {
                solution.mu = Some(p.mu);
                self.warm = Some(solution.v.clone());
                CovariancePoint::Solved { index, solution }
            }
            Err(e) => {
                log::warn!("covariance solve failed at mu = {}: {e}", p.mu);
                CovariancePoint::Failed { index, mu: p.mu, error: e.to_string() }
            }
        }
    }
}

impl<T: Real> Iterator for CovarianceContinuation<'_, T> {
    type Item = CovariancePoint<T>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.branch.points.len() {
            return None;
        }
        let i = self.next;
        self.next += 1;
        Some(self.step(i))
    }
}

/// Collects [`CovarianceContinuation`]; memory grows with `J^2` per point.
pub fn continue_covariance<T: Real>(
    problem: &SteadyState<T>,
    branch: &Branch<T>,
    spec: &NoiseSpec<T>,
    cfg: &LinearSolverConfig,
) -> Vec<CovariancePoint<T>> {
    CovarianceContinuation::new(problem, branch, spec, cfg).collect()
}

/// One row of the covariance continuation table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CovarianceRecord {
    pub index: usize,
    pub mu: f64,
    pub cov_max_norm: f64,
    pub diag_l1: f64,
    pub diag_l2: f64,
    pub diag_linf: f64,
    pub iterations: usize,
    pub residual: f64,
    pub wall_time_s: f64,
    pub warm_started: bool,
}

impl CovarianceRecord {
    pub fn from_solution<T: Real>(index: usize, s: &CovarianceSolution<T>) -> Self {
        let n = crate::analysis::cov_norms(&s.v);
        Self {
            index,
            mu: s.mu.map(|m| m.to_f64_lossy()).unwrap_or(f64::NAN),
            cov_max_norm: n.max_norm.to_f64_lossy(),
            diag_l1: n.diag_l1.to_f64_lossy(),
            diag_l2: n.diag_l2.to_f64_lossy(),
            diag_linf: n.diag_linf.to_f64_lossy(),
            iterations: s.iterations,
            residual: s.residual,
            wall_time_s: s.wall_time_s,
            warm_started: s.warm_started,
        }
    }
}

/// Writes records as CSV. Wall times are wall-clock measurements and differ
/// between runs; pass `with_timing = false` for reproducible bodies.
pub fn write_covariance_csv<W: Write>(records: &[CovarianceRecord], with_timing: bool, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "index", "mu", "cov_max_norm", "diag_l1", "diag_l2", "diag_linf", "iterations", "residual", "wall_time_s", "warm_started",
    ])?;
    for r in records {
        w.write_record([
            r.index.to_string(),
            format!("{:.12e}", r.mu),
            format!("{:.12e}", r.cov_max_norm),
            format!("{:.12e}", r.diag_l1),
            format!("{:.12e}", r.diag_l2),
            format!("{:.12e}", r.diag_linf),
            r.iterations.to_string(),
            format!("{:.6e}", r.residual),
            if with_timing { format!("{:.6}", r.wall_time_s) } else { String::new() },
            r.warm_started.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `(x, y, variance)` triples of `diag(V)` at the interior nodes.
pub fn write_variance_surface<T: Real>(grid: &Grid2D<T>, v: &DenseMatrix<T>, path: impl AsRef<Path>) -> Result<()> {
    if v.rows() != grid.len() {
        return Err(Error::DimensionMismatch { expected: grid.len(), got: v.rows() });
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "y", "variance"])?;
    for j in 0..grid.len() {
        let (x, y) = grid.coords(j);
        w.write_record([
            format!("{:.6}", x.to_f64_lossy()),
            format!("{:.6}", y.to_f64_lossy()),
            format!("{:.12e}", v[(j, j)].to_f64_lossy()),
        ])?;
    }
    w.flush()?;
    Ok(())
}
