//! End-to-end acceptance checks on the default 50 x 45 grid.
//!
//! Runs with a custom harness so each criterion reports one PASS/FAIL line.
//! The expensive pieces (the trivial branch, the first non-trivial branch
//! and the covariance sweep along the trivial branch) are computed once and
//! shared. `ACCEPTANCE_ONLY=1,7,11` restricts the run to a subset.

use std::f64::consts::PI;
use std::time::Instant;

use cqac::analysis::{fit_scaling, select_window, CovBounds};
use cqac::dense::DenseMatrix;
use cqac::detcont::{continue_branch, start_point, switch_branch, Branch, ContinuationSettings, PointKind, SteadyState};
use cqac::grid::{Field, Grid2D, SparseOperator};
use cqac::krylov::KrylovMethod;
use cqac::lyapunov::{
    integrate_cov_ode, lyap_apply, solve_lyapunov, spectral_oracle, CovarianceContinuation, CovariancePoint,
    CovarianceSolution, LinearSolverConfig,
};
use cqac::mc::{containment_check, euler_maruyama, run_ensemble, DriftModel, McSettings};
use cqac::noise::{assemble_b, GKind, NoiseSpec, PhiRule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Eigenvalue of the negative five-point Laplacian for sine mode (k1, k2),
/// written out from the trigonometric identity rather than the grid module.
fn stencil_nu(m: usize, n: usize, lx: f64, ly: f64, k1: usize, k2: usize) -> f64 {
    let hx = 2.0 * lx / m as f64;
    let hy = 2.0 * ly / n as f64;
    4.0 / (hx * hx) * (PI * k1 as f64 / (2.0 * m as f64)).sin().powi(2)
        + 4.0 / (hy * hy) * (PI * k2 as f64 / (2.0 * n as f64)).sin().powi(2)
}

struct Shared {
    problem: SteadyState<f64>,
    gamma0: Option<(Branch<f64>, f64)>,
    gamma1: Option<Branch<f64>>,
    cov_k8: Option<Vec<CovariancePoint<f64>>>,
    cold_mu1: Option<CovarianceSolution<f64>>,
}

impl Shared {
    fn new() -> Self {
        Self {
            problem: SteadyState::new(Grid2D::new(1.0, 0.9, 50, 45).unwrap()),
            gamma0: None,
            gamma1: None,
            cov_k8: None,
            cold_mu1: None,
        }
    }

    /// Trivial branch from mu = 0 to 4 and its wall time.
    fn gamma0(&mut self) -> &(Branch<f64>, f64) {
        if self.gamma0.is_none() {
            let s = ContinuationSettings::default();
            let t = Instant::now();
            let start = start_point(&self.problem, Field::zeros(self.problem.grid()), 0.0, &s).unwrap();
            let b = continue_branch(&self.problem, &start, "gamma0", &s).unwrap_or_else(|f| panic!("{}", f.error));
            self.gamma0 = Some((b, t.elapsed().as_secs_f64()));
        }
        self.gamma0.as_ref().unwrap()
    }

    /// Branch bifurcating at the first branch point, with a fine step so
    /// the fold neighbourhood is well sampled.
    fn gamma1(&mut self) -> &Branch<f64> {
        if self.gamma1.is_none() {
            let bp = self.gamma0().0.first_of(PointKind::BranchPoint).unwrap().clone();
            let s = ContinuationSettings { initial_step: 0.02, max_step: 0.02, ..ContinuationSettings::default() };
            let sw = switch_branch(&self.problem, &bp, &s).unwrap();
            assert!(sw.switched);
            let b = continue_branch(&self.problem, &sw.point, "gamma1", &s).unwrap_or_else(|f| panic!("{}", f.error));
            self.gamma1 = Some(b);
        }
        self.gamma1.as_ref().unwrap()
    }

    fn cov_k8(&mut self) -> &[CovariancePoint<f64>] {
        if self.cov_k8.is_none() {
            self.gamma0();
            let spec = NoiseSpec::default_additive(self.problem.grid(), 8).unwrap();
            let cfg = LinearSolverConfig::default();
            let g0 = &self.gamma0.as_ref().unwrap().0;
            let pts = CovarianceContinuation::new(&self.problem, g0, &spec, &cfg)
                .take_while(|p| !matches!(p, CovariancePoint::Skipped { reason, .. } if reason.contains("unstable")))
                .collect();
            self.cov_k8 = Some(pts);
        }
        self.cov_k8.as_ref().unwrap()
    }

    /// Cold K = 8 solve on the trivial state at mu = 1.
    fn cold_mu1(&mut self) -> &CovarianceSolution<f64> {
        if self.cold_mu1.is_none() {
            let u = Field::zeros(self.problem.grid());
            let a = self.problem.jacobian(&u, 1.0).unwrap();
            let b = assemble_b(&u, &NoiseSpec::default_additive(self.problem.grid(), 8).unwrap(), self.problem.grid()).unwrap();
            self.cold_mu1 = Some(solve_lyapunov(&a, &b.b, &LinearSolverConfig::default(), None).unwrap());
        }
        self.cold_mu1.as_ref().unwrap()
    }
}

fn solved(points: &[CovariancePoint<f64>]) -> Vec<&CovarianceSolution<f64>> {
    points.iter().filter_map(|p| p.solution()).collect()
}

fn branch_points(sh: &mut Shared) -> Outcome {
    let (g0, secs) = sh.gamma0();
    let found: Vec<f64> = g0.all_of(PointKind::BranchPoint).iter().map(|p| p.mu).collect();
    if found.len() < 3 {
        return outcome(false, format!("only {} branch points detected: {found:?}", found.len()));
    }
    let derived: Vec<f64> = [(1, 1), (2, 1), (1, 2)].iter().map(|&(a, b)| stencil_nu(50, 45, 1.0, 0.9, a, b) / 4.0).collect();
    let published = [1.3798, 3.2385, 3.6784];
    let published_tol = [0.005, 0.01, 0.01];
    let mut pass = true;
    let mut parts = Vec::new();
    for i in 0..3 {
        let ok = (found[i] - derived[i]).abs() <= 1e-3 && rel(found[i], published[i]) <= published_tol[i];
        pass &= ok;
        parts.push(format!(
            "{:.6} (stencil {:.5}, {:.2}% from {})",
            found[i],
            derived[i],
            100.0 * rel(found[i], published[i]),
            published[i]
        ));
    }
    let per_point = secs / 3.0;
    pass &= per_point < 120.0;
    outcome(pass, format!("{}; {:.1} s per branch point", parts.join(", "), per_point))
}

fn fold_point(sh: &mut Shared) -> Outcome {
    let g1 = sh.gamma1();
    match g1.first_of(PointKind::Fold) {
        Some(f) => outcome(rel(f.mu, 1.1794) <= 0.02, format!("fold at {:.6}, {:.3}% from 1.1794", f.mu, 100.0 * rel(f.mu, 1.1794))),
        None => outcome(false, "no fold detected on the first non-trivial branch"),
    }
}

fn lyapunov_correctness(sh: &mut Shared) -> Outcome {
    let tol = LinearSolverConfig::default().tol;
    let v = sh.cold_mu1().v.clone();
    let u = Field::zeros(sh.problem.grid());
    let a = sh.problem.jacobian(&u, 1.0).unwrap();
    let b = assemble_b(&u, &NoiseSpec::default_additive(sh.problem.grid(), 8).unwrap(), sh.problem.grid()).unwrap();
    let oracle = spectral_oracle(&a, &b.b).unwrap();
    let diff = v.as_slice().iter().zip(oracle.as_slice()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let vmax = oracle.max_abs();
    let oracle_ok = diff <= 10.0 * tol * vmax;

    sh.cov_k8();
    let mut worst = 0.0f64;
    let mut count = 0;
    let problem = &sh.problem;
    let g0 = &sh.gamma0.as_ref().unwrap().0;
    let spec = NoiseSpec::default_additive(problem.grid(), 8).unwrap();
    let cov = sh.cov_k8.as_ref().unwrap();
    let failed = cov.iter().filter(|p| matches!(p, CovariancePoint::Failed { .. })).count();
    for p in cov.iter() {
        if let CovariancePoint::Solved { index, solution } = p {
            let pt = &g0.points[*index];
            let a = problem.jacobian(&pt.state, pt.mu).unwrap();
            let bbt = assemble_b(&pt.state, &spec, problem.grid()).unwrap().covariance_rate();
            let mut r = lyap_apply(&a, &solution.v).unwrap();
            for (x, y) in r.as_mut_slice().iter_mut().zip(bbt.as_slice()) {
                *x += y;
            }
            let res = frobenius(&r) / frobenius(&bbt);
            worst = worst.max(res);
            count += 1;
        }
    }
    let pass = oracle_ok && worst <= tol && failed == 0 && count > 0;
    outcome(
        pass,
        format!(
            "max|V - V_oracle| = {diff:.2e} vs bound {:.2e}; worst residual {worst:.2e} over {count} points ({failed} failed)",
            10.0 * tol * vmax
        ),
    )
}

fn frobenius(m: &DenseMatrix<f64>) -> f64 {
    m.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn truncation(sh: &mut Shared) -> Outcome {
    let k8: Vec<(usize, f64)> = sh.cov_k8().iter().filter_map(|p| p.solution().map(|s| (p.index(), s.v.max_abs()))).collect();
    let problem = &sh.problem;
    let g0 = &sh.gamma0.as_ref().unwrap().0;
    let spec2 = NoiseSpec::default_additive(problem.grid(), 2).unwrap();
    let cfg = LinearSolverConfig::default();
    let k2: Vec<(usize, f64)> = CovarianceContinuation::new(problem, g0, &spec2, &cfg)
        .take(k8.last().map(|p| p.0 + 1).unwrap_or(0))
        .filter_map(|p| p.solution().map(|s| (p.index(), s.v.max_abs())))
        .collect();
    let mut worst = 0.0f64;
    let mut worst_mu = f64::NAN;
    let mut largest_gap = 0.0f64;
    let mut paired = 0;
    for &(i, n8) in &k8 {
        if let Some(&(_, n2)) = k2.iter().find(|p| p.0 == i) {
            paired += 1;
            let gap = (n8 - n2).abs();
            largest_gap = largest_gap.max(gap);
            if gap / n8 > worst {
                worst = gap / n8;
                worst_mu = g0.points[i].mu;
            }
        }
    }
    let branch_max = k8.iter().map(|p| p.1).fold(0.0, f64::max);
    let pass = paired == k8.len() && paired > 0 && worst <= 0.01;
    outcome(
        pass,
        format!(
            "max relative gap |V8| vs |V2| = {:.2}% at mu = {worst_mu:.3} over {paired} points; largest absolute gap is {:.2}% of the branch maximum",
            100.0 * worst,
            100.0 * largest_gap / branch_max
        ),
    )
}

fn warm_start(sh: &mut Shared) -> Outcome {
    let sols = solved(sh.cov_k8());
    let its: Vec<usize> = sols.iter().map(|s| s.iterations).collect();
    let total: f64 = sols.iter().map(|s| s.wall_time_s).sum();
    let first = its.first().copied().unwrap_or(0);
    let ordered = its.iter().skip(1).all(|&i| i < first);
    let pass = ordered && its.len() >= 15 && total < 900.0;
    outcome(pass, format!("iterations {its:?}; {} points in {total:.0} s", its.len()))
}

fn scaling_laws(sh: &mut Shared) -> Outcome {
    let mu_b = sh.gamma0().0.first_of(PointKind::BranchPoint).unwrap().mu;
    let g0_pts: Vec<(f64, f64)> = {
        let sols = solved(sh.cov_k8());
        sols.iter().map(|s| (s.mu.unwrap(), s.v.max_abs())).collect()
    };
    let bp_window: Vec<(f64, f64)> = g0_pts.iter().copied().filter(|&(m, _)| m >= 1.0 && m <= mu_b - 0.02).collect();
    let bp_fit = fit_scaling(&bp_window, mu_b);

    sh.gamma1();
    let problem = &sh.problem;
    let g1 = sh.gamma1.as_ref().unwrap();
    let fold_idx = g1.points.iter().position(|p| p.kind == PointKind::Fold).unwrap();
    let mu_f = g1.points[fold_idx].mu;
    let spec = NoiseSpec::default_additive(problem.grid(), 8).unwrap();
    let cfg = LinearSolverConfig::default();
    let mut fold_pts = Vec::new();
    let mut failures = 0;
    for p in CovarianceContinuation::new(problem, g1, &spec, &cfg) {
        let i = p.index();
        if i <= fold_idx {
            continue;
        }
        let mu = g1.points[i].mu;
        if mu > mu_f + 0.1 {
            break;
        }
        match p {
            CovariancePoint::Solved { solution, .. } => fold_pts.push((mu, solution.v.max_abs())),
            CovariancePoint::Failed { .. } => failures += 1,
            CovariancePoint::Skipped { .. } => {}
        }
    }
    let fold_window = select_window(&fold_pts, mu_f, mu_f, mu_f + 0.1, 2);
    let fold_fit = fit_scaling(&fold_window, mu_f);
    match (bp_fit, fold_fit) {
        (Ok(b), Ok(f)) => {
            let pass = (0.85..=1.15).contains(&b.alpha) && (0.4..=0.6).contains(&f.alpha);
            outcome(
                pass,
                format!(
                    "branch point alpha = {:.3} ({} pts, R^2 {:.4}); fold alpha = {:.3} ({} pts, R^2 {:.4}, {failures} failed solves)",
                    b.alpha, b.n_points, b.r_squared, f.alpha, f.n_points, f.r_squared
                ),
            )
        }
        (b, f) => outcome(false, format!("fit failed: {:?} / {:?}", b.err(), f.err())),
    }
}

fn zeta_linearity(sh: &mut Shared) -> Outcome {
    let base = sh.cold_mu1().v.clone();
    let u = Field::zeros(sh.problem.grid());
    let a = sh.problem.jacobian(&u, 1.0).unwrap();
    let spec = NoiseSpec::default_additive(sh.problem.grid(), 8).unwrap();
    let b = assemble_b(&u, &spec, sh.problem.grid()).unwrap().b;
    let mut worst = 0.0f64;
    for zeta in [4.0f64, 16.0] {
        let bz = b.scaled(zeta.sqrt());
        let v = solve_lyapunov(&a, &bz, &LinearSolverConfig::default(), None).unwrap().v;
        let scale = base.max_abs();
        for (x, y) in v.as_slice().iter().zip(base.as_slice()) {
            worst = worst.max((x - zeta * y).abs() / (zeta * scale));
        }
    }
    outcome(worst <= 1e-8, format!("max |V(zeta) - zeta V| / (zeta |V|_max) = {worst:.2e}"))
}

fn transient(_: &mut Shared) -> Outcome {
    let problem = SteadyState::new(Grid2D::new(1.0, 0.9, 10, 9).unwrap());
    let u = Field::zeros(problem.grid());
    let a = problem.jacobian(&u, 1.0).unwrap();
    let b = assemble_b(&u, &NoiseSpec::default_additive(problem.grid(), 8).unwrap(), problem.grid()).unwrap().b;
    let largest = stencil_nu(10, 9, 1.0, 0.9, 1, 1) - 4.0;
    let t_end = 8.0 / largest.abs();
    let v_t = integrate_cov_ode(&a, &b, t_end, 1e-3).unwrap();
    let v_inf = spectral_oracle(&a, &b).unwrap();
    let diff = v_t.as_slice().iter().zip(v_inf.as_slice()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let ratio = diff / v_inf.max_abs();
    outcome(ratio <= 1e-3, format!("J = {}, T = {t_end:.3}: relative gap {ratio:.2e}", problem.grid().len()))
}

fn monte_carlo(sh: &mut Shared) -> Outcome {
    let grid = sh.problem.grid().clone();
    let u = Field::zeros(&grid);
    let spec = NoiseSpec::from_rule(&grid, 5.0, PhiRule::Affine { a: -0.4, b: 0.4 }, 11, GKind::Additive).unwrap();
    let a = sh.problem.jacobian(&u, 1.0).unwrap();
    let b = assemble_b(&u, &spec, &grid).unwrap();
    let v = solve_lyapunov(&a, &b.b, &LinearSolverConfig::default(), None).unwrap().v;
    let bounds = CovBounds::from_covariance(&v);
    let s = McSettings { dt: 1e-5, t_end: 1.0, seed: 2014, record_stride: 10, ..McSettings::default() };
    let stats = euler_maruyama(&sh.problem, &u, 1.0, &spec, &s).unwrap();
    let exit = containment_check(&stats, &bounds, s.transient_cut());

    // One interior node: the drift is -a p with a = 2/hx^2 + 2/hy^2 - 4 mu
    // and the single sine mode equals 1 there, so b^2 = lambda_1.
    let (lx, ly, mu) = (1.0, 0.9, 1.0);
    let point = SteadyState::new(Grid2D::new(lx, ly, 2, 2).unwrap());
    let (hx, hy) = (lx, ly);
    let a_ou = 2.0 / (hx * hx) + 2.0 / (hy * hy) - 4.0 * mu;
    let sigma = 5.0f64;
    let b2 = sigma * (-0.1f64).exp();
    let expected = b2 / (2.0 * a_ou);
    let ou_spec = NoiseSpec::default_additive(point.grid(), 1).unwrap();
    let ou = McSettings {
        dt: 1e-3,
        t_end: 1000.0,
        seed: 7,
        record_stride: 10,
        drift: DriftModel::Linearized,
        ..McSettings::default()
    };
    let paths = run_ensemble(&point, &Field::zeros(point.grid()), mu, &ou_spec, &ou, 16).unwrap();
    let (est, se) = cqac::mc::ensemble_variance(&paths, ou.transient_cut());
    let ou_ok = rel(est, expected) <= 0.1;
    outcome(
        exit <= 0.1 && ou_ok,
        format!(
            "exit fraction {exit:.3} vs (C_min, C_max) = ({:.3}, {:.3}); OU variance {est:.4} +- {se:.4} vs b^2/2a = {expected:.4}",
            bounds.c_min, bounds.c_max
        ),
    )
}

fn regime_swap(sh: &mut Shared) -> Outcome {
    let mu_b1 = sh.gamma0().0.first_of(PointKind::BranchPoint).unwrap().mu;
    let bp3 = sh.gamma0().0.all_of(PointKind::BranchPoint)[2].clone();
    let mu_f1 = sh.gamma1().first_of(PointKind::Fold).unwrap().mu;
    let s = ContinuationSettings::default();
    let sw = switch_branch(&sh.problem, &bp3, &s).unwrap();
    let g3 = continue_branch(&sh.problem, &sw.point, "gamma3", &s).unwrap_or_else(|f| f.partial);
    let Some(mu_f3) = g3.first_of(PointKind::Fold).map(|p| p.mu) else {
        return outcome(false, "no fold on the third non-trivial branch");
    };
    let g1 = sh.gamma1.as_ref().unwrap();
    let pick = |lo: f64, hi: f64| {
        let target = 0.5 * (lo + hi);
        g1.points
            .iter()
            .filter(|p| p.stable && p.kind == PointKind::Regular && p.mu >= lo && p.mu < hi)
            .min_by(|a, b| (a.mu - target).abs().partial_cmp(&(b.mu - target).abs()).unwrap())
            .cloned()
    };
    let (Some(p1), Some(p4)) = (pick(mu_f1, mu_b1), pick(mu_f3, 4.0)) else {
        return outcome(false, "no stable regular point in one of the regimes");
    };
    let grid = sh.problem.grid();
    let cfg = LinearSolverConfig::default();
    let diff = |p: &cqac::detcont::BranchPoint<f64>| -> Result<(f64, f64), String> {
        let a = sh.problem.jacobian(&p.state, p.mu).map_err(|e| e.to_string())?;
        let mut norms = [0.0; 2];
        for (slot, g) in [GKind::Additive, GKind::QuadSup].into_iter().enumerate() {
            let spec = NoiseSpec::from_rule(grid, 50.0, PhiRule::LinearK, 20, g).unwrap();
            let b = assemble_b(&p.state, &spec, grid).map_err(|e| e.to_string())?;
            norms[slot] = solve_lyapunov(&a, &b.b, &cfg, None).map_err(|e| e.to_string())?.v.max_abs();
        }
        Ok((norms[0], norms[1]))
    };
    match (diff(&p1), diff(&p4)) {
        (Ok((add1, quad1)), Ok((add4, quad4))) => {
            let swap = (quad1 - add1).signum() != (quad4 - add4).signum();
            outcome(
                swap,
                format!(
                    "R1 mu = {:.3}: quad_sup {quad1:.4e} vs additive {add1:.4e}; R4 mu = {:.3} (fold {mu_f3:.4}): quad_sup {quad4:.4e} vs additive {add4:.4e}",
                    p1.mu, p4.mu
                ),
            )
        }
        (r1, r4) => outcome(false, format!("solve failed: {:?} / {:?}", r1.err(), r4.err())),
    }
}

/// Dense Gaussian elimination with partial pivoting.
fn gauss(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Vec<f64> {
    let n = rhs.len();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| m[i][c].abs().partial_cmp(&m[j][c].abs()).unwrap()).unwrap();
        m.swap(c, piv);
        rhs.swap(c, piv);
        for r in c + 1..n {
            let f = m[r][c] / m[c][c];
            for k in c..n {
                m[r][k] -= f * m[c][k];
            }
            rhs[r] -= f * rhs[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| m[r][k] * x[k]).sum();
        x[r] = (rhs[r] - s) / m[r][r];
    }
    x
}

fn kronecker(_: &mut Shared) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for trial in 0..20 {
        let j = 1 + trial % 4;
        // Strongly diagonally dominant with a negative diagonal: Hurwitz.
        let mut dense = vec![vec![0.0; j]; j];
        let mut trips = Vec::new();
        for r in 0..j {
            for c in 0..j {
                let v = if r == c { -(j as f64) - rng.random_range(0.5..2.0) } else { rng.random_range(-0.9..0.9) };
                dense[r][c] = v;
                trips.push((r, c, v));
            }
        }
        let a = SparseOperator::from_triplets(j, &trips, false).unwrap();
        let k = 1 + trial % 3;
        let entries: Vec<f64> = (0..j * k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b = DenseMatrix::from_col_major(j, k, entries).unwrap();
        let cfg = LinearSolverConfig { tol: 1e-13, ..LinearSolverConfig::with_method(KrylovMethod::Gmres) };
        let v = solve_lyapunov(&a, &b, &cfg, None).unwrap().v;

        // (I (x) A + A (x) I) vec(V) = -vec(B B^T), column-major vec.
        let n = j * j;
        let mut kron = vec![vec![0.0; n]; n];
        for c in 0..j {
            for r in 0..j {
                let row = c * j + r;
                for s in 0..j {
                    kron[row][c * j + s] += dense[r][s];
                    kron[row][s * j + r] += dense[c][s];
                }
            }
        }
        let rhs: Vec<f64> = (0..n)
            .map(|idx| {
                let (c, r) = (idx / j, idx % j);
                -(0..k).map(|q| b[(r, q)] * b[(c, q)]).sum::<f64>()
            })
            .collect();
        let x = gauss(kron, rhs);
        for (idx, &xi) in x.iter().enumerate() {
            worst = worst.max((v.as_slice()[idx] - xi).abs());
        }
    }
    outcome(worst <= 1e-8, format!("max entry gap over 20 random systems (J <= 4): {worst:.2e}"))
}

type Criterion = fn(&mut Shared) -> Outcome;

fn main() {
    // libtest flags such as --nocapture are accepted and ignored.
    let only: Option<Vec<usize>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let criteria: [(usize, &str, Criterion); 11] = [
        (1, "branch-point accuracy", branch_points),
        (2, "fold accuracy", fold_point),
        (3, "Lyapunov correctness", lyapunov_correctness),
        (4, "truncation insensitivity", truncation),
        (5, "warm-start effect", warm_start),
        (6, "scaling laws", scaling_laws),
        (7, "zeta-linearity", zeta_linearity),
        (8, "transient consistency", transient),
        (9, "Monte-Carlo validation", monte_carlo),
        (10, "multiplicative-noise regime swap", regime_swap),
        (11, "Kronecker equivalence", kronecker),
    ];
    let mut shared = Shared::new();
    let mut failed = Vec::new();
    for (id, name, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let t = Instant::now();
        let res = run(&mut shared);
        println!(
            "criterion {id:>2} {name}: {} ({:.1} s) {}",
            if res.pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64(),
            res.detail
        );
        if !res.pass {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        println!("acceptance: {} criteria failed: {failed:?}", failed.len());
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}
