//! Pseudo-arclength continuation of steady states.
//!
//! A branch is a sequence of solutions `(p, mu)` of `residual(p, mu) = 0`.
//! Each step predicts along the unit tangent and corrects with Newton on the
//! bordered system
//!
//! ```text
//! [ A(p, mu)   4p   ] [dp ]     [ residual        ]
//! [ w t_p^T    t_mu ] [dmu] = - [ arclength gap   ]
//! ```
//!
//! where `w` weights the state part of every inner product (the discrete L2
//! weight `hx hy` by default) so that step sizes do not depend on the mesh.
//!
//! Stability is monitored through the leading eigenvalues of the symmetric
//! Jacobian. A sign change of the tangent's `mu` component marks a fold; a
//! change in the number of positive eigenvalues without one marks a branch
//! point.

use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backend::SparseLu;
use crate::eigen::{inverse_iteration, leading_eigenpairs, EigenSettings, LeadingEigen};
use crate::error::{Error, Result};
use crate::grid::{assemble_laplacian, jacobian, residual, residual_mu_derivative, Field, Grid2D, SparseOperator};
use crate::scalar::{norm_inf, Real};

/// Discretized steady-state problem: the grid and its Laplacian.
#[derive(Debug, Clone)]
pub struct SteadyState<T> {
    grid: Grid2D<T>,
    lap: SparseOperator<T>,
}

impl<T: Real> SteadyState<T> {
    pub fn new(grid: Grid2D<T>) -> Self {
        let lap = assemble_laplacian(&grid);
        Self { grid, lap }
    }

    pub fn grid(&self) -> &Grid2D<T> {
        &self.grid
    }

    pub fn laplacian(&self) -> &SparseOperator<T> {
        &self.lap
    }

    pub fn residual(&self, u: &Field<T>, mu: T) -> Result<Field<T>> {
        residual(u, mu, &self.lap)
    }

    pub fn jacobian(&self, u: &Field<T>, mu: T) -> Result<SparseOperator<T>> {
        jacobian(u, mu, &self.lap)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointKind {
    Regular,
    Fold,
    BranchPoint,
}

impl fmt::Display for PointKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PointKind::Regular => "regular",
            PointKind::Fold => "fold",
            PointKind::BranchPoint => "branch_point",
        })
    }
}

/// A solution on a branch with its tangent and stability data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BranchPoint<T> {
    pub state: Field<T>,
    pub mu: T,
    /// Unit tangent (weighted norm); the last entry is the `mu` component.
    pub tangent: Vec<T>,
    /// Largest eigenvalue of the Jacobian.
    pub min_stability_eig: T,
    /// Resolved leading eigenvalues, descending.
    pub leading_eigs: Vec<T>,
    pub unstable_count: usize,
    pub kind: PointKind,
    pub stable: bool,
    /// `|residual|_inf` at the accepted state.
    pub residual: T,
}

impl<T: Real> BranchPoint<T> {
    pub fn tangent_mu(&self) -> T {
        *self.tangent.last().expect("non-empty tangent")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContinuationSettings<T> {
    pub initial_step: T,
    pub min_step: T,
    pub max_step: T,
    pub newton_tol: T,
    pub max_newton_iter: usize,
    pub max_points: usize,
    /// `+1` follows the start tangent, `-1` reverses it.
    pub direction: i8,
    pub eig_tol: f64,
    /// Number of leading eigenvalues tracked at every point.
    pub tracked_eigs: usize,
    pub mu_min: T,
    pub mu_max: T,
    /// Weight of the state block in inner products; `None` uses `hx hy`.
    pub state_weight: Option<T>,
    /// Kick amplitude for branch switching.
    pub switch_kick: T,
    /// Tolerance on the test function when refining singular points.
    pub locate_tol: T,
    /// Consecutive easy corrector convergences before the step doubles.
    pub easy_streak: usize,
}

impl<T: Real> Default for ContinuationSettings<T> {
    fn default() -> Self {
        Self {
            initial_step: T::lit(0.05),
            min_step: T::lit(1e-6),
            max_step: T::lit(0.1),
            newton_tol: T::lit(1e-10),
            max_newton_iter: 12,
            max_points: 2000,
            direction: 1,
            eig_tol: 1e-9,
            tracked_eigs: 6,
            mu_min: T::zero(),
            mu_max: T::lit(4.0),
            state_weight: None,
            switch_kick: T::lit(0.1),
            locate_tol: T::lit(1e-6),
            easy_streak: 3,
        }
    }
}

impl<T: Real> ContinuationSettings<T> {
    pub fn validate(&self) -> Result<()> {
        let ok = self.min_step > T::zero()
            && self.min_step <= self.initial_step
            && self.initial_step <= self.max_step
            && self.newton_tol > T::zero()
            && self.max_newton_iter > 0
            && (self.direction == 1 || self.direction == -1)
            && self.mu_min < self.mu_max
            && self.tracked_eigs > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(
                "continuation settings require 0 < min_step <= initial_step <= max_step, \
                 positive tolerances, direction +-1 and mu_min < mu_max"
                    .into(),
            ))
        }
    }

    fn weight(&self, grid: &Grid2D<T>) -> T {
        self.state_weight.unwrap_or_else(|| grid.cell_area())
    }

    fn eigen(&self) -> EigenSettings {
        EigenSettings { count: self.tracked_eigs, tol: self.eig_tol, ..EigenSettings::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    ParameterBound,
    MaxPoints,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Branch<T> {
    pub label: String,
    pub points: Vec<BranchPoint<T>>,
    pub settings: ContinuationSettings<T>,
    pub stop_reason: Option<StopReason>,
}

impl<T: Real> Branch<T> {
    pub fn singular_points(&self) -> impl Iterator<Item = (usize, &BranchPoint<T>)> {
        self.points.iter().enumerate().filter(|(_, p)| p.kind != PointKind::Regular)
    }

    pub fn first_of(&self, kind: PointKind) -> Option<&BranchPoint<T>> {
        self.points.iter().find(|p| p.kind == kind)
    }

    pub fn all_of(&self, kind: PointKind) -> Vec<&BranchPoint<T>> {
        self.points.iter().filter(|p| p.kind == kind).collect()
    }

    /// Branch summary CSV: `index,mu,u_l2,u_inf,min_eig,stable,kind`.
    pub fn write_csv<W: Write>(&self, grid: &Grid2D<T>, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["index", "mu", "u_l2", "u_inf", "min_eig", "stable", "kind"])?;
        for (i, p) in self.points.iter().enumerate() {
            w.write_record([
                i.to_string(),
                format!("{:.12e}", p.mu.to_f64_lossy()),
                format!("{:.12e}", grid.l2_norm(&p.state.values).to_f64_lossy()),
                format!("{:.12e}", p.state.norm_inf().to_f64_lossy()),
                format!("{:.12e}", p.min_stability_eig.to_f64_lossy()),
                p.stable.to_string(),
                p.kind.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, grid: &Grid2D<T>, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(grid, std::fs::File::create(path)?)
    }

    /// Companion file with the full states, keyed by point index.
    pub fn save_states(&self, path: impl AsRef<Path>) -> Result<()>
    where
        T: Serialize,
    {
        #[derive(Serialize)]
        struct Entry<'a, T> {
            index: usize,
            mu: T,
            kind: PointKind,
            state: &'a [T],
        }
        let entries: Vec<_> = self
            .points
            .iter()
            .enumerate()
            .map(|(index, p)| Entry { index, mu: p.mu, kind: p.kind, state: &p.state.values })
            .collect();
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(f, &serde_json::json!({ "label": self.label, "points": entries }))?;
        Ok(())
    }
}

/// Failure of a continuation run; carries the points accepted so far.
#[derive(Debug)]
pub struct ContinuationFailure<T> {
    pub error: Error,
    pub partial: Branch<T>,
}

impl<T> fmt::Display for ContinuationFailure<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (after {} points)", self.error, self.partial.points.len())
    }
}

impl<T: fmt::Debug> std::error::Error for ContinuationFailure<T> {}

// ---------------------------------------------------------------------------
// Linear algebra helpers

fn wdot<T: Real>(w: T, a: &[T], b: &[T]) -> T {
    let n = a.len() - 1;
    w * crate::scalar::dot(&a[..n], &b[..n]) + a[n] * b[n]
}

fn wnormalize<T: Real>(w: T, v: &mut [T]) {
    let nrm = wdot(w, v, v).sqrt();
    v.iter_mut().for_each(|x| *x /= nrm);
}

/// `[A b; c^T d]` with `A` factored once.
struct Bordered<'a, T> {
    a: &'a SparseOperator<T>,
    lu: SparseLu,
    b: Vec<T>,
    c: Vec<T>,
    d: T,
    /// `A^{-1} b`
    v: Vec<T>,
}

impl<'a, T: Real> Bordered<'a, T> {
    fn new(a: &'a SparseOperator<T>, b: Vec<T>, c: Vec<T>, d: T) -> Result<Self> {
        let lu = SparseLu::new(a, T::zero())?;
        let v = lu.solve(&b)?;
        Ok(Self { a, lu, b, c, d, v })
    }

    fn solve_once(&self, f: &[T], g: T) -> Result<(Vec<T>, T)> {
        let z = self.lu.solve(f)?;
        let denom = self.d - crate::scalar::dot(&self.c, &self.v);
        if denom == T::zero() || !denom.is_finite() {
            return Err(Error::LinearSolve("bordered system is singular".into()));
        }
        let y = (g - crate::scalar::dot(&self.c, &z)) / denom;
        let x = z.iter().zip(&self.v).map(|(&zi, &vi)| zi - y * vi).collect();
        Ok((x, y))
    }

    /// Block elimination followed by two rounds of iterative refinement on
    /// the full bordered system.
    fn solve(&self, f: &[T], g: T) -> Result<(Vec<T>, T)> {
        let (mut x, mut y) = self.solve_once(f, g)?;
        let mut ax = vec![T::zero(); x.len()];
        for _ in 0..2 {
            self.a.apply(&x, &mut ax);
            let r1: Vec<T> = f.iter().zip(&ax).zip(&self.b).map(|((&fi, &ai), &bi)| fi - ai - bi * y).collect();
            let r2 = g - crate::scalar::dot(&self.c, &x) - self.d * y;
            let (dx, dy) = self.solve_once(&r1, r2)?;
            x.iter_mut().zip(&dx).for_each(|(xi, &d)| *xi += d);
            y += dy;
        }
        Ok((x, y))
    }
}

/// Unit tangent at `(u, mu)`, oriented so that it has positive weighted inner
/// product with `reference`.
fn tangent_at<T: Real>(problem: &SteadyState<T>, u: &Field<T>, mu: T, reference: &[T], w: T) -> Result<Vec<T>> {
    let a = problem.jacobian(u, mu)?;
    let n = u.len();
    let c: Vec<T> = reference[..n].iter().map(|&r| w * r).collect();
    let sys = Bordered::new(&a, residual_mu_derivative(u), c, reference[n])?;
    let (x, y) = sys.solve(&vec![T::zero(); n], T::one())?;
    let mut t = x;
    t.push(y);
    wnormalize(w, &mut t);
    Ok(t)
}

fn eigen_info<T: Real>(problem: &SteadyState<T>, u: &Field<T>, mu: T, settings: &ContinuationSettings<T>) -> Result<LeadingEigen<T>> {
    let a = problem.jacobian(u, mu)?;
    leading_eigenpairs(&a, &settings.eigen())
}

fn make_point<T: Real>(
    problem: &SteadyState<T>,
    state: Field<T>,
    mu: T,
    tangent: Vec<T>,
    kind: PointKind,
    settings: &ContinuationSettings<T>,
) -> Result<(BranchPoint<T>, LeadingEigen<T>)> {
    let eig = eigen_info(problem, &state, mu, settings)?;
    let res = problem.residual(&state, mu)?.norm_inf();
    let largest = eig.largest();
    if eig.unstable_count() == eig.values.len() {
        log::warn!("all {} tracked eigenvalues are positive at mu = {mu}", eig.values.len());
    }
    let point = BranchPoint {
        state,
        mu,
        tangent,
        min_stability_eig: largest,
        leading_eigs: eig.values.clone(),
        unstable_count: eig.unstable_count(),
        kind,
        stable: largest < T::zero(),
        residual: res,
    };
    Ok((point, eig))
}

// ---------------------------------------------------------------------------
// Correctors

/// Newton's method for `residual(u, mu) = 0` at fixed `mu`.
pub fn newton_correct<T: Real>(
    problem: &SteadyState<T>,
    guess: &Field<T>,
    mu: T,
    settings: &ContinuationSettings<T>,
) -> Result<Field<T>> {
    problem.grid.check_field(guess)?;
    let mut u = guess.clone();
    let mut res = problem.residual(&u, mu)?;
    let mut rnorm = res.norm_inf();
    for _ in 0..settings.max_newton_iter {
        if rnorm <= settings.newton_tol {
            return Ok(u);
        }
        let a = problem.jacobian(&u, mu)?;
        let lu = SparseLu::new(&a, T::zero())?;
        let du = lu.solve(&res.values)?;
        u.values.iter_mut().zip(&du).for_each(|(ui, &d)| *ui -= d);
        res = problem.residual(&u, mu)?;
        rnorm = res.norm_inf();
        if !rnorm.is_finite() {
            break;
        }
    }
    if rnorm <= settings.newton_tol {
        return Ok(u);
    }
    Err(Error::NewtonFailure {
        iterations: settings.max_newton_iter,
        residual: rnorm.to_f64_lossy(),
        last_iterate: u.values.iter().map(|v| v.to_f64_lossy()).collect(),
    })
}

struct Corrected<T> {
    state: Field<T>,
    mu: T,
    iterations: usize,
}

/// Newton on the bordered system: solution on the hyperplane orthogonal to
/// `tangent` at distance `step` from `(base, base_mu)`.
fn arclength_correct<T: Real>(
    problem: &SteadyState<T>,
    base: &Field<T>,
    base_mu: T,
    tangent: &[T],
    step: T,
    settings: &ContinuationSettings<T>,
) -> Result<Corrected<T>> {
    let n = base.len();
    let w = settings.weight(&problem.grid);
    let pred: Vec<T> = base.values.iter().zip(tangent).map(|(&p, &t)| p + step * t).collect();
    let pred_mu = base_mu + step * tangent[n];
    let mut u = Field::from(pred.clone());
    let mut mu = pred_mu;
    let c: Vec<T> = tangent[..n].iter().map(|&t| w * t).collect();
    let gap = |u: &Field<T>, mu: T| -> T {
        let mut s = T::zero();
        for i in 0..n {
            s += c[i] * (u.values[i] - pred[i]);
        }
        s + tangent[n] * (mu - pred_mu)
    };
    let mut res = problem.residual(&u, mu)?;
    let r0 = res.norm_inf();
    let mut rnorm = r0;
    for it in 0..=settings.max_newton_iter {
        if rnorm <= settings.newton_tol {
            return Ok(Corrected { state: u, mu, iterations: it });
        }
        if it == settings.max_newton_iter || !rnorm.is_finite() || rnorm > T::lit(1e3) * r0.max(T::one()) {
            break;
        }
        let a = problem.jacobian(&u, mu)?;
        let sys = Bordered::new(&a, residual_mu_derivative(&u), c.clone(), tangent[n])?;
        let (du, dmu) = sys.solve(&res.values, gap(&u, mu))?;
        u.values.iter_mut().zip(&du).for_each(|(ui, &d)| *ui -= d);
        mu -= dmu;
        res = problem.residual(&u, mu)?;
        rnorm = res.norm_inf();
    }
    Err(Error::NewtonFailure {
        iterations: settings.max_newton_iter,
        residual: rnorm.to_f64_lossy(),
        last_iterate: u.values.iter().map(|v| v.to_f64_lossy()).collect(),
    })
}

// ---------------------------------------------------------------------------
// Branch construction

/// Wraps a converged solution as the first point of a branch.
///
/// The tangent is oriented along increasing `mu`.
pub fn start_point<T: Real>(
    problem: &SteadyState<T>,
    state: Field<T>,
    mu: T,
    settings: &ContinuationSettings<T>,
) -> Result<BranchPoint<T>> {
    problem.grid.check_field(&state)?;
    let res = problem.residual(&state, mu)?.norm_inf();
    if res > settings.newton_tol {
        return Err(Error::InvalidArgument(format!(
            "start point residual {} exceeds the corrector tolerance", res.to_f64_lossy()
        )));
    }
    let w = settings.weight(&problem.grid);
    let mut reference = vec![T::zero(); state.len() + 1];
    reference[state.len()] = T::one();
    let tangent = tangent_at(problem, &state, mu, &reference, w)?;
    Ok(make_point(problem, state, mu, tangent, PointKind::Regular, settings)?.0)
}

/// Traces a branch from `start` until `mu` leaves `[mu_min, mu_max]` or
/// `max_points` points have been accepted.
pub fn continue_branch<T: Real>(
    problem: &SteadyState<T>,
    start: &BranchPoint<T>,
    label: &str,
    settings: &ContinuationSettings<T>,
) -> std::result::Result<Branch<T>, ContinuationFailure<T>> {
    let mut branch = Branch { label: label.to_string(), points: Vec::new(), settings: settings.clone(), stop_reason: None };
    if let Err(error) = settings.validate() {
        return Err(ContinuationFailure { error, partial: branch });
    }
    match trace(problem, start, settings, &mut branch) {
        Ok(()) => Ok(branch),
        Err(error) => Err(ContinuationFailure { error, partial: branch }),
    }
}

fn trace<T: Real>(
    problem: &SteadyState<T>,
    start: &BranchPoint<T>,
    settings: &ContinuationSettings<T>,
    branch: &mut Branch<T>,
) -> Result<()> {
    let w = settings.weight(&problem.grid);
    let n = start.state.len();
    let mut current = start.clone();
    if settings.direction < 0 {
        current.tangent.iter_mut().for_each(|t| *t = -*t);
    }
    branch.points.push(current.clone());
    let mut step = settings.initial_step;
    let mut easy = 0usize;

    while branch.points.len() < settings.max_points {
        let corrected = arclength_correct(problem, &current.state, current.mu, &current.tangent, step, settings);
        let accepted = match corrected {
            Ok(c) => {
                let dist = {
                    let mut d: Vec<T> = c.state.values.iter().zip(&current.state.values).map(|(&a, &b)| a - b).collect();
                    d.push(c.mu - current.mu);
                    wdot(w, &d, &d).sqrt()
                };
                if dist <= T::lit(2.0) * step {
                    let tangent = tangent_at(problem, &c.state, c.mu, &current.tangent, w)?;
                    if wdot(w, &tangent, &current.tangent) >= T::lit(0.5) {
                        Some((c, tangent))
                    } else {
                        None
                    }
                } else {
                    None
                }
            }
            Err(Error::NewtonFailure { .. }) | Err(Error::LinearSolve(_)) => None,
            Err(e) => return Err(e),
        };

        let Some((c, tangent)) = accepted else {
            step = step / T::lit(2.0);
            easy = 0;
            if step < settings.min_step {
                return Err(Error::ContinuationStall { mu: current.mu.to_f64_lossy(), step: step.to_f64_lossy() });
            }
            continue;
        };

        if c.iterations <= 3 {
            easy += 1;
            if easy >= settings.easy_streak {
                step = (step * T::lit(2.0)).min(settings.max_step);
                easy = 0;
            }
        } else {
            easy = 0;
        }

        let (next, _) = make_point(problem, c.state, c.mu, tangent, PointKind::Regular, settings)?;
        if next.mu < settings.mu_min || next.mu > settings.mu_max {
            branch.stop_reason = Some(StopReason::ParameterBound);
            return Ok(());
        }

        if let Some(kind) = classify(&current, &next) {
            match locate_between(problem, &current, &next, kind, settings) {
                Ok(sp) => {
                    log::info!("{}: {} at mu = {}", branch.label, kind, sp.mu);
                    branch.points.push(sp);
                }
                Err(e) => log::warn!("{}: could not refine {} near mu = {}: {e}", branch.label, kind, next.mu),
            }
        }
        debug_assert_eq!(next.state.len(), n);
        branch.points.push(next.clone());
        current = next;
    }
    branch.stop_reason = Some(StopReason::MaxPoints);
    Ok(())
}

fn classify<T: Real>(left: &BranchPoint<T>, right: &BranchPoint<T>) -> Option<PointKind> {
    let (a, b) = (left.tangent_mu(), right.tangent_mu());
    if a != T::zero() && b != T::zero() && a.signum() != b.signum() {
        Some(PointKind::Fold)
    } else if left.unstable_count != right.unstable_count {
        Some(PointKind::BranchPoint)
    } else {
        None
    }
}

/// Refines the singular point bracketed by `branch.points[bracket]` and
/// `branch.points[bracket + 1]`.
pub fn locate_singularity<T: Real>(
    problem: &SteadyState<T>,
    branch: &Branch<T>,
    bracket: usize,
    settings: &ContinuationSettings<T>,
) -> Result<BranchPoint<T>> {
    let (left, right) = match (branch.points.get(bracket), branch.points.get(bracket + 1)) {
        (Some(l), Some(r)) => (l, r),
        _ => return Err(Error::InvalidArgument(format!("bracket {bracket} outside the branch"))),
    };
    let kind = classify(left, right)
        .ok_or_else(|| Error::InvalidArgument("bracket has no test-function sign change".into()))?;
    locate_between(problem, left, right, kind, settings)
}

fn locate_between<T: Real>(
    problem: &SteadyState<T>,
    left: &BranchPoint<T>,
    right: &BranchPoint<T>,
    kind: PointKind,
    settings: &ContinuationSettings<T>,
) -> Result<BranchPoint<T>> {
    let w = settings.weight(&problem.grid);
    let n = left.state.len();
    let mut diff: Vec<T> = right.state.values.iter().zip(&left.state.values).map(|(&a, &b)| a - b).collect();
    diff.push(right.mu - left.mu);
    let span = wdot(w, &diff, &left.tangent);
    let eig_index = left.unstable_count.min(right.unstable_count);

    let test = |p: &BranchPoint<T>| -> T {
        match kind {
            PointKind::Fold => p.tangent_mu(),
            _ => p.leading_eigs.get(eig_index).copied().unwrap_or(T::nan()),
        }
    };
    let f_left = test(left);
    let f_right = test(right);
    if !(f_left.signum() != f_right.signum()) || f_left == T::zero() || f_right == T::zero() {
        return Err(Error::InvalidArgument(format!("{kind} test function does not change sign on the bracket")));
    }

    let (mut lo, mut hi) = (T::zero(), span);
    let mut best: Option<BranchPoint<T>> = None;
    for _ in 0..80 {
        let mid = (lo + hi) / T::lit(2.0);
        let c = arclength_correct(problem, &left.state, left.mu, &left.tangent, mid, settings)?;
        let tangent = tangent_at(problem, &c.state, c.mu, &left.tangent, w)?;
        let (p, _) = make_point(problem, c.state, c.mu, tangent, kind, settings)?;
        let f = test(&p);
        let done = f.abs() <= settings.locate_tol || (hi - lo).abs() <= T::lit(1e-13) * span.abs().max(T::one());
        if f.signum() == f_left.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
        best = Some(p);
        if done {
            break;
        }
    }
    let p = best.expect("at least one bisection step");
    debug_assert_eq!(p.state.len(), n);
    Ok(p)
}

/// Result of a branch switch.
#[derive(Debug, Clone)]
pub struct BranchSwitch<T> {
    pub point: BranchPoint<T>,
    /// Unit (weighted) null vector used for the kick.
    pub null_vector: Vec<T>,
    /// `false` when the corrector returned to the original branch.
    pub switched: bool,
}

/// Steps off a branch point along the Jacobian's null vector.
///
/// The predictor `p* + kick * psi` is corrected on the hyperplane
/// `<psi, p - p*> = kick` with `mu` free, which lands on the bifurcating
/// branch. The returned point's tangent points away from the original
/// branch.
pub fn switch_branch<T: Real>(
    problem: &SteadyState<T>,
    bp: &BranchPoint<T>,
    settings: &ContinuationSettings<T>,
) -> Result<BranchSwitch<T>> {
    if bp.kind != PointKind::BranchPoint {
        return Err(Error::InvalidArgument(format!("switch_branch needs a branch point, got {}", bp.kind)));
    }
    let w = settings.weight(&problem.grid);
    let n = bp.state.len();
    let a = problem.jacobian(&bp.state, bp.mu)?;
    let eig = leading_eigenpairs(&a, &settings.eigen())?;
    let mut order: Vec<usize> = (0..eig.values.len()).collect();
    order.sort_by(|&i, &j| eig.values[i].abs().partial_cmp(&eig.values[j].abs()).unwrap());
    let near = order[0];
    if let Some(&next) = order.get(1) {
        if eig.values[near].abs() >= T::lit(0.1) * eig.values[next].abs() {
            return Err(Error::Singularity(format!(
                "critical eigenvalue {} is not isolated (next {})",
                eig.values[near], eig.values[next]
            )));
        }
    }
    let (_, mut psi) = inverse_iteration(&a, eig.values[near], &eig.vectors[near], 1e-10)?;
    let pn = (w * crate::scalar::dot(&psi, &psi)).sqrt();
    psi.iter_mut().for_each(|v| *v /= pn);
    // Deterministic sign: largest component positive.
    let imax = (0..n).max_by(|&i, &j| psi[i].abs().partial_cmp(&psi[j].abs()).unwrap()).unwrap();
    if psi[imax] < T::zero() {
        psi.iter_mut().for_each(|v| *v = -*v);
    }

    let mut direction = psi.clone();
    direction.push(T::zero());
    let kick = settings.switch_kick;
    let c = arclength_correct(problem, &bp.state, bp.mu, &direction, kick, settings)
        .map_err(|e| Error::Singularity(format!("branch switch corrector failed: {e}")))?;
    let tangent = if kick == T::zero() {
        bp.tangent.clone()
    } else {
        tangent_at(problem, &c.state, c.mu, &direction, w)?
    };
    let dist = {
        let d: Vec<T> = c.state.values.iter().zip(&bp.state.values).map(|(&x, &y)| x - y).collect();
        (w * crate::scalar::dot(&d, &d)).sqrt()
    };
    let switched = kick != T::zero() && dist > T::lit(0.5) * kick.abs();
    let (point, _) = make_point(problem, c.state, c.mu, tangent, PointKind::Regular, settings)?;
    Ok(BranchSwitch { point, null_vector: psi, switched })
}

/// `|residual|_inf` of a stored point, recomputed from scratch.
pub fn recheck_residual<T: Real>(problem: &SteadyState<T>, p: &BranchPoint<T>) -> Result<T> {
    Ok(norm_inf(&problem.residual(&p.state, p.mu)?.values))
}
