//! Execution of each run kind. Numerical failures at single points are
//! written into the artifacts; a failed continuation writes its partial
//! branch and marks the run as failed.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use cqac::analysis::{cov_norms, fit_scaling, select_window, CovBounds};
use cqac::detcont::{continue_branch, start_point, switch_branch, Branch, BranchPoint, PointKind, SteadyState};
use cqac::grid::Field;
use cqac::lyapunov::{
    solve_lyapunov, write_covariance_csv, write_variance_surface, CovarianceContinuation, CovariancePoint,
    CovarianceRecord,
};
use cqac::mc::{containment_check, ensemble_variance, euler_maruyama, McSettings, McSummary};
use cqac::noise::assemble_b;
use serde::Serialize;
use serde_json::json;

use crate::config::{BranchSel, Critical, RunConfig, RunKind};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("output: {0}")]
    Output(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Output(e.to_string())
    }
}

impl From<cqac::Error> for RunError {
    fn from(e: cqac::Error) -> Self {
        match e {
            cqac::Error::Io(e) => RunError::Output(e.to_string()),
            cqac::Error::Csv(e) => RunError::Output(e.to_string()),
            e => RunError::Numerical(e.to_string()),
        }
    }
}

/// Writes artifacts plus a `<name>.meta.json` sidecar holding the resolved
/// config; timestamps only ever appear in sidecars.
struct Output<'a> {
    dir: PathBuf,
    cfg: &'a RunConfig,
    written: Vec<String>,
}

impl<'a> Output<'a> {
    fn new(cfg: &'a RunConfig) -> Result<Self, RunError> {
        std::fs::create_dir_all(&cfg.output.dir)
            .map_err(|e| RunError::Output(format!("cannot create {}: {e}", cfg.output.dir.display())))?;
        Ok(Self { dir: cfg.output.dir.clone(), cfg, written: Vec::new() })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn sidecar(&mut self, name: &str) -> Result<(), RunError> {
        let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let meta = json!({
            "artifact": name,
            "generated_at_unix": stamp,
            "cqac_version": env!("CARGO_PKG_VERSION"),
            "config": self.cfg,
        });
        std::fs::write(self.path(&format!("{name}.meta.json")), serde_json::to_string_pretty(&meta).unwrap())?;
        self.written.push(name.to_string());
        Ok(())
    }

    /// JSON artifacts embed the config directly.
    fn json<S: Serialize>(&mut self, name: &str, body: &S) -> Result<(), RunError> {
        let doc = json!({ "config": self.cfg, "result": body });
        std::fs::write(self.path(name), serde_json::to_string_pretty(&doc).unwrap())?;
        self.sidecar(name)
    }
}

/// Branches computed on demand; `gammaN` needs `gamma0` first.
struct Branches<'a> {
    cfg: &'a RunConfig,
    problem: SteadyState<f64>,
    done: BTreeMap<BranchSel, Result<Branch<f64>, (String, Branch<f64>)>>,
}

impl<'a> Branches<'a> {
    fn new(cfg: &'a RunConfig) -> Self {
        Self { cfg, problem: SteadyState::new(cfg.grid()), done: BTreeMap::new() }
    }

    fn get(&mut self, sel: BranchSel) -> &Result<Branch<f64>, (String, Branch<f64>)> {
        if !self.done.contains_key(&sel) {
            let r = self.compute(sel);
            self.done.insert(sel, r);
        }
        &self.done[&sel]
    }

    fn compute(&mut self, sel: BranchSel) -> Result<Branch<f64>, (String, Branch<f64>)> {
        let s = self.cfg.continuation.settings();
        let empty = |label: String| Branch { label, points: Vec::new(), settings: s.clone(), stop_reason: None };
        let label = sel.label();
        if sel.0 == 0 {
            let start = start_point(&self.problem, Field::zeros(self.problem.grid()), s.mu_min, &s)
                .map_err(|e| (e.to_string(), empty(label.clone())))?;
            return continue_branch(&self.problem, &start, &label, &s).map_err(|f| (f.error.to_string(), f.partial));
        }
        let bp = match self.get(BranchSel(0)) {
            Ok(g0) | Err((_, g0)) => g0.all_of(PointKind::BranchPoint).get(sel.0 - 1).map(|p| (*p).clone()),
        };
        let Some(bp) = bp else {
            return Err((format!("the trivial branch has fewer than {} branch points", sel.0), empty(label)));
        };
        let sw = switch_branch(&self.problem, &bp, &s).map_err(|e| (e.to_string(), empty(label.clone())))?;
        if !sw.switched {
            return Err((format!("branch switch at mu = {} returned to the trivial branch", bp.mu), empty(label)));
        }
        continue_branch(&self.problem, &sw.point, &label, &s).map_err(|f| (f.error.to_string(), f.partial))
    }

    /// Branch for covariance-type runs; a failed continuation is fatal there.
    fn require(&mut self, sel: BranchSel) -> Result<Branch<f64>, RunError> {
        match self.get(sel) {
            Ok(b) => Ok(b.clone()),
            Err((e, _)) => Err(RunError::Numerical(format!("continuation of {} failed: {e}", sel.label()))),
        }
    }
}

pub struct Report {
    pub artifacts: Vec<String>,
    /// Set when a continuation failed; partial artifacts were still written.
    pub failure: Option<String>,
}

pub fn run(cfg: &RunConfig) -> Result<Report, RunError> {
    let mut out = Output::new(cfg)?;
    let failure = match cfg.kind {
        RunKind::DetContinue => det_continue(cfg, &mut out)?,
        RunKind::CovContinue => cov_continue(cfg, &mut out)?,
        RunKind::McValidate => mc_validate(cfg, &mut out)?,
        RunKind::FitScaling => fit(cfg, &mut out)?,
        RunKind::SolverBench => bench(cfg, &mut out)?,
    };
    Ok(Report { artifacts: out.written, failure })
}

fn det_continue(cfg: &RunConfig, out: &mut Output) -> Result<Option<String>, RunError> {
    let mut branches = Branches::new(cfg);
    let grid = cfg.grid();
    let mut failures = Vec::new();
    let mut listing = Vec::new();
    let mut folds: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for &sel in &cfg.continuation.branches {
        let (branch, error) = match branches.get(sel) {
            Ok(b) => (b.clone(), None),
            Err((e, partial)) => (partial.clone(), Some(e.clone())),
        };
        let name = format!("branch_{}.csv", sel.label());
        branch.save_csv(&grid, out.path(&name))?;
        out.sidecar(&name)?;
        folds.insert(sel.label(), branch.all_of(PointKind::Fold).iter().map(|p| p.mu).collect());
        listing.push(json!({
            "label": sel.label(),
            "points": branch.points.len(),
            "stop_reason": branch.stop_reason,
            "error": error,
        }));
        if let Some(e) = error {
            failures.push(format!("{}: {e}", sel.label()));
        }
    }
    let branch_points: Vec<f64> = match branches.get(BranchSel(0)) {
        Ok(g0) | Err((_, g0)) => g0.all_of(PointKind::BranchPoint).iter().map(|p| p.mu).collect(),
    };
    let first_fold = |i: usize| folds.get(&format!("gamma{i}")).and_then(|f| f.first().copied());
    let regimes = match (first_fold(1), branch_points.first().copied(), first_fold(2), first_fold(3)) {
        (Some(f1), Some(b1), Some(f2), Some(f3)) => json!({
            "R0": [cfg.continuation.mu_min, f1],
            "R1": [f1, b1],
            "R2": [b1, f2],
            "R3": [f2, f3],
            "R4": [f3, cfg.continuation.mu_max],
        }),
        _ => serde_json::Value::Null,
    };
    out.json(
        "bifurcation_summary.json",
        &json!({
            "branch_points": branch_points,
            "folds": folds,
            "regimes": regimes,
            "branches": listing,
        }),
    )?;
    Ok((!failures.is_empty()).then(|| failures.join("; ")))
}

fn cov_continue(cfg: &RunConfig, out: &mut Output) -> Result<Option<String>, RunError> {
    let mut branches = Branches::new(cfg);
    let branch = branches.require(cfg.continuation.branch)?;
    let grid = cfg.grid();
    let solver = cfg.solver.config();
    let mut issues = Vec::new();
    for (i, nb) in cfg.noise.iter().enumerate() {
        let label = nb.label(i);
        let spec = nb.spec(&grid)?;
        let mut records = Vec::new();
        for p in CovarianceContinuation::new(&branches.problem, &branch, &spec, &solver) {
            match p {
                CovariancePoint::Solved { index, solution } => {
                    if cfg.output.surfaces {
                        let name = format!("surface_{label}_{index:04}.csv");
                        write_variance_surface(&grid, &solution.v, out.path(&name))?;
                        out.sidecar(&name)?;
                    }
                    records.push(CovarianceRecord::from_solution(index, &solution));
                }
                CovariancePoint::Skipped { .. } => {}
                CovariancePoint::Failed { index, mu, error } => {
                    issues.push(json!({ "index": index, "mu": mu, "error": error }));
                    records.push(failed_record(index, mu));
                }
            }
        }
        let name = format!("cov_{label}.csv");
        write_covariance_csv(&records, !cfg.output.deterministic, std::fs::File::create(out.path(&name))?)?;
        out.sidecar(&name)?;
    }
    if !issues.is_empty() {
        out.json("cov_failures.json", &issues)?;
    }
    Ok(None)
}

fn failed_record(index: usize, mu: f64) -> CovarianceRecord {
    CovarianceRecord {
        index,
        mu,
        cov_max_norm: f64::NAN,
        diag_l1: f64::NAN,
        diag_l2: f64::NAN,
        diag_linf: f64::NAN,
        iterations: 0,
        residual: f64::NAN,
        wall_time_s: f64::NAN,
        warm_started: false,
    }
}

fn nearest_stable(branch: &Branch<f64>, mu: f64) -> Option<&BranchPoint<f64>> {
    branch
        .points
        .iter()
        .filter(|p| p.stable && p.kind == PointKind::Regular)
        .min_by(|a, b| (a.mu - mu).abs().total_cmp(&(b.mu - mu).abs()))
}

fn mc_validate(cfg: &RunConfig, out: &mut Output) -> Result<Option<String>, RunError> {
    let mc = cfg.mc.as_ref().expect("validated");
    let mut branches = Branches::new(cfg);
    let branch = branches.require(cfg.continuation.branch)?;
    let point = nearest_stable(&branch, mc.mu)
        .ok_or_else(|| RunError::Numerical(format!("{} has no stable point", branch.label)))?
        .clone();
    let grid = cfg.grid();
    let spec = cfg.noise[0].spec(&grid)?;

    let b = assemble_b(&point.state, &spec, &grid)?;
    let a = branches.problem.jacobian(&point.state, point.mu)?;
    let (bounds, bounds_error) = match solve_lyapunov(&a, &b.b, &cfg.solver.config(), None) {
        Ok(s) => (Some(CovBounds::from_covariance(&s.v)), None),
        Err(e) => (None, Some(e.to_string())),
    };

    let base = mc.settings();
    let cut = base.transient_cut();
    let mut summaries = Vec::new();
    let mut paths = Vec::new();
    let mut errors = Vec::new();
    for path in 0..mc.paths {
        let s = McSettings { path, ..base.clone() };
        match euler_maruyama(&branches.problem, &point.state, point.mu, &spec, &s) {
            Ok(stats) => {
                let name = format!("path_{path:03}.csv");
                stats.save_csv(out.path(&name))?;
                out.sidecar(&name)?;
                summaries.push(McSummary::new(&stats, cut, bounds.as_ref()));
                paths.push(stats);
            }
            Err(e) => errors.push(json!({ "path": path, "error": e.to_string() })),
        }
    }
    let (variance, stderr) = if paths.is_empty() { (f64::NAN, f64::NAN) } else { ensemble_variance(&paths, cut) };
    let exit_fractions: Vec<f64> = match &bounds {
        Some(bd) => paths.iter().map(|p| containment_check(p, bd, cut)).collect(),
        None => Vec::new(),
    };
    out.json(
        "mc_summary.json",
        &json!({
            "mu": point.mu,
            "bounds": bounds,
            "bounds_error": bounds_error,
            "paths": summaries,
            "path_errors": errors,
            "mean_exit_fraction": if exit_fractions.is_empty() { None } else { Some(exit_fractions.iter().sum::<f64>() / exit_fractions.len() as f64) },
            "ensemble_variance": variance,
            "ensemble_variance_stderr": stderr,
        }),
    )?;
    Ok(None)
}

fn fit(cfg: &RunConfig, out: &mut Output) -> Result<Option<String>, RunError> {
    let fb = cfg.fit.as_ref().expect("validated");
    let mut branches = Branches::new(cfg);
    let branch = branches.require(cfg.continuation.branch)?;
    let kind = match fb.critical {
        Critical::BranchPoint => PointKind::BranchPoint,
        Critical::Fold => PointKind::Fold,
    };
    let Some(crit_idx) = branch.points.iter().position(|p| p.kind == kind) else {
        return Err(RunError::Numerical(format!("no {kind} on {}", branch.label)));
    };
    let mu_c = branch.points[crit_idx].mu;
    let [lo, hi] = fb.window.unwrap_or(match fb.critical {
        Critical::BranchPoint => [mu_c - 0.4, mu_c],
        Critical::Fold => [mu_c, mu_c + 0.1],
    });
    // Only points past a fold lie on the side the window refers to.
    let keep = |i: usize, p: &BranchPoint<f64>| {
        p.mu >= lo && p.mu <= hi && p.mu != mu_c && (fb.critical == Critical::BranchPoint || i > crit_idx)
    };
    let sub = Branch {
        points: branch.points.iter().enumerate().filter(|(i, p)| keep(*i, p)).map(|(_, p)| p.clone()).collect(),
        ..branch.clone()
    };
    let spec = cfg.noise[0].spec(&cfg.grid())?;
    let mut samples = Vec::new();
    for p in CovarianceContinuation::new(&branches.problem, &sub, &spec, &cfg.solver.config()) {
        if let CovariancePoint::Solved { solution, .. } = p {
            samples.push((solution.mu.unwrap_or(f64::NAN), cov_norms(&solution.v).get(fb.norm)));
        }
    }
    let window = select_window(&samples, mu_c, lo, hi, fb.exclude_nearest);
    let result = fit_scaling(&window, mu_c)?;
    out.json("scaling_fit.json", &json!({ "fit": result, "samples": samples }))?;
    Ok(None)
}

fn bench(cfg: &RunConfig, out: &mut Output) -> Result<Option<String>, RunError> {
    let mut branches = Branches::new(cfg);
    let branch = branches.require(cfg.continuation.branch)?;
    let spec = cfg.noise[0].spec(&cfg.grid())?;
    let name = "solver_bench.csv";
    let mut w = csv::Writer::from_path(out.path(name)).map_err(|e| RunError::Output(e.to_string()))?;
    w.write_record(["index", "mu", "solver", "iterations", "wall_time_s", "residual", "status"])
        .map_err(|e| RunError::Output(e.to_string()))?;
    for &method in &cfg.solver.methods {
        let solver = cfg.solver.config_for(method);
        for p in CovarianceContinuation::new(&branches.problem, &branch, &spec, &solver) {
            let row = match &p {
                CovariancePoint::Solved { index, solution } => [
                    index.to_string(),
                    format!("{:.12e}", solution.mu.unwrap_or(f64::NAN)),
                    solver.solver_id(),
                    solution.iterations.to_string(),
                    if cfg.output.deterministic { String::new() } else { format!("{:.6}", solution.wall_time_s) },
                    format!("{:.6e}", solution.residual),
                    "ok".into(),
                ],
                CovariancePoint::Failed { index, mu, error } => [
                    index.to_string(),
                    format!("{mu:.12e}"),
                    solver.solver_id(),
                    String::new(),
                    String::new(),
                    String::new(),
                    format!("failed: {error}"),
                ],
                CovariancePoint::Skipped { .. } => continue,
            };
            w.write_record(&row).map_err(|e| RunError::Output(e.to_string()))?;
        }
    }
    w.flush()?;
    out.sidecar(name)?;
    Ok(None)
}
