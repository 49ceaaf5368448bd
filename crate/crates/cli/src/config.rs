//! TOML run configuration.
//!
//! Every block has defaults except the ones a run kind needs explicitly
//! (`[[noise]]` for covariance runs, `[mc]`, `[fit]`, `solver.methods`).
//! Unknown keys are rejected so typos surface as errors.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use cqac::analysis::NormKind;
use cqac::detcont::ContinuationSettings;
use cqac::grid::Grid2D;
use cqac::krylov::KrylovMethod;
use cqac::lyapunov::LinearSolverConfig;
use cqac::mc::{DriftModel, McSettings};
use cqac::noise::{GKind, NoiseSpec, PhiRule};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("invalid value for `{key}`: {message}")]
    Invalid { key: String, message: String },
    #[error("run kind `{kind}` requires the `{key}` block")]
    Missing { kind: RunKind, key: &'static str },
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.into(), message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunKind {
    DetContinue,
    CovContinue,
    McValidate,
    FitScaling,
    SolverBench,
}

impl std::fmt::Display for RunKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RunKind::DetContinue => "det-continue",
            RunKind::CovContinue => "cov-continue",
            RunKind::McValidate => "mc-validate",
            RunKind::FitScaling => "fit-scaling",
            RunKind::SolverBench => "solver-bench",
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub kind: RunKind,
    #[serde(default)]
    pub output: OutputBlock,
    #[serde(default)]
    pub grid: GridBlock,
    #[serde(default)]
    pub continuation: ContinuationBlock,
    #[serde(default)]
    pub noise: Vec<NoiseBlock>,
    #[serde(default)]
    pub solver: SolverBlock,
    pub mc: Option<McBlock>,
    pub fit: Option<FitBlock>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputBlock {
    pub dir: PathBuf,
    /// Leave wall-clock columns empty so reruns give byte-identical CSVs.
    pub deterministic: bool,
    /// Dump `diag(V)` surfaces for every solved point.
    pub surfaces: bool,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self { dir: PathBuf::from("cqac-out"), deterministic: false, surfaces: false }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridBlock {
    #[serde(rename = "Lx")]
    pub lx: f64,
    #[serde(rename = "Ly")]
    pub ly: f64,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
}

impl Default for GridBlock {
    fn default() -> Self {
        Self { lx: 1.0, ly: 0.9, m: 50, n: 45 }
    }
}

/// `gamma0` is the trivial branch; `gammaN` bifurcates at its N-th branch point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BranchSel(pub usize);

impl BranchSel {
    pub fn label(&self) -> String {
        format!("gamma{}", self.0)
    }
}

impl FromStr for BranchSel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        s.strip_prefix("gamma")
            .and_then(|n| n.parse().ok())
            .map(BranchSel)
            .ok_or_else(|| format!("expected `gamma<N>`, got `{s}`"))
    }
}

impl Serialize for BranchSel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.label())
    }
}

impl<'de> Deserialize<'de> for BranchSel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContinuationBlock {
    pub initial_step: f64,
    pub min_step: f64,
    pub max_step: f64,
    pub newton_tol: f64,
    pub max_newton_iter: usize,
    pub max_points: usize,
    pub tracked_eigs: usize,
    pub mu_min: f64,
    pub mu_max: f64,
    pub switch_kick: f64,
    /// Branches written by det-continue.
    pub branches: Vec<BranchSel>,
    /// Branch used by the covariance, MC, fit and bench runs.
    pub branch: BranchSel,
}

impl Default for ContinuationBlock {
    fn default() -> Self {
        let d = ContinuationSettings::<f64>::default();
        Self {
            initial_step: d.initial_step,
            min_step: d.min_step,
            max_step: d.max_step,
            newton_tol: d.newton_tol,
            max_newton_iter: d.max_newton_iter,
            max_points: d.max_points,
            tracked_eigs: d.tracked_eigs,
            mu_min: d.mu_min,
            mu_max: d.mu_max,
            switch_kick: d.switch_kick,
            branches: (0..4).map(BranchSel).collect(),
            branch: BranchSel(0),
        }
    }
}

impl ContinuationBlock {
    pub fn settings(&self) -> ContinuationSettings<f64> {
        ContinuationSettings {
            initial_step: self.initial_step,
            min_step: self.min_step,
            max_step: self.max_step,
            newton_tol: self.newton_tol,
            max_newton_iter: self.max_newton_iter,
            max_points: self.max_points,
            tracked_eigs: self.tracked_eigs,
            mu_min: self.mu_min,
            mu_max: self.mu_max,
            switch_kick: self.switch_kick,
            ..ContinuationSettings::default()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseBlock {
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default = "default_sigma")]
    pub sigma_tilde: f64,
    #[serde(default = "default_phi")]
    pub phi_rule: PhiRule,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(default = "default_g")]
    pub g_kind: GKind,
}

fn default_sigma() -> f64 {
    5.0
}
fn default_phi() -> PhiRule {
    PhiRule::LinearK
}
fn default_g() -> GKind {
    GKind::Additive
}

impl NoiseBlock {
    pub fn label(&self, i: usize) -> String {
        self.label.clone().unwrap_or_else(|| {
            let g = serde_json::to_value(self.g_kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
            format!("noise{i}_K{}_{g}", self.k)
        })
    }

    pub fn spec(&self, grid: &Grid2D<f64>) -> cqac::Result<NoiseSpec<f64>> {
        NoiseSpec::from_rule(grid, self.sigma_tilde, self.phi_rule, self.k, self.g_kind)
    }
}

/// A solver written as `bicgstab`, `qmr`, `gmres` or `gmres(<restart>)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolverName {
    pub method: KrylovMethod,
    pub restart: Option<usize>,
}

impl FromStr for SolverName {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if let Some(inner) = s.strip_prefix("gmres(").and_then(|r| r.strip_suffix(')')) {
            let restart = inner.trim().parse().map_err(|_| format!("bad restart length in `{s}`"))?;
            return Ok(Self { method: KrylovMethod::Gmres, restart: Some(restart) });
        }
        let method = s.parse::<KrylovMethod>().map_err(|e| e.to_string())?;
        Ok(Self { method, restart: None })
    }
}

impl std::fmt::Display for SolverName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.restart {
            Some(r) => write!(f, "{}({r})", self.method),
            None => write!(f, "{}", self.method),
        }
    }
}

impl Serialize for SolverName {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for SolverName {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverBlock {
    pub method: SolverName,
    pub tol: f64,
    pub maxit: usize,
    pub gmres_restart: usize,
    pub max_basis_mib: u64,
    /// Solvers compared by solver-bench.
    pub methods: Vec<SolverName>,
}

impl Default for SolverBlock {
    fn default() -> Self {
        let d = LinearSolverConfig::default();
        Self {
            method: SolverName { method: d.method, restart: None },
            tol: d.tol,
            maxit: d.maxit,
            gmres_restart: d.gmres_restart,
            max_basis_mib: d.max_basis_bytes >> 20,
            methods: Vec::new(),
        }
    }
}

impl SolverBlock {
    pub fn config_for(&self, name: SolverName) -> LinearSolverConfig {
        LinearSolverConfig {
            method: name.method,
            tol: self.tol,
            maxit: self.maxit,
            gmres_restart: name.restart.unwrap_or(self.gmres_restart),
            max_basis_bytes: self.max_basis_mib << 20,
        }
    }

    pub fn config(&self) -> LinearSolverConfig {
        self.config_for(self.method)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McBlock {
    pub mu: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(rename = "T", default = "default_t")]
    pub t_end: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_paths")]
    pub paths: u64,
    #[serde(default)]
    pub probe: Option<usize>,
    #[serde(default = "default_stride")]
    pub record_stride: usize,
    #[serde(default = "default_drift")]
    pub drift: DriftModel,
    #[serde(default = "default_transient")]
    pub transient_fraction: f64,
}

fn default_dt() -> f64 {
    1e-5
}
fn default_t() -> f64 {
    1.0
}
fn default_paths() -> u64 {
    1
}
fn default_stride() -> usize {
    10
}
fn default_drift() -> DriftModel {
    DriftModel::Nonlinear
}
fn default_transient() -> f64 {
    0.1
}

impl McBlock {
    pub fn settings(&self) -> McSettings<f64> {
        McSettings {
            dt: self.dt,
            t_end: self.t_end,
            seed: self.seed,
            path: 0,
            probe: self.probe,
            record_stride: self.record_stride,
            drift: self.drift,
            transient_fraction: self.transient_fraction,
            ..McSettings::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Critical {
    BranchPoint,
    Fold,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitBlock {
    pub critical: Critical,
    /// Absolute `[lo, hi]`; defaults to `[mu_c - 0.4, mu_c)` for branch
    /// points and `(mu_c, mu_c + 0.1]` for folds.
    #[serde(default)]
    pub window: Option<[f64; 2]>,
    #[serde(default = "default_exclude")]
    pub exclude_nearest: usize,
    #[serde(default = "default_norm")]
    pub norm: NormKind,
}

fn default_exclude() -> usize {
    2
}
fn default_norm() -> NormKind {
    NormKind::MaxNorm
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        Self::from_toml(&text)
    }

    pub fn grid(&self) -> Grid2D<f64> {
        Grid2D::new(self.grid.lx, self.grid.ly, self.grid.m, self.grid.n).expect("validated grid")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let g = &self.grid;
        if !(g.lx > 0.0 && g.lx.is_finite()) {
            return Err(invalid("grid.Lx", "must be positive"));
        }
        if !(g.ly > 0.0 && g.ly.is_finite()) {
            return Err(invalid("grid.Ly", "must be positive"));
        }
        if g.m < 2 {
            return Err(invalid("grid.M", "must be at least 2"));
        }
        if g.n < 2 {
            return Err(invalid("grid.N", "must be at least 2"));
        }

        let c = &self.continuation;
        if !(c.min_step > 0.0) {
            return Err(invalid("continuation.min_step", "must be positive"));
        }
        if !(c.initial_step >= c.min_step) {
            return Err(invalid("continuation.initial_step", "must be at least min_step"));
        }
        if !(c.max_step >= c.initial_step) {
            return Err(invalid("continuation.max_step", "must be at least initial_step"));
        }
        if !(c.newton_tol > 0.0) {
            return Err(invalid("continuation.newton_tol", "must be positive"));
        }
        if c.max_newton_iter == 0 {
            return Err(invalid("continuation.max_newton_iter", "must be at least 1"));
        }
        if c.tracked_eigs == 0 {
            return Err(invalid("continuation.tracked_eigs", "must be at least 1"));
        }
        if !(c.mu_min < c.mu_max) {
            return Err(invalid("continuation.mu_max", "must exceed mu_min"));
        }
        if c.settings().validate().is_err() {
            return Err(invalid("continuation", "inconsistent settings"));
        }

        for (i, n) in self.noise.iter().enumerate() {
            if !(n.sigma_tilde >= 0.0 && n.sigma_tilde.is_finite()) {
                return Err(invalid(&format!("noise[{i}].sigma_tilde"), "must be non-negative"));
            }
            if n.k == 0 {
                return Err(invalid(&format!("noise[{i}].K"), "must be at least 1"));
            }
            if n.k > (g.m - 1) * (g.n - 1) {
                return Err(invalid(&format!("noise[{i}].K"), "exceeds the number of grid modes"));
            }
        }

        let s = &self.solver;
        if !(s.tol > 0.0) {
            return Err(invalid("solver.tol", "must be positive"));
        }
        if s.maxit == 0 {
            return Err(invalid("solver.maxit", "must be at least 1"));
        }

        if let Some(m) = &self.mc {
            if !(m.dt > 0.0) {
                return Err(invalid("mc.dt", "must be positive"));
            }
            if !(m.t_end > m.dt) {
                return Err(invalid("mc.T", "must exceed dt"));
            }
            if m.paths == 0 {
                return Err(invalid("mc.paths", "must be at least 1"));
            }
            if m.record_stride == 0 {
                return Err(invalid("mc.record_stride", "must be at least 1"));
            }
            if !(0.0..1.0).contains(&m.transient_fraction) {
                return Err(invalid("mc.transient_fraction", "must lie in [0, 1)"));
            }
            if m.probe.is_some_and(|p| p >= (g.m - 1) * (g.n - 1)) {
                return Err(invalid("mc.probe", "outside the grid"));
            }
        }
        if let Some(f) = &self.fit {
            if let Some([lo, hi]) = f.window {
                if !(lo < hi) {
                    return Err(invalid("fit.window", "needs lo < hi"));
                }
            }
        }

        let needs_noise = matches!(self.kind, RunKind::CovContinue | RunKind::McValidate | RunKind::FitScaling | RunKind::SolverBench);
        if needs_noise && self.noise.is_empty() {
            return Err(ConfigError::Missing { kind: self.kind, key: "noise" });
        }
        match self.kind {
            RunKind::McValidate if self.mc.is_none() => Err(ConfigError::Missing { kind: self.kind, key: "mc" }),
            RunKind::FitScaling if self.fit.is_none() => Err(ConfigError::Missing { kind: self.kind, key: "fit" }),
            RunKind::SolverBench if self.solver.methods.is_empty() => {
                Err(ConfigError::Missing { kind: self.kind, key: "solver.methods" })
            }
            RunKind::DetContinue if c.branches.is_empty() => Err(invalid("continuation.branches", "must not be empty")),
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = RunConfig::from_toml("kind = \"det-continue\"").unwrap();
        assert_eq!((cfg.grid.m, cfg.grid.n), (50, 45));
        assert_eq!(cfg.continuation.branches.len(), 4);
        assert_eq!(cfg.solver.config(), LinearSolverConfig::default());
    }

    #[test]
    fn phi_rules_parse() {
        let cfg = RunConfig::from_toml(
            r#"
            kind = "cov-continue"
            [[noise]]
            K = 11
            phi_rule = { affine = { a = -0.4, b = 0.4 } }
            [[noise]]
            K = 2
            g_kind = "quad_sup"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.noise[0].phi_rule, PhiRule::Affine { a: -0.4, b: 0.4 });
        assert_eq!(cfg.noise[1].phi_rule, PhiRule::LinearK);
        assert_eq!(cfg.noise[1].g_kind, GKind::QuadSup);
    }

    #[test]
    fn solver_names() {
        assert_eq!("gmres(10)".parse::<SolverName>().unwrap(), SolverName { method: KrylovMethod::Gmres, restart: Some(10) });
        assert_eq!("qmr".parse::<SolverName>().unwrap().to_string(), "qmr");
        assert!("gmres(x)".parse::<SolverName>().is_err());
        assert!("cg".parse::<SolverName>().is_err());
    }

    #[test]
    fn errors_name_the_key() {
        let e = RunConfig::from_toml("kind = \"det-continue\"\n[grid]\nM = 1").unwrap_err();
        assert!(e.to_string().contains("grid.M"), "{e}");
        let e = RunConfig::from_toml("kind = \"det-continue\"\n[grid]\nMM = 4").unwrap_err();
        assert!(e.to_string().contains("MM"), "{e}");
        let e = RunConfig::from_toml("kind = \"cov-continue\"").unwrap_err();
        assert!(e.to_string().contains("noise"), "{e}");
        let e = RunConfig::from_toml("kind = \"cov-continue\"\n[[noise]]\nK = 0").unwrap_err();
        assert!(e.to_string().contains("noise[0].K"), "{e}");
        let e = RunConfig::from_toml("kind = \"det-continue\"\n[continuation]\nbranch = \"delta1\"").unwrap_err();
        assert!(e.to_string().contains("gamma"), "{e}");
    }
}
