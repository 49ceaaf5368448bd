//! Euler-Maruyama sample paths of `dp = theta(p; mu) dt + sigma(p) dbeta`.
//!
//! Increments come from ChaCha streams keyed by `(seed, path, mode)`, so a
//! path is reproducible on its own and changing `K` or the number of paths
//! never shifts the draws of another mode or path.

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::analysis::CovBounds;
use crate::detcont::SteadyState;
use crate::error::{Error, Result};
use crate::grid::{Field, SparseOperator};
use crate::noise::{eigenfunction_samples, eigenvalues, GKind, NoiseSpec};
use crate::scalar::Real;

/// Which drift drives the path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftModel {
    /// Full nonlinear residual.
    Nonlinear,
    /// `A(p0) (p - p0)`: the Ornstein-Uhlenbeck process around the start
    /// state, whose stationary covariance is the Lyapunov solution.
    Linearized,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McSettings<T> {
    pub dt: T,
    pub t_end: T,
    pub seed: u64,
    pub path: u64,
    /// Node index traced over time; `None` picks the node nearest the centre.
    pub probe: Option<usize>,
    /// Record every `record_stride`-th step.
    pub record_stride: usize,
    pub drift: DriftModel,
    /// Fraction of `[0, T]` discarded as transient.
    pub transient_fraction: T,
    /// `|p|_inf` above which the path is declared divergent.
    pub overflow_guard: T,
}

impl<T: Real> Default for McSettings<T> {
    fn default() -> Self {
        Self {
            dt: T::lit(1e-5),
            t_end: T::one(),
            seed: 0,
            path: 0,
            probe: None,
            record_stride: 1,
            drift: DriftModel::Nonlinear,
            transient_fraction: T::lit(0.1),
            overflow_guard: T::lit(1e6),
        }
    }
}

impl<T: Real> McSettings<T> {
    pub fn transient_cut(&self) -> T {
        self.transient_fraction * self.t_end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathStats<T> {
    pub times: Vec<T>,
    pub probe: Vec<T>,
    pub domain_max: Vec<T>,
    pub domain_min: Vec<T>,
    pub probe_index: usize,
    pub seed: u64,
    pub path: u64,
    pub dt: T,
    pub t_end: T,
    pub final_state: Field<T>,
}

impl<T: Real> PathStats<T> {
    fn retained(&self, transient_cut: T) -> impl Iterator<Item = usize> + '_ {
        (0..self.times.len()).filter(move |&i| self.times[i] >= transient_cut)
    }

    /// Sample variance of the probe trace after the transient.
    pub fn stationary_variance(&self, transient_cut: T) -> T {
        let xs: Vec<T> = self.retained(transient_cut).map(|i| self.probe[i]).collect();
        if xs.len() < 2 {
            return T::nan();
        }
        let n = T::from_usize_lossy(xs.len());
        let mean = xs.iter().copied().sum::<T>() / n;
        xs.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / (n - T::one())
    }

    /// `t, probe, domain_max, domain_min`
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "probe", "domain_max", "domain_min"])?;
        for i in 0..self.times.len() {
            w.write_record([
                format!("{:.8e}", self.times[i].to_f64_lossy()),
                format!("{:.12e}", self.probe[i].to_f64_lossy()),
                format!("{:.12e}", self.domain_max[i].to_f64_lossy()),
                format!("{:.12e}", self.domain_min[i].to_f64_lossy()),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McSummary {
    pub seed: u64,
    pub path: u64,
    pub dt: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
    pub exit_fraction: Option<f64>,
    pub stationary_variance_estimate: f64,
}

impl McSummary {
    pub fn new<T: Real>(stats: &PathStats<T>, transient_cut: T, bounds: Option<&CovBounds<T>>) -> Self {
        Self {
            seed: stats.seed,
            path: stats.path,
            dt: stats.dt.to_f64_lossy(),
            t_end: stats.t_end.to_f64_lossy(),
            exit_fraction: bounds.map(|b| containment_check(stats, b, transient_cut).to_f64_lossy()),
            stationary_variance_estimate: stats.stationary_variance(transient_cut).to_f64_lossy(),
        }
    }
}

/// Largest `dt` for which explicit Euler is stable on the Laplacian alone.
pub fn explicit_dt_bound<T: Real>(problem: &SteadyState<T>) -> T {
    let (hx, hy) = (problem.grid().hx(), problem.grid().hy());
    let (hx2, hy2) = (hx * hx, hy * hy);
    hx2 * hy2 / (T::lit(2.0) * (hx2 + hy2))
}

fn mode_stream(seed: u64, path: u64, mode: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((path << 16) | mode as u64);
    rng
}

enum Drift<T> {
    Nonlinear,
    Linear { a: SparseOperator<T>, center: Vec<T> },
}

pub fn euler_maruyama<T: Real>(
    problem: &SteadyState<T>,
    p0: &Field<T>,
    mu: T,
    spec: &NoiseSpec<T>,
    settings: &McSettings<T>,
) -> Result<PathStats<T>> {
    let grid = problem.grid();
    grid.check_field(p0)?;
    spec.validate()?;
    let dt = settings.dt;
    if !(dt > T::zero()) || !(settings.t_end > T::zero()) || settings.record_stride == 0 {
        return Err(Error::InvalidArgument("need dt > 0, T > 0 and record_stride >= 1".into()));
    }
    let bound = explicit_dt_bound(problem);
    if dt > bound {
        log::warn!("dt = {dt} exceeds the explicit stability bound {bound}");
    }
    let j = grid.len();
    let probe = settings.probe.unwrap_or_else(|| grid.center_index());
    if probe >= j {
        return Err(Error::InvalidArgument(format!("probe index {probe} outside 0..{j}")));
    }

    // sqrt(lambda_k) e_k, node-major so one node's K weights are contiguous.
    let lambda = eigenvalues(spec);
    let k = spec.k();
    let mut weights = vec![T::zero(); j * k];
    for (col, (&(k1, k2), &lam)) in spec.modes.iter().zip(&lambda).enumerate() {
        let e = eigenfunction_samples(k1, k2, grid);
        let s = lam.sqrt();
        for node in 0..j {
            weights[node * k + col] = s * e.values[node];
        }
    }
    let noise_free = lambda.iter().all(|&l| l == T::zero());
    let mut streams: Vec<ChaCha8Rng> = (0..k).map(|m| mode_stream(settings.seed, settings.path, m)).collect();

    let drift = match settings.drift {
        DriftModel::Nonlinear => Drift::Nonlinear,
        DriftModel::Linearized => Drift::Linear { a: problem.jacobian(p0, mu)?, center: p0.values.clone() },
    };

    let steps = (settings.t_end / dt).round().to_usize().unwrap_or(0);
    let sqrt_dt = dt.sqrt();
    let mut p = p0.clone();
    let mut f = vec![T::zero(); j];
    let mut dw = vec![T::zero(); k];
    let mut shifted = vec![T::zero(); j];

    let cap = steps / settings.record_stride + 2;
    let mut stats = PathStats {
        times: Vec::with_capacity(cap),
        probe: Vec::with_capacity(cap),
        domain_max: Vec::with_capacity(cap),
        domain_min: Vec::with_capacity(cap),
        probe_index: probe,
        seed: settings.seed,
        path: settings.path,
        dt,
        t_end: settings.t_end,
        final_state: p0.clone(),
    };
    let record = |stats: &mut PathStats<T>, t: T, p: &Field<T>| {
        let (lo, hi) = p.values.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        stats.times.push(t);
        stats.probe.push(p.values[probe]);
        stats.domain_max.push(hi);
        stats.domain_min.push(lo);
    };
    record(&mut stats, T::zero(), &p);

    for step in 1..=steps {
        match &drift {
            Drift::Nonlinear => {
                let r = problem.residual(&p, mu)?;
                f.copy_from_slice(&r.values);
            }
            Drift::Linear { a, center } => {
                for i in 0..j {
                    shifted[i] = p.values[i] - center[i];
                }
                a.apply(&shifted, &mut f);
            }
        }
        if !noise_free {
            for (m, rng) in streams.iter_mut().enumerate() {
                let z: f64 = StandardNormal.sample(rng);
                dw[m] = T::lit(z) * sqrt_dt;
            }
        }
        // G(p) is evaluated at the current state for multiplicative noise.
        let sup = match spec.g_kind {
            GKind::Additive => T::zero(),
            _ => p.norm_inf(),
        };
        for i in 0..j {
            let mut incr = f[i] * dt;
            if !noise_free {
                let w = &weights[i * k..(i + 1) * k];
                let mut s = T::zero();
                for m in 0..k {
                    s += w[m] * dw[m];
                }
                let g = match spec.g_kind {
                    GKind::Additive => T::one(),
                    GKind::QuadSup => T::lit(0.5) * sup * sup,
                    GKind::SupShift => sup - p.values[i],
                };
                incr += g * s;
            }
            p.values[i] += incr;
        }
        let t = T::from_usize_lossy(step) * dt;
        let big = p.norm_inf();
        if !big.is_finite() || big > settings.overflow_guard {
            return Err(Error::Divergence { time: t.to_f64_lossy(), norm: big.to_f64_lossy() });
        }
        if step % settings.record_stride == 0 {
            record(&mut stats, t, &p);
        }
    }
    stats.final_state = p;
    Ok(stats)
}

/// Fraction of retained samples at which the domain extrema leave
/// `[c_min, c_max]`.
pub fn containment_check<T: Real>(stats: &PathStats<T>, bounds: &CovBounds<T>, transient_cut: T) -> T {
    let mut total = 0usize;
    let mut out = 0usize;
    for i in stats.retained(transient_cut) {
        total += 1;
        if stats.domain_max[i] > bounds.c_max || stats.domain_min[i] < bounds.c_min {
            out += 1;
        }
    }
    if total == 0 {
        return T::zero();
    }
    T::from_usize_lossy(out) / T::from_usize_lossy(total)
}

/// Independent paths `0..paths` with the same seed.
pub fn run_ensemble<T: Real>(
    problem: &SteadyState<T>,
    p0: &Field<T>,
    mu: T,
    spec: &NoiseSpec<T>,
    settings: &McSettings<T>,
    paths: u64,
) -> Result<Vec<PathStats<T>>> {
    (0..paths)
        .map(|path| euler_maruyama(problem, p0, mu, spec, &McSettings { path, ..settings.clone() }))
        .collect()
}

/// Mean of the per-path stationary variances and its standard error.
pub fn ensemble_variance<T: Real>(paths: &[PathStats<T>], transient_cut: T) -> (f64, f64) {
    let v: Vec<f64> = paths.iter().map(|p| p.stationary_variance(transient_cut).to_f64_lossy()).collect();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
