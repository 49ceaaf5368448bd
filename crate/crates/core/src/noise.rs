//! Truncated spectral Q-Wiener noise and the diffusion matrix `B`.
//!
//! `W(t) = sum_k sqrt(lambda_k) beta_k(t) e_k` with `lambda_k =
//! sigma_tilde * exp(-phi_k / 10)` and Dirichlet sine modes `e_k`. Column `k`
//! of `B` is `sqrt(lambda_k) G(u*) e_k` sampled at the interior nodes.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::grid::{Field, Grid2D};
use crate::scalar::Real;

/// How `phi_k` is generated for `k = 1..K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiRule {
    /// `phi_k = k`
    LinearK,
    /// `phi_k = a + b k`
    Affine { a: f64, b: f64 },
}

impl PhiRule {
    pub fn values<T: Real>(&self, k_max: usize) -> Vec<T> {
        (1..=k_max)
            .map(|k| match *self {
                PhiRule::LinearK => T::from_usize_lossy(k),
                PhiRule::Affine { a, b } => T::lit(a + b * k as f64),
            })
            .collect()
    }
}

/// State dependence `G(u*)` of the noise amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GKind {
    /// `G = 1`
    Additive,
    /// `G = |u*|_inf^2 / 2`
    QuadSup,
    /// `G = |u*|_inf - u*`, nodewise
    SupShift,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec<T> {
    pub sigma_tilde: T,
    pub phi: Vec<T>,
    pub g_kind: GKind,
    pub modes: Vec<(usize, usize)>,
}

impl<T: Real> NoiseSpec<T> {
    /// Spec with `K = phi.len()` modes ranked on `grid`'s domain.
    pub fn new(grid: &Grid2D<T>, sigma_tilde: T, phi: Vec<T>, g_kind: GKind) -> Result<Self> {
        let modes = rank_modes(grid, phi.len());
        let spec = Self { sigma_tilde, phi, g_kind, modes };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_rule(grid: &Grid2D<T>, sigma_tilde: T, rule: PhiRule, k: usize, g_kind: GKind) -> Result<Self> {
        Self::new(grid, sigma_tilde, rule.values(k), g_kind)
    }

    /// `sigma_tilde = 5`, `phi_k = k`, additive.
    pub fn default_additive(grid: &Grid2D<T>, k: usize) -> Result<Self> {
        Self::from_rule(grid, T::lit(5.0), PhiRule::LinearK, k, GKind::Additive)
    }

    pub fn k(&self) -> usize {
        self.phi.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.phi.is_empty() {
            return Err(Error::InvalidArgument("noise needs at least one mode".into()));
        }
        if !(self.sigma_tilde >= T::zero()) || !self.sigma_tilde.is_finite() {
            return Err(Error::InvalidArgument("sigma_tilde must be finite and non-negative".into()));
        }
        if self.phi.iter().any(|&p| !(p >= T::zero()) || !p.is_finite()) {
            return Err(Error::InvalidArgument("phi entries must be finite and non-negative".into()));
        }
        if self.phi.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidArgument("phi must be non-decreasing".into()));
        }
        if self.modes.len() != self.phi.len() {
            return Err(Error::DimensionMismatch { expected: self.phi.len(), got: self.modes.len() });
        }
        for (i, m) in self.modes.iter().enumerate() {
            if m.0 == 0 || m.1 == 0 || self.modes[..i].contains(m) {
                return Err(Error::InvalidArgument(format!("invalid or repeated mode {m:?}")));
            }
        }
        Ok(())
    }

    /// Same spec with `sigma_tilde` multiplied by `factor`.
    pub fn scaled(&self, factor: T) -> Self {
        Self { sigma_tilde: self.sigma_tilde * factor, ..self.clone() }
    }
}

/// `lambda_k = sigma_tilde * exp(-phi_k / 10)`.
pub fn eigenvalues<T: Real>(spec: &NoiseSpec<T>) -> Vec<T> {
    let tenth = T::lit(0.1);
    spec.phi.iter().map(|&p| spec.sigma_tilde * (-p * tenth).exp()).collect()
}

fn continuous_eigenvalue(lx: f64, ly: f64, k1: usize, k2: usize) -> f64 {
    let (a, b) = (k1 as f64, k2 as f64);
    PI * PI * (a * a / (4.0 * lx * lx) + b * b / (4.0 * ly * ly))
}

/// First `k` sine modes by increasing Dirichlet eigenvalue; ties go to the
/// smaller `k1`. Only modes the grid resolves (`k1 < M`, `k2 < N`) are
/// eligible; higher ones vanish or alias at the nodes.
pub fn rank_modes<T: Real>(grid: &Grid2D<T>, k: usize) -> Vec<(usize, usize)> {
    let (lx, ly) = (grid.lx().to_f64_lossy(), grid.ly().to_f64_lossy());
    let mut all: Vec<(f64, usize, usize)> = Vec::with_capacity(k * k);
    for k1 in 1..=k.min(grid.m() - 1) {
        for k2 in 1..=k.min(grid.n() - 1) {
            all.push((continuous_eigenvalue(lx, ly, k1, k2), k1, k2));
        }
    }
    all.sort_by(|a, b| {
        let tie = (a.0 - b.0).abs() <= 1e-12 * a.0.max(b.0);
        if tie {
            a.1.cmp(&b.1)
        } else {
            a.0.partial_cmp(&b.0).unwrap()
        }
    });
    all.into_iter().take(k).map(|(_, a, b)| (a, b)).collect()
}

/// `sin(pi k1 (x + Lx) / (2 Lx)) sin(pi k2 (y + Ly) / (2 Ly))` at the
/// interior nodes; these are exact eigenvectors of the five-point Laplacian.
pub fn eigenfunction_samples<T: Real>(k1: usize, k2: usize, grid: &Grid2D<T>) -> Field<T> {
    let (m_div, n_div) = (grid.m() as f64, grid.n() as f64);
    let values = (0..grid.len())
        .map(|j| {
            let (m, n) = grid.node(j);
            // (x_m + Lx) / (2 Lx) = m / M exactly.
            let sx = (PI * (k1 * m) as f64 / m_div).sin();
            let sy = (PI * (k2 * n) as f64 / n_div).sin();
            T::lit(sx * sy)
        })
        .collect();
    Field { values }
}

/// Noise amplitude `G(u*)`: a constant or one value per node.
#[derive(Debug, Clone, PartialEq)]
pub enum Amplitude<T> {
    Scalar(T),
    Nodal(Field<T>),
}

impl<T: Real> Amplitude<T> {
    pub fn at(&self, j: usize) -> T {
        match self {
            Amplitude::Scalar(s) => *s,
            Amplitude::Nodal(f) => f.values[j],
        }
    }
}

pub fn amplitude<T: Real>(u_star: &Field<T>, g_kind: GKind) -> Amplitude<T> {
    match g_kind {
        GKind::Additive => Amplitude::Scalar(T::one()),
        GKind::QuadSup => {
            let s = u_star.norm_inf();
            Amplitude::Scalar(T::lit(0.5) * s * s)
        }
        GKind::SupShift => {
            let s = u_star.norm_inf();
            Amplitude::Nodal(Field { values: u_star.values.iter().map(|&v| s - v).collect() })
        }
    }
}

/// Assembled `J x K` diffusion matrix.
#[derive(Debug, Clone)]
pub struct NoiseMatrix<T> {
    pub b: DenseMatrix<T>,
    pub spec: NoiseSpec<T>,
}

impl<T: Real> NoiseMatrix<T> {
    /// `B B^T`
    pub fn covariance_rate(&self) -> DenseMatrix<T> {
        self.b.mul_transpose_self()
    }
}

pub fn assemble_b<T: Real>(u_star: &Field<T>, spec: &NoiseSpec<T>, grid: &Grid2D<T>) -> Result<NoiseMatrix<T>> {
    grid.check_field(u_star)?;
    spec.validate()?;
    let amp = amplitude(u_star, spec.g_kind);
    let lambda = eigenvalues(spec);
    let j = grid.len();
    let mut b = DenseMatrix::zeros(j, spec.k());
    for (col, (&(k1, k2), &lam)) in spec.modes.iter().zip(&lambda).enumerate() {
        let e = eigenfunction_samples(k1, k2, grid);
        let s = lam.sqrt();
        for (row, dst) in b.col_mut(col).iter_mut().enumerate() {
            *dst = s * amp.at(row) * e.values[row];
        }
    }
    Ok(NoiseMatrix { b, spec: spec.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::assemble_laplacian;

    fn default_grid() -> Grid2D<f64> {
        Grid2D::new(1.0, 0.9, 50, 45).unwrap()
    }

    #[test]
    fn eigenvalue_law() {
        let g = default_grid();
        let spec = NoiseSpec::new(&g, 5.0, vec![1.0, 2.0], GKind::Additive).unwrap();
        let l = eigenvalues(&spec);
        assert!((l[0] - 4.524187).abs() < 1e-6);
        assert!((l[1] - 4.093654).abs() < 1e-6);
        assert!(eigenvalues(&spec.scaled(0.0)).iter().all(|&v| v == 0.0));

        let shifted = NoiseSpec::from_rule(&g, 5.0, PhiRule::Affine { a: -0.4, b: 0.4 }, 11, GKind::Additive).unwrap();
        let l = eigenvalues(&shifted);
        assert!((l[0] - 5.0).abs() < 1e-14);
        assert!((l[10] - 3.35160).abs() < 1e-5);
    }

    #[test]
    fn mode_ranking() {
        let g = default_grid();
        assert_eq!(rank_modes(&g, 2), vec![(1, 1), (2, 1)]);
        assert_eq!(rank_modes(&g, 4), vec![(1, 1), (2, 1), (1, 2), (2, 2)]);
        assert_eq!(
            rank_modes(&g, 8),
            vec![(1, 1), (2, 1), (1, 2), (2, 2), (3, 1), (1, 3), (3, 2), (2, 3)]
        );
        let sq = Grid2D::<f64>::new(1.0, 1.0, 10, 10).unwrap();
        assert_eq!(rank_modes(&sq, 3), vec![(1, 1), (1, 2), (2, 1)]);
    }

    #[test]
    fn samples() {
        let g1 = Grid2D::<f64>::new(1.0, 1.0, 2, 2).unwrap();
        assert!((eigenfunction_samples(1, 1, &g1).values[0] - 1.0).abs() < 1e-15);
        let g = default_grid();
        let e21 = eigenfunction_samples(2, 1, &g);
        for n in 1..45 {
            assert!(e21.values[g.index(25, n)].abs() < 1e-14);
        }
    }

    #[test]
    fn samples_are_stencil_eigenvectors() {
        let g = default_grid();
        let lap = assemble_laplacian(&g);
        let e = eigenfunction_samples(1, 1, &g);
        let nu = g.stencil_eigenvalue(1, 1);
        let le = lap.mul_vec(&e.values).unwrap();
        for (a, b) in le.iter().zip(&e.values) {
            assert!((a + nu * b).abs() < 1e-10);
        }
    }

    #[test]
    fn amplitude_kinds() {
        let g = default_grid();
        let zero = Field::zeros(&g);
        assert_eq!(amplitude(&zero, GKind::Additive), Amplitude::Scalar(1.0));
        assert_eq!(amplitude(&zero, GKind::QuadSup), Amplitude::Scalar(0.0));
        let c = Field::constant(&g, 0.7);
        match amplitude(&c, GKind::SupShift) {
            Amplitude::Nodal(f) => assert!(f.values.iter().all(|&v| v == 0.0)),
            other => panic!("unexpected {other:?}"),
        }
        let u = Field::from_fn(&g, |x, _| x);
        assert!((amplitude(&u, GKind::QuadSup).at(0) - 0.5 * 0.96 * 0.96).abs() < 1e-12);
    }

    #[test]
    fn scalar_assembly() {
        let g = Grid2D::<f64>::new(1.0, 1.0, 2, 2).unwrap();
        let spec = NoiseSpec::new(&g, 5.0, vec![1.0], GKind::Additive).unwrap();
        let nm = assemble_b(&Field::zeros(&g), &spec, &g).unwrap();
        assert!((nm.b[(0, 0)] - 2.127013).abs() < 1e-6);
    }

    #[test]
    fn multiplicative_noise_vanishes_at_zero() {
        let g = Grid2D::<f64>::new(1.0, 0.9, 10, 9).unwrap();
        for kind in [GKind::QuadSup, GKind::SupShift] {
            let spec = NoiseSpec::from_rule(&g, 5.0, PhiRule::LinearK, 4, kind).unwrap();
            let nm = assemble_b(&Field::zeros(&g), &spec, &g).unwrap();
            assert_eq!(nm.b.max_abs(), 0.0);
        }
    }

    #[test]
    fn additive_columns_are_orthogonal() {
        let g = default_grid();
        let spec = NoiseSpec::default_additive(&g, 8).unwrap();
        let nm = assemble_b(&Field::zeros(&g), &spec, &g).unwrap();
        for a in 0..8 {
            for b in (a + 1)..8 {
                let ca = nm.b.col(a);
                let cb = nm.b.col(b);
                let ip: f64 = ca.iter().zip(cb).map(|(x, y)| x * y).sum();
                let na: f64 = ca.iter().map(|x| x * x).sum::<f64>().sqrt();
                let nb: f64 = cb.iter().map(|x| x * x).sum::<f64>().sqrt();
                assert!(ip.abs() <= 1e-10 * na * nb);
            }
        }
    }

    #[test]
    fn rejects_bad_specs() {
        let g = default_grid();
        assert!(NoiseSpec::new(&g, 5.0, vec![2.0, 1.0], GKind::Additive).is_err());
        assert!(NoiseSpec::new(&g, -1.0, vec![1.0], GKind::Additive).is_err());
        assert!(NoiseSpec::new(&g, 5.0, vec![], GKind::Additive).is_err());
    }
}
