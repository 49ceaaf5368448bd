//! Finite-difference discretization of the rectangle `[-Lx, Lx] x [-Ly, Ly]`
//! with homogeneous Dirichlet boundary conditions.
//!
//! Only interior nodes are stored. Node `(m, n)` with `1 <= m <= M-1`,
//! `1 <= n <= N-1` has the zero-based linear index `(m-1) + (n-1)(M-1)`,
//! i.e. `m` runs fastest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Regular rectangular mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid2D<T> {
    lx: T,
    ly: T,
    m: usize,
    n: usize,
    hx: T,
    hy: T,
    irregular: bool,
}

impl<T: Real> Grid2D<T> {
    /// Builds the mesh with `M` subdivisions in x and `N` in y.
    ///
    /// A mesh with `hx != hy` is accepted but flagged through
    /// [`Grid2D::is_irregular`] and a log warning.
    pub fn new(lx: T, ly: T, m: usize, n: usize) -> Result<Self> {
        if !(lx > T::zero()) || !(ly > T::zero()) || !lx.is_finite() || !ly.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "half-widths must be positive, got Lx = {lx}, Ly = {ly}"
            )));
        }
        if m < 2 || n < 2 {
            return Err(Error::InvalidArgument(format!(
                "subdivision counts must be at least 2, got M = {m}, N = {n}"
            )));
        }
        let two = T::lit(2.0);
        let hx = two * lx / T::from_usize_lossy(m);
        let hy = two * ly / T::from_usize_lossy(n);
        let irregular = (hx - hy).abs() > T::lit(1e-12) * hx.max(hy);
        if irregular {
            log::warn!("irregular grid: hx = {hx} differs from hy = {hy}");
        }
        Ok(Self { lx, ly, m, n, hx, hy, irregular })
    }

    pub fn lx(&self) -> T {
        self.lx
    }

    pub fn ly(&self) -> T {
        self.ly
    }

    /// Subdivisions in x.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Subdivisions in y.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn hx(&self) -> T {
        self.hx
    }

    pub fn hy(&self) -> T {
        self.hy
    }

    pub fn is_irregular(&self) -> bool {
        self.irregular
    }

    /// Number of interior nodes, `(M-1)(N-1)`.
    pub fn len(&self) -> usize {
        (self.m - 1) * (self.n - 1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Zero-based linear index of interior node `(m, n)` (both one-based).
    pub fn index(&self, m: usize, n: usize) -> usize {
        debug_assert!((1..self.m).contains(&m) && (1..self.n).contains(&n));
        (m - 1) + (n - 1) * (self.m - 1)
    }

    /// Inverse of [`Grid2D::index`].
    pub fn node(&self, j: usize) -> (usize, usize) {
        debug_assert!(j < self.len());
        (j % (self.m - 1) + 1, j / (self.m - 1) + 1)
    }

    pub fn x(&self, m: usize) -> T {
        -self.lx + T::from_usize_lossy(m) * self.hx
    }

    pub fn y(&self, n: usize) -> T {
        -self.ly + T::from_usize_lossy(n) * self.hy
    }

    /// Coordinates of interior node `j`.
    pub fn coords(&self, j: usize) -> (T, T) {
        let (m, n) = self.node(j);
        (self.x(m), self.y(n))
    }

    /// Cell area `hx * hy`, the weight of the discrete L2 inner product.
    pub fn cell_area(&self) -> T {
        self.hx * self.hy
    }

    /// Interior node closest to the domain centre.
    pub fn center_index(&self) -> usize {
        let mut best = 0;
        let mut best_d = T::infinity();
        for j in 0..self.len() {
            let (x, y) = self.coords(j);
            let d = x * x + y * y;
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        best
    }

    /// Discrete L2 norm `sqrt(hx hy sum p_j^2)`.
    pub fn l2_norm(&self, values: &[T]) -> T {
        (self.cell_area() * values.iter().map(|&v| v * v).sum::<T>()).sqrt()
    }

    /// Eigenvalue of `-Delta_h` for the discrete sine mode `(k1, k2)`.
    pub fn stencil_eigenvalue(&self, k1: usize, k2: usize) -> T {
        let pi = T::lit(std::f64::consts::PI);
        let four = T::lit(4.0);
        let sx = (T::from_usize_lossy(k1) * pi / T::from_usize_lossy(2 * self.m)).sin();
        let sy = (T::from_usize_lossy(k2) * pi / T::from_usize_lossy(2 * self.n)).sin();
        four / (self.hx * self.hx) * sx * sx + four / (self.hy * self.hy) * sy * sy
    }
}

/// Sampled solution on the interior nodes of a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field<T> {
    pub values: Vec<T>,
}

impl<T: Real> Field<T> {
    pub fn zeros(grid: &Grid2D<T>) -> Self {
        Self { values: vec![T::zero(); grid.len()] }
    }

    pub fn constant(grid: &Grid2D<T>, c: T) -> Self {
        Self { values: vec![c; grid.len()] }
    }

    pub fn from_fn(grid: &Grid2D<T>, f: impl Fn(T, T) -> T) -> Self {
        Self {
            values: (0..grid.len())
                .map(|j| {
                    let (x, y) = grid.coords(j);
                    f(x, y)
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn norm_inf(&self) -> T {
        crate::scalar::norm_inf(&self.values)
    }

    fn check_grid(&self, grid: &Grid2D<T>) -> Result<()> {
        if self.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: self.len() });
        }
        Ok(())
    }
}

impl<T> From<Vec<T>> for Field<T> {
    fn from(values: Vec<T>) -> Self {
        Self { values }
    }
}

/// Square sparse matrix in compressed-row layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator<T> {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
    symmetric: bool,
}

impl<T: Real> SparseOperator<T> {
    /// Assembles from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(dim: usize, triplets: &[(usize, usize, T)], symmetric: bool) -> Result<Self> {
        let mut rows: Vec<Vec<(usize, T)>> = vec![Vec::new(); dim];
        for &(r, c, v) in triplets {
            if r >= dim || c >= dim {
                return Err(Error::InvalidArgument(format!(
                    "entry ({r}, {c}) outside a {dim}x{dim} operator"
                )));
            }
            rows[r].push((c, v));
        }
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            for (c, v) in row {
                if col_idx.len() > *row_ptr.last().unwrap() && *col_idx.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self { dim, row_ptr, col_idx, values, symmetric })
    }

    /// Diagonal matrix.
    pub fn diagonal(diag: &[T]) -> Self {
        let dim = diag.len();
        Self {
            dim,
            row_ptr: (0..=dim).collect(),
            col_idx: (0..dim).collect(),
            values: diag.to_vec(),
            symmetric: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Non-zeros of row `r` as `(col, value)` pairs.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.dim).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.row(r).find(|&(cc, _)| cc == c).map_or(T::zero(), |(_, v)| v)
    }

    pub fn diag(&self) -> Vec<T> {
        (0..self.dim).map(|r| self.get(r, r)).collect()
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[T], y: &mut [T]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(y.len(), self.dim);
        for (r, yr) in y.iter_mut().enumerate() {
            let mut acc = T::zero();
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *yr = acc;
        }
    }

    pub fn mul_vec(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        let mut y = vec![T::zero(); self.dim];
        self.apply(x, &mut y);
        Ok(y)
    }

    pub fn transpose(&self) -> Self {
        if self.symmetric {
            return self.clone();
        }
        let t: Vec<_> = self.triplets().map(|(r, c, v)| (c, r, v)).collect();
        Self::from_triplets(self.dim, &t, false).expect("indices already validated")
    }

    /// Returns `A + diag(shift)`, keeping the symmetry flag.
    pub fn add_diagonal(&self, shift: &[T]) -> Result<Self> {
        if shift.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: shift.len() });
        }
        let mut out = self.clone();
        for (r, &s) in shift.iter().enumerate() {
            let span = out.row_ptr[r]..out.row_ptr[r + 1];
            match out.col_idx[span.clone()].iter().position(|&c| c == r) {
                Some(k) => out.values[span.start + k] += s,
                None => {
                    let mut t: Vec<_> = self.triplets().collect();
                    t.extend(shift.iter().enumerate().map(|(i, &v)| (i, i, v)));
                    return Self::from_triplets(self.dim, &t, self.symmetric);
                }
            }
        }
        Ok(out)
    }

    /// Upper Gershgorin bound on the spectrum's real parts.
    pub fn gershgorin_upper(&self) -> T {
        (0..self.dim)
            .map(|r| {
                self.row(r)
                    .fold(T::zero(), |acc, (c, v)| if c == r { acc + v } else { acc + v.abs() })
            })
            .fold(T::neg_infinity(), T::max)
    }

    /// Largest asymmetry `max |A_ij - A_ji|`.
    pub fn asymmetry(&self) -> T {
        self.triplets()
            .map(|(r, c, v)| (v - self.get(c, r)).abs())
            .fold(T::zero(), T::max)
    }

    /// Dense column-major copy, for small operators in tests.
    pub fn to_dense(&self) -> crate::dense::DenseMatrix<T> {
        let mut d = crate::dense::DenseMatrix::zeros(self.dim, self.dim);
        for (r, c, v) in self.triplets() {
            d[(r, c)] += v;
        }
        d
    }
}

/// Five-point Dirichlet Laplacian `Delta_h` on the interior nodes.
pub fn assemble_laplacian<T: Real>(grid: &Grid2D<T>) -> SparseOperator<T> {
    let (mi, ni) = (grid.m() - 1, grid.n() - 1);
    let cx = T::one() / (grid.hx() * grid.hx());
    let cy = T::one() / (grid.hy() * grid.hy());
    let two = T::lit(2.0);
    let mut t = Vec::with_capacity(5 * grid.len());
    for n in 1..=ni {
        for m in 1..=mi {
            let j = grid.index(m, n);
            if n > 1 {
                t.push((j, grid.index(m, n - 1), cy));
            }
            if m > 1 {
                t.push((j, grid.index(m - 1, n), cx));
            }
            t.push((j, j, -two * cx - two * cy));
            if m < mi {
                t.push((j, grid.index(m + 1, n), cx));
            }
            if n < ni {
                t.push((j, grid.index(m, n + 1), cy));
            }
        }
    }
    SparseOperator::from_triplets(grid.len(), &t, true).expect("stencil indices in range")
}

/// Cubic-quintic nonlinearity `4(mu u + u^3 - u^5)`.
#[inline]
pub fn reaction_scalar<T: Real>(u: T, mu: T) -> T {
    let u2 = u * u;
    T::lit(4.0) * u * (mu + u2 - u2 * u2)
}

/// Derivative of [`reaction_scalar`] in `u`: `4(mu + 3u^2 - 5u^4)`.
#[inline]
pub fn reaction_derivative<T: Real>(u: T, mu: T) -> T {
    let u2 = u * u;
    T::lit(4.0) * (mu + T::lit(3.0) * u2 - T::lit(5.0) * u2 * u2)
}

pub fn reaction<T: Real>(u: &Field<T>, mu: T) -> Field<T> {
    Field { values: u.values.iter().map(|&v| reaction_scalar(v, mu)).collect() }
}

fn check_dims<T: Real>(u: &Field<T>, lap: &SparseOperator<T>) -> Result<()> {
    if u.len() != lap.dim() {
        return Err(Error::DimensionMismatch { expected: lap.dim(), got: u.len() });
    }
    Ok(())
}

/// Steady-state drift `Delta_h u + 4(mu u + u^3 - u^5)`.
pub fn residual<T: Real>(u: &Field<T>, mu: T, lap: &SparseOperator<T>) -> Result<Field<T>> {
    check_dims(u, lap)?;
    let mut out = vec![T::zero(); u.len()];
    lap.apply(&u.values, &mut out);
    for (o, &v) in out.iter_mut().zip(&u.values) {
        *o += reaction_scalar(v, mu);
    }
    Ok(Field { values: out })
}

/// Jacobian of [`residual`] in the state: `Delta_h + diag(4(mu + 3u^2 - 5u^4))`.
pub fn jacobian<T: Real>(u: &Field<T>, mu: T, lap: &SparseOperator<T>) -> Result<SparseOperator<T>> {
    check_dims(u, lap)?;
    let d: Vec<T> = u.values.iter().map(|&v| reaction_derivative(v, mu)).collect();
    lap.add_diagonal(&d)
}

/// Derivative of [`residual`] in `mu`: `4u`.
pub fn residual_mu_derivative<T: Real>(u: &Field<T>) -> Vec<T> {
    u.values.iter().map(|&v| T::lit(4.0) * v).collect()
}

impl<T: Real> Grid2D<T> {
    /// Validates that a field was sampled on this grid.
    pub fn check_field(&self, u: &Field<T>) -> Result<()> {
        u.check_grid(self)
    }
}
