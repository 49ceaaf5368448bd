pub mod backend;
pub mod dense;
pub mod error;
pub mod grid;
pub mod scalar;
pub mod eigen;
pub mod detcont;
pub mod noise;
pub mod krylov;
pub mod lyapunov;
pub mod analysis;
pub mod mc;

pub use error::{Error, Result};

pub type Grid = grid::Grid2D<f64>;
pub type Grid32 = grid::Grid2D<f32>;
pub type Field = grid::Field<f64>;
pub type Field32 = grid::Field<f32>;
pub type SparseOperator = grid::SparseOperator<f64>;
pub type SparseOperator32 = grid::SparseOperator<f32>;
pub type Matrix = dense::DenseMatrix<f64>;
pub type Matrix32 = dense::DenseMatrix<f32>;
pub type SteadyState = detcont::SteadyState<f64>;
pub type SteadyState32 = detcont::SteadyState<f32>;
pub type Branch = detcont::Branch<f64>;
pub type NoiseSpec = noise::NoiseSpec<f64>;
pub type NoiseSpec32 = noise::NoiseSpec<f32>;
