//! Alternating label propagation and MLP training for semi-supervised node
//! classification.

pub mod bench;
pub mod counters;
pub mod data;
pub mod dense;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod memory;
pub mod neural;
pub mod propagation;
pub mod pseudo_label;
pub mod scalar;
pub mod sparse;
pub mod trainer;
pub mod verify;

pub use dense::DenseMatrix;
pub use error::{Error, Result};
pub use graph::SparseGraph;
pub use neural::{LossKind, MlpModel};
pub use scalar::Real;
pub use sparse::CsrMatrix;

pub type Dense = DenseMatrix<f64>;
pub type Csr = CsrMatrix<f64>;
pub type Graph = SparseGraph<f64>;
pub type Dense32 = DenseMatrix<f32>;
pub type Graph32 = SparseGraph<f32>;
pub type Mlp = MlpModel<f64>;
pub type Mlp32 = MlpModel<f32>;
