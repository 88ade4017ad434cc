//! Fully connected ReLU networks with manual backpropagation and Adam.

pub mod checkpoint;
pub mod gradcheck;
mod mlp;

pub use gradcheck::finite_diff_check;
pub use mlp::{softmax_rows, AdamState, LossKind, MlpModel, Mode, ParamSet};
pub(crate) use mlp::softmax_in_place;
