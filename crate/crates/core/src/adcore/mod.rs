//! Dense tensors with reverse-mode automatic differentiation, sized for 1-D
//! CNN training on the CPU.

pub mod checkpoint;
pub mod gradcheck;
mod graph;
mod matops;
mod nnops;
mod params;
mod tensor;

pub use graph::{GradSink, Graph, Var};
pub use nnops::conv1d_out_len;
pub use params::{Adam, ParamId, ParamSet};
pub use tensor::{Scalar, Tensor};
