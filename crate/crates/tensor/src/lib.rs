//! Dense tensors, a reverse-mode autodiff tape, named parameter storage,
//! checkpoints and an Adam optimiser. Everything is generic over [`Real`] so
//! the same model code runs in `f32` for training and `f64` for gradient
//! checks.

pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod optim;
pub mod params;
pub mod real;
pub mod tensor;

pub use checkpoint::{AnyTensor, Checkpoint};
pub use error::{Result, TensorError};
pub use gradcheck::{grad_check, grad_check_params, GradCheckReport};
pub use graph::{sigmoid, Gradients, Graph, Var};
pub use optim::{Adam, AdamConfig};
pub use params::{ParamGrads, ParamId, ParamStore, INIT_STD};
pub use real::{DType, Real};
pub use tensor::{softmax_slice, Tensor};
