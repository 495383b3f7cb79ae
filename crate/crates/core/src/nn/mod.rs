//! Tensors, reverse-mode differentiation, the pitch encoder and its optimiser.

pub mod encoder;
pub mod graph;
pub mod optim;
pub mod tensor;

pub use encoder::{embed, Architecture, EncoderInput, EncoderParams, HeadParams, ModelParams, ModelVars};
pub use graph::{Graph, Var};
pub use optim::{Optimizer, OptimizerConfig};
pub use tensor::Tensor;
