//! Minimal reverse-mode autodiff over 4-D tensors: exactly the primitives
//! the fusion network needs, each with an analytic backward pass.

mod conv;
mod tape;
mod tensor;

pub use conv::{gaussian_window, Padding};
pub use tape::{NodeId, NormUpdate, Tape, NORM_EPS};
pub use tensor::{Element, Shape, Tensor};
