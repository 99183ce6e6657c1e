//! Dense `f32` tensors, a reverse-mode tape, Adam, gradient checking and
//! parameter checkpoints.

mod checkpoint;
mod gradcheck;
mod optim;
mod params;
mod tape;
mod tensor;

pub use checkpoint::{checkpoint_from_str, checkpoint_to_string, load_checkpoint, save_checkpoint, CHECKPOINT_FORMAT};
pub use gradcheck::{grad_check, relative_error, GradCheckReport};
pub use optim::{Adam, AdamConfig};
pub use params::{ParamId, ParamStore};
pub use tape::{selu_scalar, softmax_in_place, Tape, Var, SELU_ALPHA, SELU_LAMBDA};
pub use tensor::Tensor;
