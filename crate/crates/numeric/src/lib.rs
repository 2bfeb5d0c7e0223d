//! Numeric substrate for the To-Do generation pipeline: dense `f64`
//! tensors, a define-by-run gradient tape, Adagrad with global-norm
//! clipping, a finite-difference gradient checker and a binary parameter
//! checkpoint format.

pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod optim;
pub mod params;
pub mod tape;
pub mod tensor;

pub use checkpoint::Checkpoint;
pub use error::{NumericError, Result};
pub use gradcheck::{finite_diff_check, relative_error, GradCheckReport};
pub use layers::{Linear, LstmCell, LstmState};
pub use optim::{clip_grad_norm, grad_norm, AdagradState};
pub use params::{Initializer, Param, ParamId, ParamSet, DEFAULT_INIT_RANGE};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
