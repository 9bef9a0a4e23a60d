//! Hand-written differentiable layers: dense, bidirectional GRU with
//! recurrent dropout, parameter containers, checkpoints and gradient checks.

pub mod checkpoint;
mod dense;
pub mod gradcheck;
mod gru;
pub mod params;

pub use dense::{Activation, Dense, DenseTape};
pub use gradcheck::{grad_check, GradCheckReport, TensorCheck};
pub use gru::{BiGru, BiGruTape, DropoutMasks, Gru, GruTape};
pub use params::{glorot_uniform, Parameters, Tensor, TensorMut};
