//! Reverse-mode differentiation and the network layers built on it.

pub mod conv;
pub mod gradcheck;
pub(crate) mod kernels;
pub mod layers;
pub mod norm;
pub mod ops;
pub mod params;
pub mod tape;

pub use gradcheck::{grad_check, grad_check_multi, rel_error, CheckInput, GradCheckReport};
pub use layers::{
    AttentionSpec, AttentionTrace, Conv2d, Linear, MultiHeadAttention, Norm, NormKind, ResnetBlock, TransformerBlock,
};
pub use params::{Bound, InitScheme, ParamId, Parameter, ParameterSet};
pub use tape::{DiffTensor, Reduction, Tape, Var};
