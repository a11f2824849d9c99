//! Dense f64 tensors, a define-by-run reverse-mode tape and the ADAM optimizer.

mod adam;
mod graph;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use graph::{ConvGeom, CustomOp, Grads, Graph, ParamId, ParamStore, Var};
pub use tensor::{
    l2_normalize, logsumexp, zero_norm_events, Tensor, NORM_EPS,
};

pub(crate) use tensor::gemm;
