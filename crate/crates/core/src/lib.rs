//! Bayesian tensor ring completion: a Gibbs sampler with rank adaption and
//! online variational EM. See the guide in `book/` for an overview.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod gibbs;
pub mod linalg;
pub mod online;
pub mod ring;
pub mod rng;
pub mod tensor;

pub use checkpoint::{Checkpoint, EngineState, ValueTransform};
pub use error::{Error, Result};
pub use linalg::Matrix;
pub use ring::{Core, DenseTensor, TRModel};
pub use rng::Rng;
pub use tensor::{DataKind, SparseTensor};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/tensor-ring.md")]
    mod tensor_ring {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/gibbs.md")]
    mod gibbs {}
    #[doc = include_str!("../../../book/src/binary.md")]
    mod binary {}
    #[doc = include_str!("../../../book/src/online.md")]
    mod online {}
    #[doc = include_str!("../../../book/src/checkpoints.md")]
    mod checkpoints {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/testing.md")]
    mod testing {}
}
