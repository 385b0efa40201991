#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod advection;
pub mod data;
pub mod dependence;
pub mod diagnostics;
pub mod episodes;
pub mod error;
pub mod inference;
pub mod linalg;
pub mod marginals;
pub mod normal;
pub mod optim;
pub mod recovery;
pub mod seed;
pub mod simulation;

pub use error::{Error, Result};
