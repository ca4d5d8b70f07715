//! Matrix-factorization mechanisms for differentially private prefix sums and
//! gradient streams with multiple participations.
//!
//! A mechanism releases `B (C x + z)` for a factorization `A = B C` of a
//! lower-triangular workload `A`. The crate covers workload construction,
//! sensitivity under `(k, b)`-participation, dual optimization of `C^T C`,
//! FFT and binary-tree mechanisms, stamping, and evaluation utilities.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod exec;
pub mod fftmech;
pub mod matcore;
pub mod mechlab;
pub mod optfact;
pub mod participation;
pub mod treestamp;
pub mod workloads;

pub use error::{Error, Result};
pub use exec::Execution;
pub use matcore::Matrix;
pub use participation::{ParticipationSchema, SensMethod};
