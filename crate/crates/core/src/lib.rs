//! Quadrature-based finite element residual evaluation using thread
//! transposition.
//!
//! The crate is organised bottom-up:
//!
//! * [`mesh`] builds structured simplex meshes, per-cell affine geometry and the
//!   gather/scatter maps between global vectors and per-cell blocks.
//! * [`element`] provides P1 Lagrange bases tabulated at quadrature points.
//! * [`physics`] holds pointwise `f0`/`f1` weak-form kernels.
//! * [`reference`] is the serial integrator used as a correctness oracle and for
//!   remainder cells.
//! * [`executor`] runs the two-phase transposed schedule on a deterministic
//!   virtual device with explicit shared memory.
//! * [`perf_model`] evaluates the closed-form resource model and the balance it
//!   implies.
//! * [`codegen`] assembles compute-kernel source text at runtime.

pub mod codegen;
pub mod element;
mod error;
pub mod executor;
pub mod mesh;
pub mod perf_model;
pub mod physics;
pub mod real;
pub mod reference;

pub use error::{Error, Result};
pub use real::Real;
