//! Adaptive iteratively linearized finite element methods for semilinear
//! elliptic problems `-div(εA∇u) + κ b(u) = f` with homogeneous Dirichlet
//! data on polygonal domains.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod adaptive;
pub mod cli;
pub mod error;
pub mod estimator;
pub mod forms;
pub mod linsolve;
pub mod mesh;
pub mod problems;
pub mod quadrature;
pub mod report;
pub mod space;
pub mod sparse;
pub mod verify;

pub use error::{Error, Result};
