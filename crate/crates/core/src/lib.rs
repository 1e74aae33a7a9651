//! Solver and verification harness for the regularized Zakharov–Kuznetsov
//! equation on `(0,1) x (-pi/2, pi/2)^d`, `d = 1, 2`.

// Negated comparisons are how NaN inputs get rejected; index loops mirror stencil formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod balance;
pub mod banded;
pub mod bvp;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod io;
pub mod model;
pub mod operators;
pub mod sbp;
pub mod stencil;
pub mod stepper;

pub use error::{Result, ZkError};
