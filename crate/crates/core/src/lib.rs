//! Sparse signal recovery with the scale-invariant `ℓ½/ℓ₂` ratio.
//!
//! The crate is `no_std` (it needs `alloc`). It carries the objective, the
//! half-thresholding and `u`-step kernels, the nested ADMM solver, three
//! baseline solvers, reproducible instance generators, recovery-condition
//! certificates, the benchmark bookkeeping and an RVFL regression model.
//! File formats, parallel sweeps and the command line live in the
//! `ratiosparse` crate.

#![no_std]
// When std is linked anywhere in the graph its inherent float methods
// shadow `num_traits::Float`, leaving the import unused.
#![allow(unused_imports)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod baselines;
pub mod bench;
pub mod error;
pub mod gen;
pub mod objective;
pub mod problem;
pub mod prox;
pub mod rvfl;
pub mod solver;

/// Dense column-major real matrix.
pub type Matrix = nalgebra::DMatrix<f64>;
/// Dense real vector.
pub type Vector = nalgebra::DVector<f64>;

pub use error::{Error, Result};
pub use objective::{objective_h, ratio_half_over_two};
pub use problem::{
    AdaptivePenalty, InnerStart, PenaltyScale, ProblemInstance, SolveResult, SolverConfig,
    Termination, UWeight, YSolver,
};
