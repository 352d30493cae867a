//! Batch Bayesian optimisation and Bayesian quadrature by kernel
//! recombination over continuous, categorical and binary inputs.

pub mod acquisition;
pub mod bench;
pub mod distillation;
pub mod error;
pub mod gp;
pub mod kernels;
pub mod measures;
pub mod optim;
pub mod pi;
pub mod points;
pub mod recombination;
pub mod solver;
pub mod surrogate;

pub use error::{Result, SoberError};
pub use points::Points;
