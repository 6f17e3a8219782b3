//! Numerical laboratory for stochastic homogenization of fully nonlinear
//! integro-differential equations.
//!
//! The pipeline: sample a stationary ergodic environment ([`env`]), discretize
//! the singular kernels ([`kernels`]), evaluate the nonlocal operators
//! ([`nonlocal`]), solve Dirichlet and obstacle problems ([`solve`]) and run the
//! homogenization experiments ([`homog`]).

pub mod env;
pub mod error;
pub mod homog;
pub mod kernels;
pub mod nonlocal;
pub mod solve;
pub mod sym;

pub use error::{Error, Result};
