//! Galerkin existence scheme for positive solutions of
//! `-Δ_N u = λ(a1 u^{r1} + a2 |∇u|^{r2}) + f(u)` with homogeneous Dirichlet data.

#![allow(clippy::needless_range_loop)]

pub mod config;
pub mod constants;
pub mod error;
pub mod export;
pub mod mesh;
pub mod nonlinearity;
pub mod operators;
pub mod pipeline;
pub mod probes;
pub mod problem;
pub mod quad1d;
pub mod quadrature;
pub mod solver;
pub mod space;
pub mod subsolution;
pub mod suites;

pub use error::{Error, Result};
