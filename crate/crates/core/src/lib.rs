//! Simulation of neutral stochastic fractional delay equations driven by
//! Levy noise, with estimators for asymptotic periodicity of the solutions.

// `!(x > 0.0)` is used on purpose to reject NaN along with the bad range.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod mittag_leffler;
pub mod quadrature;
pub mod special;
pub mod operator;
pub mod report;
pub mod noise;
pub mod segment;
pub mod coefficients;
pub mod model;
pub mod solver;
pub mod bl;
pub mod periodicity;
pub mod config;
pub mod io;
pub mod pipeline;
