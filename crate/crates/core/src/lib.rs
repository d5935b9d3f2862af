//! Optimal investment to minimize the probability of lifetime ruin with
//! stochastic consumption, by three independent routes: the exact solution
//! for constant consumption, a finite-difference HJB solver, and Monte Carlo.
//!
//! All numerical code is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix it to `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod closedform;
pub mod funds;
pub mod hjb;
pub mod linalg;
pub mod market;
pub mod mcsim;
pub mod scalar;
pub mod tridiag;

pub use scalar::Scalar;

pub type MarketModel64 = market::MarketModel<f64>;
pub type MarketParams64 = market::MarketParams<f64>;
pub type Matrix64 = linalg::Matrix<f64>;
pub type ClosedFormSolution64 = closedform::ClosedFormSolution<f64>;
pub type RuinSolution64 = hjb::RuinSolution<f64>;
pub type GridSpec64 = hjb::GridSpec<f64>;
pub type Strategy64 = mcsim::Strategy<f64>;
pub type SimConfig64 = mcsim::SimConfig<f64>;
