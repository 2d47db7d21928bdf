//! Solver for one-dimensional decoupled forward-backward stochastic
//! differential equations
//!
//! ```text
//! dX_t = mu(t, X_t) dt + sigma(t, X_t) dW_t
//! dY_t = -f(t, X_t, Y_t, Z_t) dt + Z_t dW_t,    Y_T = g(X_T)
//! ```
//!
//! Time is discretized with a two-parameter theta scheme and every
//! conditional expectation is evaluated with a truncated Shannon-type
//! trigonometric basis (the SWIFT formula). Expectations of the basis
//! functions come from the characteristic function of the Euler increment
//! through one FFT per grid row.
//!
//! Module map:
//!
//! * [`problem`] - problem definitions, the four builtin benchmarks, theta
//!   schemes and cumulant-based domain selection.
//! * [`basis`] - scaling functions, inner products and projections.
//! * [`transform`] / [`expectation`] - the odd-frequency FFT and the
//!   expectation kernels built on it.
//! * [`solver`] - the backward recursion (quick and mixed variants), Picard
//!   iteration and the antireflective boundary correction.
//! * [`oracle`] - independent reference machinery: Gauss-Hermite
//!   expectations, Black-Scholes prices and convergence-order fits.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod error;
pub mod expectation;
pub mod oracle;
pub mod problem;
mod quadrature;
pub mod solver;
pub mod transform;

pub use basis::{BasisCoefficients, ProjectionOptions, WaveletGrid};
pub use error::{Error, Result};
pub use expectation::{ExpectationEngine, ExpectationKernel, RowEvaluation};
pub use oracle::ConvergenceReport;
pub use problem::{
    compute_domain, make_builtin_problem, scheme_params, DomainSpec, FbsdeProblem, ThetaScheme,
};
pub use solver::{solve, SolveResult, SolverConfig, Variant};
