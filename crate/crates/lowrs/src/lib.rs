//! Distributed recovery of a low-rank matrix plus a (compressed) sparse
//! matrix over a network of agents.
//!
//! A group of agents, each holding a few rows of a data matrix, cooperates
//! through single-hop message passing to fit the convex estimator
//!
//! ```text
//! min_{X,A}  1/2 |P_Omega(Y - X - R A)|_F^2 + ls |X|_* + l1 |A|_1
//! ```
//!
//! without ever pooling the data. The nuclear norm is replaced by its
//! variational characterization over bilinear factors `X = L Q'`, which makes
//! the cost separable across agents at the price of non-convexity; consensus
//! constraints on the shared factors are then handled by an
//! alternating-direction method of multipliers. Four specializations ship:
//! routed traffic-anomaly unveiling, robust PCA, matrix completion, and the
//! distributed Lasso.
//!
//! The crate also carries centralized reference solvers and a certificate
//! that promotes a converged factorization to a global optimum of the convex
//! problem, so every distributed run can be checked against ground truth.

pub mod admm;
pub mod error;
pub mod network;
pub mod numerics;
pub mod oracles;
pub mod rng;
pub mod solvers;
pub mod synth;
pub mod unreduced;

pub use error::{Error, Result};
pub use numerics::{DenseMatrix, ThinSvd};
