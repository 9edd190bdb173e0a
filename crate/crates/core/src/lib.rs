//! Simulation and numerical-analysis laboratory for multiclass parallel-server
//! queueing systems in the nondegenerate-slowdown heavy-traffic regime.
//!
//! The crate is organized around a fixed pipeline:
//!
//! * [`model`] — routing topology, rate parameters, and the n-th system in the
//!   scaling sequence (arrival rates of order n, service rates of order √n,
//!   pool sizes of order √n).
//! * [`fluid`] — the static allocation LP, heavy-traffic and resource-pooling
//!   verdicts, the workload direction θ, and diffusion drift/variance
//!   coefficients.
//! * [`cost`] — queueing cost functions, the reduced (workload) cost, its
//!   minimizer, and the perturbed minimizer used by the tracking policy.
//! * [`policy`] — the tree-based tracking policy and reference baselines.
//! * [`sim`] — the discrete-event engine, path recording, and diffusion
//!   scaling.
//! * [`bcp`] — the one-dimensional reflected Brownian workload: Skorohod map,
//!   exact RBM sampling, and the Brownian control problem lower bound.
//! * [`config`] / [`study`] — file-backed model/study descriptions and the
//!   convergence-study harness that ties everything together.

pub mod bcp;
pub mod config;
pub mod cost;
pub mod error;
pub mod fluid;
pub mod model;
pub mod policy;
pub mod rng;
pub mod sim;
pub mod study;
pub mod stats;

mod simplex;

pub use error::{Error, Result};
