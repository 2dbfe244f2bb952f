//! Transient stability assessment toolkit.
//!
//! The crate covers the whole pipeline from a classical-model network case to
//! a trained multiple-kernel probit classifier:
//!
//! - [`netmodel`]: network cases, constant-impedance load folding, Kron
//!   reduction onto generator internal nodes and the pre-fault equilibrium.
//! - [`simulator`]: staged swing-equation integration and the rotor-angle
//!   stability label.
//! - [`features`]: the 23 disturbance-stage features in three subsets, and
//!   Z-score standardization.
//! - [`kernels`]: Gaussian and polynomial Gram matrices and their convex
//!   combination.
//! - [`vbpmkl`]: variational-Bayes multinomial probit with kernel fusion.
//! - [`kbstore`]: knowledge-base generation, persistence, splits and
//!   measurement noise.
//! - [`harness`]: experiment schemes, sweeps, metrics and plot data.

pub mod error;
pub mod features;
pub mod harness;
pub mod kbstore;
pub mod kernels;
pub mod netmodel;
pub mod quadrature;
pub mod simulator;
pub mod vbpmkl;

pub use error::{Error, Result};
