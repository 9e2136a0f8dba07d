//! Hyperbolic kernel graph networks for multimodal brain connectomes.
//!
//! The crate is `no_std` (with `alloc`) when the default `std` feature is
//! disabled. Everything here is pure computation: Poincaré-ball geometry,
//! random-feature hyperbolic kernels, HKGCN/HKGAT encoders with their
//! Euclidean GCN/GAT counterparts, SC-FC coupling, the tangent-space
//! predictor head, analytic gradients, Adam, cross-validation and cost
//! accounting. File formats and the command-line front end live in the
//! `hkgf` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod cost;
pub mod error;
pub mod evaluation;
pub mod fusion;
pub mod graphs;
pub mod kernels;
pub mod layers;
pub mod manifold;
pub mod matrix;
pub mod predictor;
pub mod stats;
pub mod training;

pub use error::{Error, Result};
pub use matrix::Matrix;
