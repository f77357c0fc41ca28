//! Elliptic approximation of two-dimensional branched transport.
//!
//! The crate minimizes
//! `E_eps(u) = eps^(alpha-1) ∫|u|^beta + eps^(alpha+1) ∫|∇u|^2`
//! over vector fields with prescribed divergence on a staggered grid,
//! builds recovery fields for finite graphs, and provides the oracles
//! (graph energies, Wasserstein-1, dyadic atomicity functional) used to
//! check the results.

// `!(x > 0.0)` is used on purpose: it rejects NaN along with bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constants;
pub mod diagnostics;
pub mod energy;
pub mod error;
pub mod grid;
pub mod io;
pub mod measures;
pub mod profile;
pub mod quadrature;
pub mod solver;
pub mod synth;
pub mod w1;

pub use error::{Error, Result};
pub use grid::{GridSpec, NodeField2D, ScalarField2D, VectorField2D};
pub use measures::{AtomicMeasure, Edge, Point, WeightedGraph};
