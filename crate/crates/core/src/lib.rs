//! Simulation and analysis of bittide logical clock synchronization.
//!
//! - [`graph`]: oriented graphs, Laplacian spectra, resistance distance
//! - [`numerics`]: dense linear algebra, RK4, quadrature
//! - [`afm`]: event-driven abstract frame model
//! - [`ode`]: the linearized PI closed loop
//! - [`analysis`]: stability certificates and closed-form L2 performance
//! - [`scenario`], [`trace`], [`compare`], [`report`]: file formats and reports

// `!(x > 0.0)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod afm;
pub mod analysis;
pub mod compare;
pub mod error;
pub mod graph;
pub mod numerics;
pub mod ode;
pub mod report;
pub mod scenario;
pub mod trace;

pub use error::{Error, Result};
pub use graph::{OrientedGraph, SpectralData};
pub use ode::Gains;
