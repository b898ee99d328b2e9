//! Hard-sphere kinetic-theory workbench.
//!
//! The crate realizes the finite-N machinery of the Master kinetic equation for
//! a gas of smooth hard spheres in a cube: excluded-volume theta functions,
//! self-consistent occupation coefficients, the Master and Boltzmann collision
//! operators, an event-driven N-body simulator, and the harness that follows
//! all of these along Boltzmann-Grad sequences (N -> infinity, N sigma^2 fixed).
//!
//! Conventions used throughout:
//! * `n12 = (r1 - r2) / sigma` at contact, `v12 = v1 - v2`; a pair is incoming
//!   when `v12 . n12 < 0` and outgoing when `v12 . n12 > 0`.
//! * The strong theta function is 1 for strictly positive arguments, 0 otherwise.
//! * Lengths are in units of the cube edge, velocities in units of the thermal
//!   speed, unless a type says otherwise.

pub mod collision;
pub mod config;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod harness;
pub mod md;
pub mod occupation;
pub mod pdf;
pub mod quadrature;
pub mod relax;
pub mod rng;

pub use error::{Error, Result};
pub use geometry::{HardSphereModel, NBodyConfig, PhasePoint};

/// Three-vector used for positions, velocities and unit normals.
pub type Vec3 = nalgebra::Vector3<f64>;
