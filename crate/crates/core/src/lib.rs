//! Rigid body with a cavity filled by a compressible viscous fluid.
//!
//! The crate provides a body-frame finite-volume simulator for the coupled
//! system, a Newton solver for its steady rigid rotations, and the
//! diagnostics that relate the two.

pub mod checkpoint;
pub mod config;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod initial;
pub mod linalg;
pub mod orientation;
pub mod physics;
pub mod run;
pub mod steady;
pub mod verify;

pub use error::{Error, Result};
