//! Reconvexified continuum damage at finite strains.
//!
//! The crate provides the undamaged energies ([`hyperelastic`]), the damage
//! law and its condensed incremental potential ([`damage`]), a discrete convex
//! envelope ([`convexify`]), the reconvexified material routine
//! ([`material_point`]), microsphere homogenization ([`microsphere`]), a small
//! total-Lagrangian FE solver ([`fem`]) and scenario-driven benchmark drivers
//! ([`scenario`], [`harness`]).

pub mod convexify;
pub mod damage;
pub mod error;
pub mod fem;
pub mod hyperelastic;
pub mod material_point;
pub mod microsphere;

pub use error::{Error, Result};
pub mod harness;
pub mod scenario;
