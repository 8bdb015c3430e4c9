//! Rotating vortex-pair solutions of the incompressible Euler equation on the
//! unit sphere, computed by maximizing energy minus impulse over
//! rearrangement classes of vorticity on the northern hemisphere.
//!
//! The crate is organised bottom-up: [`sphere`] holds exact geometric
//! primitives, [`field`] the hemisphere grid, scalar fields, functionals and
//! rearrangement steps, [`green`] the Dirichlet Green operator, [`maximizer`]
//! the ascent solver and its diagnostics, [`pointvortex`] the N-vortex model
//! and [`dynamics`] a regularized particle evolution of patch vorticity.

pub mod dynamics;
pub mod error;
pub mod field;
pub mod green;
pub mod maximizer;
pub mod pointvortex;
pub mod sphere;
pub mod sum;

pub use error::{Error, Result};
