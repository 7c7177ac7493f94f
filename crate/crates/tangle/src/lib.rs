//! Numerical toolkit for infinitely wrapped horseshoe return maps.
//!
//! The map family lives in [`map_core`]. [`survival_sets`] iterates it to
//! find surviving sets, attractors and Lyapunov exponents.
//! [`horseshoe_certifier`] checks the fold and cone conditions of the
//! full-shift regime. [`periodic_orbits`] solves for fixed points and
//! periodic orbits. [`manifolds_tangency`] builds stable and unstable curves
//! and locates homoclinic tangencies. [`melnikov_bridge`] derives the map
//! constants from a periodically forced planar ODE. [`cli`] wires everything
//! to a flat-text configuration.

pub mod cli;
pub mod horseshoe_certifier;
pub mod manifolds_tangency;
pub mod map_core;
pub mod melnikov_bridge;
pub mod numeric;
pub mod periodic_orbits;
pub mod survival_sets;

pub use map_core::{ForcingProfile, MapError, MapParams, PhasePoint, Step};
