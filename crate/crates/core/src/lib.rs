//! Spectral laboratory for the cubic focusing NLS with an external potential,
//!
//! ```text
//! i u_t = -1/2 u_xx + V u - |u|^2 u,
//! ```
//!
//! on a periodic grid standing in for the real line. The crate provides
//! split-step propagation with conserved-quantity observers, stationary
//! scattering data (Jost solutions, Wronskian, `T`/`R`, bound states) for
//! `H = -1/2 d^2/dx^2 + V`, and the fast-soliton transmission experiments
//! that measure how `||u - u_soliton||_{L^2}` scales with the boost velocity.

pub mod checks;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod io;
pub mod potentials;
pub mod propagator;
pub mod spectral;

pub use error::{Error, Result};
pub use grid::{Field, Grid};
pub use potentials::PotentialSpec;
