//! One-dimensional Cahn–Hilliard slow-manifold simulator.
//!
//! The crate evolves `u_t = -(u_xx - G'(u))_xx` on a periodic grid with a
//! pseudo-spectral IMEX scheme, constructs kink, bump and glued-kink
//! profiles, projects trajectories onto those families and checks a set of
//! functional inequalities along the way.

pub mod backward;
pub mod error;
pub mod experiments;
pub mod fit;
pub mod functionals;
pub mod grid;
pub mod inequality;
pub mod io;
pub mod manifold;
pub mod par;
pub mod potential;
pub mod profiles;
pub mod quadrature;
pub mod solver;

pub use error::{Error, Result};
pub use experiments::Scenario;
pub use grid::{Field, Grid};
pub use potential::PotentialSpec;
