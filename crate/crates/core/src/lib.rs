pub mod coupled_dynamics;
pub mod error;
pub mod experiments;
pub mod field_grid;
pub mod linearized_spectral;
pub mod quadrature;
pub mod soliton_manifold;
pub mod spinor_algebra;
pub mod symplectic_geometry;

pub use error::{Error, Result};
