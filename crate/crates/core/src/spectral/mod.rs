//! Pseudospectral representation of periodic fields on the torus.

pub mod field;
pub mod format;
pub mod grid;
pub mod norms;
pub mod ops;

pub use field::{ScalarDensity, SpectralField};
pub use grid::{Grid, GridSpec};
pub use norms::{
    dissipation_functional, hilbert_schmidt_norm, hilbert_schmidt_sobolev_norm, lebesgue_norm,
    poincare_ratio, sobolev_norm, sobolev_norm_plancherel, FieldDiagnostics,
};
pub use ops::{advection, derivative, divergence, leray_project, nonlinear_term};
