//! Numerical laboratory for Grushin-type degenerate parabolic equations
//!
//! ∂_t u − Δ_x u − |x|^{2γ} b(x) Δ_y u = g  on (0,T) × Ω₁ × Ω₂,
//!
//! with homogeneous Dirichlet data. Ω₁ is an interval or a rectangle, Ω₂ an
//! interval. The crate provides finite-difference operators, the Fourier
//! decomposition in y, implicit time stepping, Carleman weights, the dyadic
//! Lebeau–Robbiano schedule, empirical observability constants, source
//! reconstruction and constructive null controls.

pub mod carleman;
pub mod control;
pub mod domain;
pub mod evolution;
pub mod inverse_source;
pub mod error;
pub mod linalg;
pub mod lr_schedule;
pub mod modal;
pub mod observability;
pub mod operator;
pub mod registry;
pub mod spectral;

pub use error::{GrushinError, Result};
