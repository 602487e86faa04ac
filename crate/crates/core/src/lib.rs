//! Two-mode (double-well) Bose-Einstein condensate Mach-Zehnder interferometer
//! with atom-atom interactions.
//!
//! The crate works in the Dicke basis of `N` bosons in two modes. Collective
//! spin operators live in [`spin`], input-state factories in [`states`], the
//! exact unitary interferometer sequence in [`dynamics`], Fisher information
//! and Cramér-Rao bounds in [`metrology`], Monte-Carlo Bayesian phase
//! estimation in [`estimation`], and parameter scans with CSV/JSON
//! persistence in [`experiments`].
//!
//! Units are dimensionless with ħ = 1.

pub mod dynamics;
pub mod error;
pub mod estimation;
pub mod experiments;
pub mod linalg;
pub mod metrology;
pub mod spin;
pub mod states;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
