//! Numerical laboratory for spectral boundary value problems on manifolds
//! whose boundary is a finite covering of a circle.
//!
//! The library builds finite models of first-order operators `-i d/dx + V(x)`
//! on circles, their lifts along n-fold coverings, and the boundary value
//! problems they generate on cylinders and disks. On top of that it computes
//! the quantities that make such problems interesting:
//!
//! - eta invariants (closed form and heat-regularized) and spectral flow,
//! - numerical Fredholm indices with Atiyah-Patodi-Singer spectral
//!   conditions or non-local conditions coupling covering fibers,
//! - the mod-n index defect `ind(D, PI+) + eta(A) - n eta(A0)` together with
//!   its homotopy-invariance, pullback-vanishing, and Freed-Melrose checks,
//! - equivariant indices and Lefschetz fixed-point contributions on the
//!   rotating disk, with the congruence between the two,
//! - Shapiro-Lopatinskii ellipticity checks and the order-reduction
//!   homotopy at symbol level,
//! - the difference-construction projection families, verified as
//!   projections with the required seam continuity and gluing.
//!
//! All computations are deterministic: identical inputs give identical
//! outputs, including eigenvector phases.

pub mod bvp;
pub mod covering;
pub mod discretize;
pub mod error;
pub mod invariants;
pub mod kproj;
pub mod spectral;
pub mod symbols;
pub mod util;

pub use error::{Error, Result};

/// Dense complex matrix used throughout.
pub type CMat = nalgebra::DMatrix<num_complex::Complex64>;
/// Dense complex column vector.
pub type CVec = nalgebra::DVector<num_complex::Complex64>;
