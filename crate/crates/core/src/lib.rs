//! Numerical laboratory for the discrete Klein-Gordon equation
//!
//! ```text
//! (∂_tt + G_θ + m²) u(n, t) = 0,   (G_θ u)(n) = -u(n+1) - u(n-1) + 2u(n) + V(θ + nω) u(n)
//! ```
//!
//! on a truncated window of ℤ with a small quasi-periodic potential `V`.
//!
//! The crate is organised bottom-up:
//!
//! * [`potential`]: trigonometric-polynomial potentials, Diophantine margins and
//!   the KAM bookkeeping sequences.
//! * [`lattice`]: Jacobi matrices on a finite window and a Sturm-bisection /
//!   inverse-iteration eigensolver with an optional on-disk cache.
//! * [`cocycle`]: the Schrödinger transfer-matrix cocycle, fibered rotation
//!   numbers, Lyapunov exponents, gap scans and gap labels.
//! * [`calculus`]: functional calculus of the truncated operator (propagators,
//!   resolvents, Combes-Thomas probes, the Balakrishnan inverse square root).
//! * [`oscillatory`]: the free dispersion relation and the free kernel as an
//!   oscillatory integral.
//! * [`dynamics`]: linear and nonlinear evolution, decay fits, Strichartz norms
//!   and energy accounting.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calculus;
pub mod cocycle;
pub mod dynamics;
mod error;
pub mod lattice;
pub mod numeric;
pub mod oscillatory;
pub mod potential;
pub mod quadrature;

pub use error::{Error, Result};
