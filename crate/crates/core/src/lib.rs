//! Numerical toolkit for linear q-difference equations with `|q| > 1`.
//!
//! The crate covers theta-function solutions, Newton polygons, two-slope
//! normal forms, direction-dependent summation of divergent gauge
//! transformations on the elliptic curve `E_q = ℂ*/q^ℤ`, Stokes cocycles,
//! three families of analytic invariants (q-Borel, alien derivatives, Serre
//! duality pairings) and Birkhoff connection matrices of global fuchsian
//! systems.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod connection;
pub mod contour;
pub mod dd;
pub mod elliptic;
pub mod error;
pub mod invariants;
pub mod laurent;
pub mod linalg;
pub mod newton;
pub mod qmodule;
pub mod special;
pub mod suite;
pub mod summation;

pub use error::{Error, Result};
pub use laurent::{Evaluation, LaurentWindow, NumericContext};
