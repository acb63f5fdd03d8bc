//! Exact arithmetic on perfectoid Tate curves at finite precision.
//!
//! The crate models the quotient of a punctured perfectoid disk by the
//! subgroup generated by a modulus `q` with `0 < |q| < 1`.  Everything is
//! computed exactly on finite representatives: scalars are digit expansions
//! with `p`-power-divisible rational exponents ([`scalar`]), functions on
//! annuli are windowed sparse series ([`series`]), divisors carry fractional
//! multiplicities and are compared through theta quotients ([`lattice`]),
//! and the curve itself is probed through an annulus cover whose cohomology
//! is computed by exact linear algebra ([`curve`]).

pub mod curve;
pub mod error;
pub mod gen;
pub mod io;
pub mod lattice;
pub mod scalar;
pub mod series;

pub use error::{Error, Result};
