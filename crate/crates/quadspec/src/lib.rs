//! Limiting spectra of quadratic polynomials in Wigner matrices.
//!
//! [`model`] validates and classifies a polynomial, [`scalar`] solves for its
//! Stieltjes transform, [`edges`] and [`density`] turn that into a support
//! and a density, [`mde`] handles the linearized Dyson equation, and [`sim`]
//! samples the random matrices. [`harness`] compares the two sides.
//!
//! The guide under `book/` walks through each step with runnable examples.

pub(crate) mod cx;
pub mod density;
pub mod edges;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod mde;
pub mod model;
pub mod roots;
pub mod scalar;
pub mod sim;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/specs.md")]
    mod specs {}
    #[doc = include_str!("../../../book/src/stieltjes.md")]
    mod stieltjes {}
    #[doc = include_str!("../../../book/src/edges.md")]
    mod edges {}
    #[doc = include_str!("../../../book/src/density.md")]
    mod density {}
    #[doc = include_str!("../../../book/src/dyson.md")]
    mod dyson {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/verification.md")]
    mod verification {}
}
