//! Inner/outer factorization of SISO time-delay plants whose numerator and
//! denominator are quasi-polynomials, the Φ decomposition that splits a
//! delayed rational function into a finite-impulse-response part and a
//! rational remainder, and the assembly of H∞ controllers in FIR form.

pub mod controller;
pub mod delay;
pub mod factorization;
pub mod fixtures;
pub mod lti;
pub mod phi;
pub mod poly;
pub mod qpoly;
pub mod report;
pub mod rootfinder;

pub use delay::RationalDelay;
pub use poly::Poly;
pub use qpoly::{KindTag, QuasiPolynomial};
