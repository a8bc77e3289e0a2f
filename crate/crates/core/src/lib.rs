//! Numerical laboratory for moments of moments of the Riemann zeta function.
//!
//! The crate is organised bottom-up: [`numeric`] holds quadrature and summation
//! helpers, [`zeta`] evaluates ζ and its gamma-factor apparatus, [`primes`]
//! provides sieving and multiplicative functions, [`proxy`] builds sparse
//! Dirichlet polynomials, [`mainterms`] evaluates shifted moment main terms by
//! contour quadrature, and [`moments`] estimates moments of moments.

pub mod error;
pub mod mainterms;
pub mod moments;
pub mod numeric;
pub mod primes;
pub mod proxy;
pub mod zeta;

pub use error::{Error, Result};
pub use num_complex::Complex64;
