//! Sparse multivariate polynomials and their Gram-matrix representations.

mod compiled;
mod monomial;
mod parse;
mod polynomial;
pub mod smr;

pub use compiled::CompiledPolynomials;
pub use monomial::Monomial;
pub use parse::{parse_polynomial, parse_polynomial_auto};
pub use polynomial::Polynomial;
pub use smr::{power_vector, smr_dimensions, smr_lift, smr_null_basis, smr_of, PowerVector, SmrForm};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("dimension mismatch: expected {expected} variables, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("cannot parse `{input}`: {message}")]
    Parse { input: String, message: String },
    #[error("power vector for {num_vars} variables at degree {degree} exceeds integer capacity")]
    Capacity { num_vars: usize, degree: u32 },
    #[error("monomial {monomial} is not spanned by a power vector of degree {basis_degree}")]
    DegreeExceedsBasis { monomial: String, basis_degree: u32 },
    #[error("{0}")]
    InvalidArgument(String),
}
