//! Numerical machinery for dyadic harmonic analysis on finite metric
//! measure spaces: dyadic cube systems, spectral functional calculus for
//! measure-symmetric operators, Calderon-type reproducing decompositions,
//! continuous and discrete square functions, exponential-square and
//! weighted-inequality verification suites, and ground-state bounds for
//! Schrodinger operators.

pub mod calderon;
pub mod dyadic;
pub mod error;
pub mod geometry;
pub mod operator;

pub use error::{CoreError, Result};
