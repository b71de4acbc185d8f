//! Identity testing for collections of quantum states in the sampling model.
//!
//! The core object is the Poissonized estimator of the mean squared Hilbert-Schmidt
//! distance of a weighted collection `{(p_i, rho_i)}` to its average state. Around it sit
//! exact moment formulas, a threshold tester, Schur-Weyl combinatorics, and the hard
//! instance family used for the sample-complexity lower bound.

pub mod collection;
pub mod densmat;
pub mod divergences;
pub mod estimator;
pub mod harness;
pub mod error;
pub mod lowerbound;
pub mod symmetry;
pub mod tester;

pub use collection::{Collection, CountVector};
pub use densmat::{DensityMatrix, Spectrum};
pub use divergences::Distribution;
pub use error::{Error, Result};
