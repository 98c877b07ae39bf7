//! Core library for SVD-based analysis of convolutional networks: dense
//! tensor algebra, the unfolded and Toeplitz matrizations of
//! cross-correlation, spectral layer metrics, a deterministic forward-pass
//! engine, and dataset signal profiling with class hypergraphs.

pub mod convmat;
pub mod decompose;
pub mod error;
pub mod io;
pub mod model;
pub mod profile;
pub mod spectral;
pub mod tensor;

pub use error::{DdpError, Result};
