//! Frequency-domain models that transform once.
//!
//! The crate provides orthonormal DCT-II/DFT transforms, reduced-order
//! k-space layers wired either with a transform pair per layer or with a
//! single forward transform, variance-preserving initialization, mode
//! selection analysis, synthetic PDE data, training, and a speedup benchmark.

pub mod bench;
pub mod data;
pub mod error;
pub mod init;
pub mod layers;
pub mod modes;
pub mod rng;
pub mod scalar;
pub mod training;
pub mod transforms;
pub mod verify;

pub use error::{Error, Result};
pub use transforms::{Coeffs, Shape, Signal, Spectrum, TransformKind, TransformOperator};
