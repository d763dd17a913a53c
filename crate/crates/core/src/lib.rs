//! Bounded simplex-structured matrix factorization.
//!
//! Fits `X ≈ WH` where every column of `W` lies in a per-row box `[a, b]` and
//! every column of `H` lies on the probability simplex, optionally with
//! missing entries described by an [`ObservationMask`]. The same solver also
//! handles NMF (`W, H ≥ 0`) and unconstrained MF by swapping projections.

pub mod error;
pub mod eval;
pub mod identifiability;
pub mod io;
pub mod kernels;
pub mod mask;
pub mod matrix;
pub mod model;
pub mod preprocess;
pub mod projection;
pub mod solver;

pub use error::{Error, Result};
pub use mask::ObservationMask;
pub use matrix::DenseMatrix;
pub use model::{FactorPair, ModelVariant, SolverConfig, VariantKind};
pub use projection::BoundsVector;
pub use solver::{solve, solve_centered, SolveReport, StopReason};
