//! Relative rotation and translation-direction estimation from bearing-vector
//! correspondences with per-feature position uncertainty.
//!
//! The crate provides the normal epipolar constraint (NEC) and its probabilistic,
//! covariance-weighted variant (PNEC), the solvers for both, unscented propagation of
//! image-plane covariances onto bearing vectors, KLT-based covariance extraction,
//! a seeded synthetic benchmark and evaluation metrics.

pub mod eigen;
pub mod energy;
pub mod error;
pub mod geometry;
pub mod klt;
pub mod metrics;
pub mod optimizer;
pub mod simulation;
pub mod uncertainty;

pub use energy::{BearingPair, CorrespondenceSet, Regularization};
pub use error::{Error, Result};
pub use geometry::{CayleyParams, Rotation3, SphericalDirection, UnitVector3};
pub use optimizer::{EstimateReport, RelativePose, SolverConfig};
