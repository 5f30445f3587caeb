//! Simulation engine for information scrambling in mean-field Bose gases.
//!
//! The crate is organized around one pipeline: integrate the nonlinear
//! Hartree equation on a finite mode space ([`hartree`]), propagate linear
//! fluctuations around the condensate with the projected Bogoliubov
//! generator ([`bogoliubov`]), and evaluate the large-N scrambling
//! quantities (OTOCs, multi-time covariances, the out-of-time-ordered Wick
//! rule) that the fluctuation propagator determines ([`scrambling`]).
//! An exact finite-N many-body simulator on small lattices ([`oracle`])
//! provides the reference values the large-N formulas are validated
//! against.

pub mod bogoliubov;
pub mod hartree;
pub mod oracle;
pub mod scrambling;
pub mod space;

pub use space::{Field, InteractionKernel, KernelSpec, ModeSpace, Observable};

/// Errors shared by all engine modules.
#[derive(Debug, thiserror::Error)]
pub enum CoreError {
    #[error("fields live on different mode spaces")]
    SpaceMismatch,
    #[error("field is not normalized (|norm - 1| = {deviation:.3e})")]
    Unnormalized { deviation: f64 },
    #[error("{op} requires the {needed} backend")]
    BackendMismatch {
        op: &'static str,
        needed: &'static str,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("norm drift {drift:.3e} exceeded 1e-6 at t = {t}")]
    NormDrift { t: f64, drift: f64 },
    #[error("time {t} outside trajectory range [{t0}, {t1}]")]
    TrajectoryRange { t: f64, t0: f64, t1: f64 },
    #[error("time {t} does not align with the snapshot grid (dt = {dt})")]
    SnapshotMisalignment { t: f64, dt: f64 },
    #[error("pairing enumeration limited to m <= 12, got {0}")]
    PairingCap(usize),
    #[error("odd order {0} has no pairings")]
    OddOrder(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("real part of the covariance is not positive definite")]
    NotPositiveDefinite,
    #[error("covariance has imaginary part {0:.3e} beyond tolerance")]
    ImaginaryCovariance(f64),
    #[error("Fock sector dimension {dim} exceeds cap {cap}")]
    SectorCap { dim: usize, cap: usize },
    #[error("nonpositive value in fit window at t = {0}")]
    NonpositiveFitValue(f64),
    #[error("eigendecomposition failed: {0}")]
    Eigen(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
