//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("failed to parse expression `{src}`: {msg}")]
    Parse { src: String, msg: String },
    #[error("entry ({row},{col}) is not smooth at x = {x}: {what}")]
    NonSmoothEntry { row: usize, col: usize, x: f64, what: String },
    #[error("gauge matrix is numerically singular (|det| = {det:e})")]
    SingularGauge { det: f64 },
    #[error("reparametrization function f{axis} is non-positive at x = {x} (value {value})")]
    NonPositiveReparam { axis: usize, x: f64, value: f64 },
    #[error("angular reparametrization f{axis} does not preserve the 2*pi period (new period {period})")]
    NonPeriodicReparam { axis: usize, period: f64 },
    #[error("metric coefficient h{axis}^2 = {value} is non-positive at the requested point")]
    NonPositiveCoefficient { axis: usize, value: f64 },
    #[error("invalid fixture: {0}")]
    InvalidFixture(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("linear solver diverged: residual {residual:e} after {iterations} iterations (tol {tol:e})")]
    SolverDiverged { residual: f64, iterations: usize, tol: f64 },
    #[error("conformal factor is non-positive (min value {min:e})")]
    NonPositiveSolution { min: f64 },
    #[error("alpha field is too close to zero for division (min |alpha| = {min:e})")]
    DivisionNearZero { min: f64 },
}

#[derive(Debug, Error)]
pub enum SpectrumError {
    #[error("monodromy integrator failed at (mu2, nu2) = ({mu2}, {nu2}): {what}")]
    IntegratorFailure { mu2: f64, nu2: f64, what: String },
    #[error("discrete eigensolver failed: {0}")]
    EigsolverFailure(String),
    #[error("not enough joint-spectrum pairs in the cone: found {found}, need {need}")]
    InsufficientPairs { found: usize, need: usize },
}

#[derive(Debug, Error)]
pub enum RadialError {
    #[error("radial integrator overflow at |Re mu|*A = {scale}")]
    IntegratorOverflow { scale: f64 },
    #[error("spectral pair lies in the Dirichlet spectrum (|Delta| = {delta_abs:e} below pole threshold)")]
    PoleAtDirichletEigenvalue { delta_abs: f64 },
}

#[derive(Debug, Error)]
pub enum DnError {
    #[error("joint eigenvalue (mu2, nu2) = ({mu2}, {nu2}) coincides with a radial Dirichlet eigenvalue; block withheld")]
    PoleInSpectrum { mu2: f64, nu2: f64 },
    #[error(transparent)]
    Radial(#[from] RadialError),
}

/// Scenario/CLI configuration problems; exit code 2 territory.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{file}: {msg}")]
    Invalid { file: String, msg: String },
    #[error("missing file {0}")]
    Missing(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}
