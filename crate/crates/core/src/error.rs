use thiserror::Error;

/// Errors raised by geometry, calculus, classification and solver routines.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum SdaeError {
    #[error("point is off the manifold `{manifold}` (residual {residual:e})")]
    InvalidPoint { manifold: String, residual: f64 },

    #[error("retraction onto `{manifold}` is degenerate at the given ambient point")]
    DegenerateRetraction { manifold: String },

    #[error("manifold `{0}` does not provide a geodesic distance")]
    UnsupportedMetric(String),

    #[error("point lies outside the domain of chart `{chart}`")]
    ChartDomain { chart: String },

    #[error("manifold `{0}` carries no connection data")]
    MissingConnection(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("custom generator `{name}` violates the symbol condition (error {error:e})")]
    SymbolCondition { name: String, error: f64 },

    #[error("constraint derivative with respect to the algebraic variable is singular (condition {condition:e})")]
    SingularConstraint { condition: f64 },

    #[error("degenerate update direction: |D2Y . a| = {value:e}")]
    DegenerateDirection { value: f64 },

    #[error("constraint value within {margin:e} of the cut locus (distance {distance}, injectivity radius {radius})")]
    CutLocusProximity { distance: f64, radius: f64, margin: f64 },

    #[error("stiffness cap reached at t = {t}: b = {b} would exceed cap {cap}")]
    Stiffness { t: f64, b: f64, cap: f64 },

    #[error("gradient descent fallback failed at t = {t}: |Y| = {residual:e} after {iterations} iterations")]
    FallbackFailure { t: f64, residual: f64, iterations: usize },

    #[error("gradient descent stalled at a suspected local minimum: |Y| = {residual:e}, |grad| = {gradient:e}")]
    LocalMinimum { residual: f64, gradient: f64 },

    #[error("gradient descent did not converge: |Y| = {residual:e} after {iterations} iterations")]
    NonConvergence { residual: f64, iterations: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("scheme/generator mismatch: {0}")]
    SchemeMismatch(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("sampling failed: {0}")]
    Sampling(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),
}

pub type Result<T> = std::result::Result<T, SdaeError>;
