//! Numerical tensor calculus for semi-Riemannian manifolds carrying a smooth
//! map into a Riemannian target.
//!
//! The engine evaluates chart-defined metrics and maps through truncated
//! multivariate Taylor expansions ([`jets`]), builds the Levi-Civita curvature
//! tower in coordinates ([`geometry`]), the calculus of the map (energy,
//! tension, bi-tension, stress-energy — [`phimap`]), and the map-coupled
//! curvature tensors through the Bach-type tensor and its divergence
//! ([`phicurv`]). On top of that sit conformal transformation laws
//! ([`conformal`]), warped products ([`warped`]), quadrature and variational
//! gradient checks on periodic charts ([`variational`]), a named scenario
//! library ([`scenarios`]), independent cross-check paths ([`oracle`]) and the
//! verification suites consumed by the CLI ([`suites`]).
//!
//! Everything is pure and pointwise: fields are immutable after construction
//! and evaluation is safe to parallelize over sample points.

pub mod conformal;
pub mod expr;
pub mod geometry;
pub mod jets;
pub mod oracle;
pub mod phicurv;
pub mod phimap;
pub mod report;
pub mod scenarios;
pub mod suites;
pub mod variational;
pub mod warped;

pub use expr::Expr;
pub use geometry::{Chart, Frame, GeomAt, JetTensor, MetricField, ScalarField, Slot, Tensor};
pub use jets::{Jet, JetSpace, MultiIndex};

/// Engine-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("jet shape mismatch: ({0} vars, order {1}) vs ({2} vars, order {3})")]
    JetShape(usize, usize, usize, usize),
    #[error("jet order budget exhausted: needed {needed}, available {available}")]
    JetBudget { needed: usize, available: usize },
    #[error("variable index {0} out of range for {1} variables")]
    VarIndex(usize, usize),
    #[error("multi-index degree {0} exceeds jet order {1}")]
    DegreeOverflow(usize, usize),
    #[error("domain error in {op}: {msg}")]
    Domain { op: &'static str, msg: String },
    #[error("degenerate metric at {point:?}: |det g| = {det:e}")]
    DegenerateMetric { point: Vec<f64>, det: f64 },
    #[error("point {point:?} outside chart domain")]
    OutsideDomain { point: Vec<f64> },
    #[error("dimension {dim} not supported here: {why}")]
    Dimension { dim: usize, why: &'static str },
    #[error("parse error at offset {offset}: {msg}")]
    Parse { offset: usize, msg: String },
    #[error("scenario error: {0}")]
    Scenario(String),
    #[error("config error in `{field}`: {msg}")]
    Config { field: String, msg: String },
    #[error("quadrature requires a fully periodic chart (axis {0} is not periodic)")]
    NotPeriodic(usize),
    #[error("convergence failure: {0}")]
    Convergence(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
