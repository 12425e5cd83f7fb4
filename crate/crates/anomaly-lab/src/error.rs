use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("degree mismatch: {0}")]
    Degree(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("inner product is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("face-closure violation: {0}")]
    FaceClosure(String),
    #[error("action axiom violated: {0}")]
    Action(String),
    #[error("rank decision is ambiguous: singular value {value:e} lies within a factor {band} of threshold {threshold:e}")]
    RankAmbiguous { value: f64, threshold: f64, band: f64 },
    #[error("spectral failure: {0}")]
    Spectral(String),
    #[error("invalid scale t = {0}")]
    Scale(f64),
    #[error("identity violated: {0}")]
    Identity(String),
    #[error("cap overflow: {0}")]
    CapOverflow(String),
    #[error("perturbation lemma hypothesis failed: {0}")]
    Perturbation(String),
    #[error("dual-path mismatch: {0}")]
    DualPath(String),
    #[error("cochain is not closed: {0}")]
    NotClosed(String),
    #[error("input error: {0}")]
    Input(String),
}

pub type Result<T> = std::result::Result<T, LabError>;
