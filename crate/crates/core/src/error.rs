use thiserror::Error;

/// Errors shared across the refinement engine.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("point projects at or behind the camera")]
    BehindCamera,
    #[error("rotation angle too close to pi for a unique logarithm")]
    BranchAmbiguity,
    #[error("degenerate configuration: {0}")]
    Degenerate(String),
    #[error("input too small: {0}")]
    TooSmall(String),
    #[error("insufficient overlap: {valid} valid pixels, need {required}")]
    InsufficientOverlap { valid: usize, required: usize },
    #[error("normal equations remained singular after damping escalation")]
    SingularSystem,
    #[error("ground truth has no valid pixels")]
    EmptyGroundTruth,
    #[error("no valid pixels in loss region")]
    EmptyRegion,
    #[error("renderer gap: ray hit nothing and scene has no background")]
    RendererGap,
}

pub type Result<T> = std::result::Result<T, CoreError>;
