use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Requested feature lies outside what the closed-form algebra supports.
    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid photon mixture: {0}")]
    InvalidMixture(String),

    #[error("invalid phase-space function: {0}")]
    InvalidFunction(String),

    /// The evidence integral vanished or became non-finite for an outcome.
    #[error("degenerate posterior: {0}")]
    DegeneratePosterior(String),

    #[error("no selected events")]
    NoEvents,

    #[error("degenerate selection: selection probability {0:e} is below 1e-12")]
    DegenerateSelection(f64),

    #[error("variance retargeting only supports v_target <= v_source (got {source_v} -> {target_v})")]
    UnsupportedDirection { source_v: f64, target_v: f64 },

    #[error("outcome sampler envelope construction failed: {0}")]
    Envelope(String),
}

pub type Result<T> = std::result::Result<T, Error>;
