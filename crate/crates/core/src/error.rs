use thiserror::Error;

/// Errors surfaced by the simulator, learners and experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration violates one or more invariants.
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("could not place {placed} of {wanted} subnetworks with {min_sep} m separation after {attempts} attempts (area too dense)")]
    PlacementFailed { placed: usize, wanted: usize, min_sep: f64, attempts: usize },
    #[error("own signal {signal:e} mW is not below RSSI {rssi:e} mW")]
    SinrDomain { signal: f64, rssi: f64 },
    #[error("step called on a finished episode; call reset first")]
    EpisodeFinished,
    #[error("invalid action for agent {agent}: {reason}")]
    InvalidAction { agent: usize, reason: String },
    #[error("checkpoint fingerprint {found} does not match configuration fingerprint {expected}")]
    FingerprintMismatch { expected: String, found: String },
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error("non-finite value in {what} at update {update}")]
    NonFinite { what: String, update: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
