use thiserror::Error;

/// Errors raised anywhere in the simulator.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("index out of range: {0}")]
    Index(String),

    #[error("resource element ({subcarrier}, {symbol}) mapped twice")]
    Collision { subcarrier: usize, symbol: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    Length { expected: usize, got: usize },

    #[error("no valid CSI for user {user}")]
    StaleCsi { user: usize },

    #[error("singular channel Gram matrix at subcarrier {subcarrier}")]
    Singular { subcarrier: usize },

    #[error("payload of {payload_bytes} bytes exceeds capacity of {capacity_bytes} bytes")]
    Capacity {
        payload_bytes: usize,
        capacity_bytes: usize,
    },

    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),

    #[error("invalid value for `{field}`: {msg}")]
    Validation { field: String, msg: String },

    #[error("frame {frame} slot {slot}: {source}")]
    Scenario {
        frame: usize,
        slot: usize,
        #[source]
        source: Box<SimError>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl SimError {
    /// Short machine-readable tag used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            SimError::Index(_) => "index",
            SimError::Collision { .. } => "collision",
            SimError::Config(_) => "config",
            SimError::Length { .. } => "length",
            SimError::StaleCsi { .. } => "stale_csi",
            SimError::Singular { .. } => "singular",
            SimError::Capacity { .. } => "capacity",
            SimError::UnknownKey(_) => "unknown_key",
            SimError::Validation { .. } => "validation",
            SimError::Scenario { .. } => "scenario",
            SimError::Io(_) => "io",
        }
    }

    pub(crate) fn validation(field: &str, msg: impl Into<String>) -> Self {
        SimError::Validation {
            field: field.to_string(),
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, SimError>;
