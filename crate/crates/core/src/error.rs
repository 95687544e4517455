use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A physical quantity is out of its admissible range.
    #[error("invalid physical parameter `{name}`: {reason}")]
    Physics { name: &'static str, reason: String },

    #[error("position x = {x} m lies outside the beam [0, {length}] m")]
    OutsideBeam { x: f64, length: f64 },

    #[error("sample rate {sample_rate} Hz cannot resolve {frequency} Hz (Nyquist limit {} Hz)", sample_rate / 2.0)]
    Nyquist { frequency: f64, sample_rate: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("series of {len} samples is shorter than one {window}-sample window")]
    SeriesTooShort { len: usize, window: usize },

    #[error("degenerate window: std {std:e} <= {eps:e}")]
    DegenerateWindow { std: f64, eps: f64 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("class {class} has {count} vector(s); a stratified split needs at least 2")]
    ClassTooSmall { class: u8, count: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Divergence { epoch: usize, loss: f64 },

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("{context}: {source}")]
    Context { context: String, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Coarse error families, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Physics,
    Divergence,
    Data,
    Io,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Physics { .. } | Error::OutsideBeam { .. } | Error::Nyquist { .. } => {
                ErrorKind::Physics
            }
            Error::Config(_) | Error::Json(_) => ErrorKind::Config,
            Error::Divergence { .. } | Error::NonFinite(_) => ErrorKind::Divergence,
            Error::Io(_) => ErrorKind::Io,
            Error::Context { source, .. } => source.kind(),
            Error::SeriesTooShort { .. }
            | Error::DegenerateWindow { .. }
            | Error::Empty(_)
            | Error::ClassTooSmall { .. }
            | Error::Shape(_)
            | Error::Dataset(_)
            | Error::Csv(_) => ErrorKind::Data,
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    pub(crate) fn physics(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Physics {
            name,
            reason: reason.into(),
        }
    }
}
