use crate::Channel;
use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Configuration(String),

    #[error("lookup failed: {0}")]
    Lookup(String),

    #[error(
        "PSF crop discards {lost_fraction:.4} of the energy (limit {limit}); enlarge the kernel"
    )]
    Truncation { lost_fraction: f64, limit: f64 },

    #[error("cannot reach RMS radius {target_um} µm (best {achieved_um} µm)")]
    RadiusUnreachable { target_um: f64, achieved_um: f64 },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("degenerate feature: {0}")]
    DegenerateFeature(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: u32, n_classes: usize },

    #[error("no class has a defined IoU")]
    EmptyEvaluation,

    #[error("fov {fov}, channel {channel}: {cause}")]
    Kernel {
        fov: usize,
        channel: Channel,
        cause: Box<Error>,
    },

    #[error("all {0} dataset entries failed")]
    AllEntriesFailed(usize),

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("{}: {cause}", path.display())]
    Io {
        path: PathBuf,
        cause: std::io::Error,
    },

    #[error("{}: {cause}", path.display())]
    Image {
        path: PathBuf,
        cause: image::ImageError,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            cause: source,
        }
    }

    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }
}
