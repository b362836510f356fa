use thiserror::Error;

pub type Result<T> = std::result::Result<T, OmniError>;

#[derive(Debug, Error)]
pub enum OmniError {
    #[error("invalid optical config: {0}")]
    InvalidConfig(String),

    #[error("depth beyond native plane: {depth} D > {native} D")]
    DepthBeyondNative { depth: f64, native: f64 },

    #[error("negative depth: {0} D")]
    NegativeDepth(f64),

    #[error("no finite (depth, focal) pairs to fit")]
    NoFiniteData,

    #[error("degenerate lens: SLM focal length is zero")]
    DegenerateLens,

    #[error("dimension mismatch: expected {expected:?}, got {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("{0}")]
    InvalidInput(String),

    #[error("tile {width}x{height} does not fit a {cell_w}x{cell_h} grid cell")]
    TileTooLarge {
        width: usize,
        height: usize,
        cell_w: usize,
        cell_h: usize,
    },

    #[error(
        "angular spectrum aliasing: |distance| = {distance:.4e} m exceeds {limit:.4e} m \
         for this grid; pad to at least {required} samples per axis"
    )]
    BandLimit {
        distance: f64,
        limit: f64,
        required: usize,
    },

    #[error("slanted edge: {0}")]
    Edge(String),

    #[error("frequency {f} cycles/mm outside curve range [0, {max}]")]
    FrequencyOutOfRange { f: f64, max: f64 },

    #[error("image format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl OmniError {
    /// True for numerical failures (band-limit or sampling), as opposed to bad data.
    pub fn is_numerical(&self) -> bool {
        matches!(self, OmniError::BandLimit { .. })
    }
}
