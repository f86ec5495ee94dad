use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension n = {n} not supported here (need n >= {min})")]
    Dimension { n: usize, min: usize },

    #[error("diffusion exponent m = {m} outside the admissible window ({lower}, {upper}) for n = {n}")]
    ExponentWindow {
        n: usize,
        m: f64,
        lower: f64,
        upper: f64,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("exponent window violated for {quantity}: {reason}")]
    InterpolationWindow {
        quantity: &'static str,
        reason: String,
    },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("malformed field file: bad {field} ({detail})")]
    Format { field: &'static str, detail: String },

    #[error("time samples do not form a uniform lattice covering [0, t]: {0}")]
    SampleLattice(String),

    #[error("negative density {value:e} at t = {t} exceeds clipping tolerance")]
    Negativity { t: f64, value: f64 },

    #[error("numerical blow-up indicator at t = {t}: {reason}")]
    NumericalBlowup { t: f64, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
