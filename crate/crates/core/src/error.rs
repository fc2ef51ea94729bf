use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("spectrum has near-degenerate quasienergies (min gap {min_gap:.3e}); level statistics unreliable")]
    DegenerateSpectrum { min_gap: f64 },

    #[error("Lanczos lost orthogonality ({deviation:.3e}); use a finer quadrature or fewer chain sites")]
    OrthogonalityLoss { deviation: f64 },

    #[error("measure supported on {support} points, cannot build a chain of {requested} sites")]
    MeasureTooNarrow { support: usize, requested: usize },

    #[error("chain too short: amplitude {amplitude:.3e} at the last site at t = {time}")]
    ChainTooShort { amplitude: f64, time: f64 },

    #[error("Fock cap leakage {leakage:.3e} exceeds {bound:.1e} at t = {time}; raise n_max")]
    CapLeakage { leakage: f64, bound: f64, time: f64 },

    #[error("mode is not a stable record: future significance {significance:.3e} >= a_cut {a_cut:.1e}")]
    UnstableRecord { significance: f64, a_cut: f64 },

    #[error("out mode not contained in the relevant frame (residual {residual:.3e})")]
    ModeOutsideFrame { residual: f64 },

    #[error("branch probability {prob:.3e} is numerically empty")]
    EmptyBranch { prob: f64 },

    #[error("attaching a mode would exceed the limit of {max} relevant modes")]
    TooManyModes { max: usize },

    #[error("oracle instance of {size} amplitudes exceeds the cap of {cap}")]
    OracleTooLarge { size: usize, cap: usize },

    #[error("config error at {path} (line {line}): {message}")]
    Config {
        path: String,
        line: usize,
        message: String,
    },

    #[error("malformed {what}: {message}")]
    Format { what: &'static str, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Failures caused by the numerics rather than by the caller's input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateSpectrum { .. }
                | Error::OrthogonalityLoss { .. }
                | Error::ChainTooShort { .. }
                | Error::CapLeakage { .. }
                | Error::UnstableRecord { .. }
                | Error::ModeOutsideFrame { .. }
                | Error::EmptyBranch { .. }
                | Error::TooManyModes { .. }
        )
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
