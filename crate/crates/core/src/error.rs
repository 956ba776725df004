use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("field point {point:?} lies on a current filament")]
    OnFilament { point: [f64; 3] },

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("no local field minimum inside the search box (last iterate {last:?})")]
    TrapNotFound { last: [f64; 3] },

    #[error("minimisation did not converge after {iterations} iterations (last iterate {last:?})")]
    NoConvergence { iterations: usize, last: [f64; 3] },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("rank-deficient design matrix; undetermined coefficients: {0}")]
    RankDeficient(String),

    #[error("coefficient tensor is not symmetric: {0}")]
    Asymmetric(String),

    #[error("integration unstable at t = {time:.6} s; reduce the timestep")]
    Unstable { time: f64 },

    #[error("particle escaped the validity region at t = {time:.6} s (|r| = {radius:.3e} m)")]
    Escaped { time: f64, radius: f64 },

    #[error("drive tuning did not converge; last levels {last:?}")]
    TuneNoConvergence { last: [f64; 3] },

    #[error("signal too short: need {needed} samples, have {have}")]
    TooShort { needed: usize, have: usize },

    #[error("regression is singular for cell {0}")]
    SingularRegression(String),

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("filter kept no chunks; try a looser percentile than {0}")]
    EmptyFilter(f64),

    #[error("exponential fit of the autocorrelation failed: {reason}")]
    AutocorrelationFit { reason: String, acf: Vec<f64> },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage { stage, source: Box::new(self) }
    }

    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { path: path.into(), message: message.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
