use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid adjacency matrix: {0}")]
    InvalidAdjacency(String),

    #[error("invalid graph distribution: {0}")]
    InvalidDistribution(String),

    /// The mean graph has a second zero Laplacian eigenvalue.
    #[error("mean graph is disconnected (second-smallest Laplacian eigenvalue {lambda2:e})")]
    MeanGraphDisconnected { lambda2: f64 },

    #[error("Laplacian has a repeated zero eigenvalue (kappa_2 = {kappa2:e})")]
    Disconnected { kappa2: f64 },

    #[error("invalid constraint set: {0}")]
    InvalidSet(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("agent {agent} has no gradient noise model")]
    NoNoiseModel { agent: usize },

    #[error("problem has no known optimum")]
    NoKnownOptimum,

    #[error("sum of Hessians at the optimum is not positive definite (min eigenvalue {min_eig:e})")]
    HessianSumNotPd { min_eig: f64 },

    #[error("matrix is not Hurwitz (spectral abscissa {abscissa:e})")]
    NotHurwitz { abscissa: f64 },

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("config error at `{path}`: {msg}")]
    Config { path: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// True for errors caused by user-supplied configuration.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config { .. }
                | Error::InvalidAdjacency(_)
                | Error::InvalidDistribution(_)
                | Error::MeanGraphDisconnected { .. }
                | Error::InvalidSet(_)
                | Error::InvalidProblem(_)
                | Error::NoNoiseModel { .. }
                | Error::NoKnownOptimum
                | Error::HessianSumNotPd { .. }
                | Error::Dimension(_)
        )
    }
}
