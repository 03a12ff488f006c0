use std::path::PathBuf;

/// Errors produced anywhere in the reduced-order modeling toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no convergence after {iterations} sweeps (off-diagonal residual {residual:e})")]
    ConvergenceFailure { iterations: usize, residual: f64 },

    #[error("rank deficient{}: requested {requested}, attainable rank is {attainable}", stage_suffix(.stage))]
    RankDeficient {
        stage: Option<&'static str>,
        requested: usize,
        attainable: usize,
    },

    #[error("mesh quality: {0}")]
    MeshQuality(String),

    #[error("solution blew up at t = {t}")]
    BlowUp { t: f64 },

    #[error("time window [{from}, {to}] lies outside the simulated interval [0, {end}]")]
    Range { from: f64, to: f64, end: f64 },

    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("degenerate normalization: min == max == {0}")]
    DegenerateNormalization(f64),

    #[error("training diverged at epoch {epoch}: {message}")]
    TrainingDiverged { epoch: usize, message: String },

    #[error("backward called before a forward pass was recorded")]
    NoForwardPass,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("incomplete data: missing entry at (time {time_index}, parameter {param_index})")]
    IncompleteData { time_index: usize, param_index: usize },

    #[error("corrupt model: {0}")]
    CorruptModel(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn stage_suffix(stage: &Option<&'static str>) -> String {
    match stage {
        Some(s) => format!(" in {s}"),
        None => String::new(),
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps an error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
