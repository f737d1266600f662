use std::fmt;

use monocif::io::IoError;
use monocif::metrics::MetricError;
use monocif::model::ModelError;
use monocif::simulator::SimError;
use monocif::training::TrainError;

/// Process exit classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Io = 1,
    Config = 2,
    Numeric = 3,
    Invariant = 4,
}

#[derive(Debug)]
pub struct Failure {
    pub kind: Kind,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn new(kind: Kind, error: impl Into<anyhow::Error>) -> Self {
        Self { kind, error: error.into() }
    }

    pub fn config(msg: impl fmt::Display) -> Self {
        Self::new(Kind::Config, anyhow::anyhow!("{msg}"))
    }

    pub fn exit_code(&self) -> i32 {
        self.kind as i32
    }

    pub fn context(self, ctx: impl fmt::Display + Send + Sync + 'static) -> Self {
        Self { kind: self.kind, error: self.error.context(ctx) }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::new(Kind::Io, e)
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        let kind = if e.is_io() { Kind::Io } else { Kind::Config };
        Self::new(kind, e)
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        let kind = match &e {
            IoError::Io(_) => Kind::Io,
            IoError::Csv(c) if c.is_io_error() => Kind::Io,
            _ => Kind::Config,
        };
        Self::new(kind, e)
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        Self::new(Kind::Config, e)
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        Self::new(Kind::Config, e)
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        let kind = match e {
            TrainError::Diverged { .. } => Kind::Numeric,
            _ => Kind::Config,
        };
        Self::new(kind, e)
    }
}

impl From<MetricError> for Failure {
    fn from(e: MetricError) -> Self {
        let kind = match e {
            MetricError::ZeroVariance | MetricError::NotRepresentable => Kind::Numeric,
            _ => Kind::Config,
        };
        Self::new(kind, e)
    }
}
