use std::fmt;

/// Pipeline stage, attached to errors raised inside [`crate::pipeline::diarize`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Windowing,
    Local,
    Global,
    Clustering,
    Output,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Windowing => "windowing",
            Stage::Local => "local",
            Stage::Global => "global",
            Stage::Clustering => "clustering",
            Stage::Output => "output",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("input too short: {samples} samples, need at least {needed}")]
    EmptyInput { samples: usize, needed: usize },

    #[error("sample rate mismatch: audio is {found} Hz, frontend expects {expected} Hz")]
    SampleRate { expected: u32, found: u32 },

    #[error("unsupported audio: {0}")]
    Audio(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("empty chunk")]
    EmptyChunk,

    #[error("chunk carries no hidden speaker identities")]
    MissingIdentities,

    #[error("chunk holds {found} distinct speakers, backend capacity is {capacity}")]
    Capacity { capacity: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("boundary {boundary} out of range for {rows} rows")]
    Boundary { boundary: usize, rows: usize },

    #[error("backend failed on pair {pair}: {source}")]
    Pair {
        pair: String,
        #[source]
        source: Box<Error>,
    },

    #[error("no similarity score for pair {0}")]
    MissingScore(String),

    #[error("matrix is not symmetric (|a[{row}][{col}] - a[{col}][{row}]| = {diff:e})")]
    Asymmetric { row: usize, col: usize, diff: f64 },

    #[error("requested {k} clusters for {n} points")]
    TooManyClusters { k: usize, n: usize },

    #[error("rttm line {line}: {msg}")]
    Rttm { line: usize, msg: String },

    #[error("recording mismatch: reference {reference:?}, hypothesis {hypothesis:?}")]
    RecordingMismatch { reference: String, hypothesis: String },

    #[error("DER undefined: no scored reference speech")]
    UndefinedDer,

    #[error("simulation: {0}")]
    Simulation(String),

    #[error("{stage} stage: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn at(self, stage: Stage) -> Error {
        Error::Stage { stage, source: Box::new(self) }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
