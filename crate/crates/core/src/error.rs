use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("observation out of range: {obs} >= m={m}")]
    ObservationOutOfRange { obs: usize, m: usize },
    #[error("no prediction targets: sequence needs at least 2 tokens")]
    NoPredictionTargets,
    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },
    #[error("vocabulary mismatch: model m={model}, dataset m={data}")]
    VocabMismatch { model: usize, data: usize },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("corpus shorter than sequence length: {len} < {t}")]
    CorpusTooShort { len: usize, t: usize },
    #[error("too few sequences to split: {0}")]
    TooFewSequences(usize),
    #[error("unknown glyph {0:?}")]
    UnknownGlyph(char),
    #[error("no sequence of length >= 3 to count moments from")]
    NoTripleWindows,
    #[error("rank deficiency: requested rank {requested}, {detail}")]
    RankDeficiency { requested: usize, detail: String },
    #[error("no stationary distribution: power iteration did not converge")]
    NoStationaryDistribution,
    #[error("gradient overflow: non-finite gradient entry in {block}")]
    GradientOverflow { block: &'static str },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
