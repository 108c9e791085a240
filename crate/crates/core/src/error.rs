use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    // graph construction
    #[error("unknown gene `{0}`")]
    UnknownGene(String),
    #[error("unknown edge type `{0}`")]
    UnknownEdgeType(String),
    #[error("duplicate edge {src} -[{kind}]-> {dst}")]
    DuplicateEdge { src: String, kind: String, dst: String },
    #[error("duplicate gene id `{0}`")]
    DuplicateGeneId(String),
    #[error("graph has {0} node(s); at least 2 required")]
    GraphTooSmall(usize),
    #[error("node index {index} out of range for graph with {len} nodes")]
    IndexOutOfRange { index: usize, len: usize },

    // data preparation
    #[error("expression column `{0}` sums to zero")]
    ZeroColumnSum(String),
    #[error("negative value {value} in {what}")]
    NegativeInput { what: String, value: f64 },
    #[error("unknown cell line `{0}`")]
    UnknownCellLine(String),
    #[error("unknown drug `{0}`")]
    UnknownDrug(String),
    #[error("drug `{0}` has no database-backed target genes")]
    EmptyRecordSet(String),
    #[error("{0} cell line(s); at least 2 required for variance")]
    TooFewCellLines(usize),
    #[error("non-finite input value {0}")]
    NonFiniteInput(f64),
    #[error("degenerate split: {0}")]
    DegenerateSplit(String),
    #[error("invalid value: {0}")]
    InvalidValue(String),

    // shapes
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: String,
        expected: String,
        actual: String,
    },
    #[error("shape mismatch for `{name}`: {left:?} vs {right:?}")]
    ShapeMismatch {
        name: String,
        left: [usize; 2],
        right: [usize; 2],
    },

    // numerics
    #[error("loss is not a finite scalar ({0})")]
    NonFiniteLoss(f64),
    #[error("function evaluated to a non-finite value ({0})")]
    NonFiniteEvaluation(f64),
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    DivergedLoss { epoch: usize, loss: f64 },
    #[error("dataset `{0}` is empty")]
    EmptyDataset(String),

    // metrics and analysis
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    EmptyInput,
    #[error("only one class present")]
    SingleClass,
    #[error("no positive labels")]
    NoPositives,
    #[error("zero vector; cosine similarity undefined")]
    ZeroVector,
    #[error("{0} nonzero entries; at least 2 required")]
    TooFewNonzero(usize),

    // persistence
    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("version mismatch: {0}")]
    VersionMismatch(String),
    #[error("corrupt manifest: {0}")]
    CorruptManifest(String),
    #[error("parse error in {path} line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("output directory {0} is locked by another run")]
    Locked(PathBuf),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::IoFailure {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dims(context: impl Into<String>, expected: impl ToString, actual: impl ToString) -> Self {
        Error::DimensionMismatch {
            context: context.into(),
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
