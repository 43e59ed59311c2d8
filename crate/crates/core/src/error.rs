use thiserror::Error;

use crate::variance::Method;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    // tabular
    #[error("file is empty")]
    EmptyFile,
    #[error("missing or empty header row")]
    MissingHeader,
    #[error("duplicate or empty column name {0:?}")]
    BadColumnName(String),
    #[error("row {row}: expected {expected} cells, found {found}")]
    RaggedRow { row: usize, expected: usize, found: usize },
    #[error("non-numeric cell at row {row}, column {col}: {value:?}")]
    NonNumericCell { row: usize, col: usize, value: String },
    #[error("dataset has no data rows")]
    NoRows,
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
    #[error("column {0:?} needs at least two values")]
    DegenerateColumn(String),
    #[error("malformed CSV: {0}")]
    Csv(String),

    // formula
    #[error("formula syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("term {0:?} appears more than once")]
    DuplicateTerm(String),
    #[error("response {0:?} also appears on the right-hand side")]
    ResponseInTerms(String),
    #[error("model has no terms and no intercept")]
    EmptyModel,

    // least squares
    #[error("design is rank deficient: column {column} ({name}) is linearly dependent on earlier columns")]
    RankDeficient { column: usize, name: String },
    #[error("too few rows: n = {n}, d = {d}")]
    TooFewRows { n: usize, d: usize },
    #[error("negative weight {value} at row {row}")]
    NegativeWeight { row: usize, value: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("residual variance is zero; standardized residuals are undefined")]
    DegenerateFit,

    // variance
    #[error("J-hat is singular")]
    SingularJ,
    #[error("{method}: replicate {replicate} stayed rank deficient after {attempts} draws")]
    RankDeficientReplicate {
        method: Method,
        replicate: usize,
        attempts: usize,
    },
    #[error("subsample size m = {m} must be smaller than n = {n}")]
    MTooLarge { m: usize, n: usize },
    #[error("resample size m = {m} is smaller than the number of coefficients d = {d}")]
    MTooSmall { m: usize, d: usize },
    #[error("{method}: need at least {min} replicates, got {got}")]
    TooFewReplicates {
        method: Method,
        min: usize,
        got: usize,
    },
    #[error("variance method {0} requested more than once")]
    DuplicateMethod(Method),
    #[error("{0} is computed by default and cannot be requested")]
    NotResampling(Method),

    // inference
    #[error("confidence level must lie in (0, 1), got {0}")]
    BadLevel(f64),
    #[error("restriction matrix has rank {rank} but {rows} rows")]
    RankDeficientR { rank: usize, rows: usize },
    #[error("R Var(beta) R^T is singular")]
    SingularConstraintCov,

    // diagnostics
    #[error("regressor {0:?} is constant")]
    ConstantRegressor(String),
    #[error("kernel bandwidth must be positive, got {0}")]
    NonpositiveGamma(f64),
    #[error("{0} is not a reweightable regressor")]
    BadRegressor(String),
    #[error("variance estimate {0} carries no replicates")]
    NoReplicates(Method),
    #[error("replicates for coefficient {0} have zero spread")]
    DegenerateReplicates(String),
    #[error("only {0} usable reweighting centers; need at least 2")]
    TooFewCenters(usize),
    #[error("need at least {0} variance methods")]
    TooFewMethods(usize),

    // plotting
    #[error("panel {0} has nothing to draw")]
    EmptyPanel(usize),
    #[error("non-finite coordinate in panel {0}")]
    NonFiniteCoordinate(usize),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}
