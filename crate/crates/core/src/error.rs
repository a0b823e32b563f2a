use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("ragged input at row {row}: expected {expected} fields, found {found}")]
    Ragged {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("cannot parse value {text:?} at row {row}, column {column}")]
    Parse {
        row: usize,
        column: usize,
        text: String,
    },

    #[error("missing value at row {row}, column {column}")]
    Gap { row: usize, column: usize },

    #[error("malformed input: {0}")]
    Format(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("generated values diverged (|value| > {guard:e} at series {series}, t = {t}); use smaller support weights")]
    Unstable { series: usize, t: usize, guard: f64 },

    #[error("insufficient history: need {needed} points, have {available}")]
    InsufficientHistory { needed: usize, available: usize },

    #[error("design too large to materialize: {rows} x {cols} exceeds {cap} cells")]
    DesignTooLarge { rows: usize, cols: usize, cap: usize },

    #[error("lasso did not converge in {iterations} sweeps (duality gap {gap:e})")]
    NoConvergence { iterations: usize, gap: f64 },

    #[error("degenerate degrees of freedom: h = {h}, m = {m}")]
    DegenerateDof { h: usize, m: usize },

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("zero weight in iterate at column {column}")]
    DegenerateWeight { column: usize },

    #[error("model/design mismatch: {0}")]
    Incompatible(String),

    #[error("residual scale must be positive, got {0}")]
    InvalidScale(f64),

    #[error("shape mismatch: expected {expected}, got {found}")]
    Shape { expected: usize, found: usize },

    #[error("degenerate samples: {0}")]
    Degenerate(String),

    #[error("degenerate residual range: min {min}, max {max}")]
    DegenerateRange { min: f64, max: f64 },

    #[error("F1 undefined: {0}")]
    UndefinedF1(String),

    #[error("panel has no anomaly labels")]
    MissingLabels,

    #[error("empty input: {0}")]
    Empty(String),

    #[error("series {series}: {source}")]
    Series {
        series: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn for_series(self, series: usize) -> Self {
        Error::Series {
            series,
            source: Box::new(self),
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
