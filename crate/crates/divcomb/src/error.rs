use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error(transparent)]
    Core(#[from] divcomb_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },
    #[error("row {row}: series {id:?} has no observations")]
    EmptySeries { row: usize, id: String },
    #[error("dataset contains no usable series")]
    EmptyDataset,
    #[error("config: {0}")]
    Config(String),
    #[error("model file version {found}, this build reads version {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt model file: {0}")]
    CorruptFile(String),
    #[error("model trained for {model} series, data is {data}")]
    FrequencyMismatch { model: String, data: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl AppError {
    pub fn code(&self) -> &'static str {
        match self {
            AppError::Core(e) => e.code(),
            AppError::Io { .. } => "IO_ERROR",
            AppError::Parse { .. } => "PARSE_ERROR",
            AppError::EmptySeries { .. } => "EMPTY_SERIES",
            AppError::EmptyDataset => "EMPTY_DATASET",
            AppError::Config(_) => "CONFIG_ERROR",
            AppError::VersionMismatch { .. } => "VERSION_MISMATCH",
            AppError::CorruptFile(_) => "CORRUPT_FILE",
            AppError::FrequencyMismatch { .. } => "FREQUENCY_MISMATCH",
            AppError::Csv(_) => "CSV_ERROR",
            AppError::Json(_) => "JSON_ERROR",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, AppError>;
