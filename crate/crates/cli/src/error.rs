use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("{path}: missing required column `{column}`")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path}, line {line}: column `{column}`: cannot parse {value:?}")]
    BadCell { path: PathBuf, line: u64, column: String, value: String },
    #[error("{path}, line {line}: {message}")]
    BadValue { path: PathBuf, line: u64, message: String },
    #[error("{path}, line {line}: timestamp {value} does not come after the previous row")]
    NonMonotone { path: PathBuf, line: u64, value: String },
    #[error("{path}: duplicate date {date}")]
    DuplicateDate { path: PathBuf, date: String },
    #[error("{path}: file has no data rows")]
    Empty { path: PathBuf },
    #[error("demand and weather files have no dates in common")]
    NoOverlap,
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error(transparent)]
    Model(#[from] censored_gp::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Write { path: PathBuf, source: csv::Error },
    #[error("every grid cell failed")]
    AllCellsFailed,
}

impl CliError {
    /// Process exit status for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Load(_) | CliError::Model(_) => 2,
            CliError::AllCellsFailed => 3,
            CliError::Io { .. } | CliError::Write { .. } => 1,
        }
    }
}
