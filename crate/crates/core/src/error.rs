use std::path::PathBuf;

use crate::backend::ScriptKey;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("constraints can only be attached to planner memory (got {0:?} memory)")]
    NotPlannerMemory(crate::memory::Agent),

    #[error(
        "context overflow: query and role description need {needed} tokens, budget is {budget}"
    )]
    ContextOverflow { needed: usize, budget: usize },

    #[error("backend unavailable after {attempts} attempts: {message}")]
    BackendUnavailable { attempts: u32, message: String },

    #[error("no script entry for key {0}")]
    ScriptMiss(ScriptKey),

    #[error("script entries exhausted for key {0}")]
    ScriptExhausted(ScriptKey),

    #[error("could not parse scores for {expected} plans: {reason}")]
    ScoreParseFailure { expected: usize, reason: String },

    #[error("no parseable candidate plan block in planner output")]
    CandidateParseFailure,

    #[error("unknown tool `{0}`")]
    UnknownTool(String),

    #[error("rollback target {target} is beyond current round {current}")]
    InvalidRollbackTarget { target: usize, current: usize },

    #[error("malformed record at line {line}: {field}")]
    MalformedRecord { line: usize, field: String },

    #[error("no verdicts to aggregate")]
    EmptyRun,

    #[error("unsupported schema version {found} (expected {expected})")]
    SchemaMismatch { found: u32, expected: u32 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
