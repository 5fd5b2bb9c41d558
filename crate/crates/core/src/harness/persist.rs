use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::error::{Error, Result};
use crate::workflow::{Trace, TRACE_SCHEMA_VERSION};

/// Keeps file names portable: anything outside `[A-Za-z0-9._-]` becomes `_`.
fn file_component(s: &str) -> String {
    let cleaned: String = s
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                c
            } else {
                '_'
            }
        })
        .collect();
    match cleaned.trim_matches('.') {
        "" => "_".into(),
        _ => cleaned,
    }
}

pub fn trace_path(trace: &Trace, directory: &Path) -> PathBuf {
    directory
        .join(file_component(&trace.dataset))
        .join(format!("{}.json", file_component(&trace.task_id)))
}

/// Writes `<directory>/<dataset>/<task_id>.json` and returns its path.
pub fn persist_trace(trace: &Trace, directory: impl AsRef<Path>) -> Result<PathBuf> {
    let path = trace_path(trace, directory.as_ref());
    let parent = path.parent().expect("trace path has a parent");
    std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    let body = serde_json::to_string_pretty(trace).map_err(|e| Error::json(&path, e))?;
    std::fs::write(&path, body + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<Trace> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: Value = serde_json::from_str(&raw).map_err(|e| Error::json(path, e))?;
    let found = value
        .get("schema_version")
        .and_then(Value::as_u64)
        .unwrap_or(0) as u32;
    if found != TRACE_SCHEMA_VERSION {
        return Err(Error::SchemaMismatch {
            found,
            expected: TRACE_SCHEMA_VERSION,
        });
    }
    serde_json::from_value(value).map_err(|e| Error::json(path, e))
}
