use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use tracing::warn;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub id: String,
    pub question: String,
    pub gold_answer: String,
    pub dataset_tag: String,
    /// 1-based line in the source file, 0 when built in code.
    #[serde(default)]
    pub line: usize,
}

impl TaskRecord {
    pub fn new(
        id: impl Into<String>,
        question: impl Into<String>,
        gold: impl Into<String>,
        tag: impl Into<String>,
    ) -> Self {
        Self {
            id: id.into(),
            question: question.into(),
            gold_answer: gold.into(),
            dataset_tag: tag.into(),
            line: 0,
        }
    }
}

/// JSON field names to read each task field from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldMap {
    pub id: String,
    pub question: String,
    pub answer: String,
    /// Per-line dataset tag; when absent or missing the file stem is used.
    pub dataset: Option<String>,
}

impl Default for FieldMap {
    fn default() -> Self {
        Self {
            id: "id".into(),
            question: "question".into(),
            answer: "answer".into(),
            dataset: Some("dataset".into()),
        }
    }
}

/// Published evaluation subset sizes, used only to warn on partial files.
const EXPECTED_SIZES: &[(&str, usize)] = &[("bamboogle", 125)];

fn text_field(obj: &serde_json::Map<String, Value>, name: &str) -> Option<String> {
    let s = match obj.get(name)? {
        Value::String(s) => s.trim().to_string(),
        Value::Number(n) => n.to_string(),
        // list-valued answers: take the first alias
        Value::Array(items) => match items.first()? {
            Value::String(s) => s.trim().to_string(),
            Value::Number(n) => n.to_string(),
            _ => return None,
        },
        _ => return None,
    };
    (!s.is_empty()).then_some(s)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<TaskRecord>> {
    load_dataset_with(path, &FieldMap::default())
}

/// Reads line-delimited JSON tasks in file order. Blank lines are skipped;
/// duplicate ids and missing or empty fields are reported with their line.
pub fn load_dataset_with(path: impl AsRef<Path>, fields: &FieldMap) -> Result<Vec<TaskRecord>> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    let mut seen = HashSet::new();
    let mut tasks = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |field: &str| Error::MalformedRecord {
            line: line_no,
            field: field.to_string(),
        };
        let value: Value = serde_json::from_str(line).map_err(|_| malformed("invalid JSON"))?;
        let Value::Object(obj) = value else {
            return Err(malformed("not a JSON object"));
        };
        let id = text_field(&obj, &fields.id).ok_or_else(|| malformed(&fields.id))?;
        let question =
            text_field(&obj, &fields.question).ok_or_else(|| malformed(&fields.question))?;
        let gold_answer =
            text_field(&obj, &fields.answer).ok_or_else(|| malformed(&fields.answer))?;
        let dataset_tag = fields
            .dataset
            .as_deref()
            .and_then(|f| text_field(&obj, f))
            .unwrap_or_else(|| stem.clone());
        if !seen.insert(id.clone()) {
            return Err(malformed(&format!("duplicate {} `{id}`", fields.id)));
        }
        tasks.push(TaskRecord {
            id,
            question,
            gold_answer,
            dataset_tag,
            line: line_no,
        });
    }
    check_sizes(&tasks);
    Ok(tasks)
}

fn check_sizes(tasks: &[TaskRecord]) {
    for &(tag, expected) in EXPECTED_SIZES {
        let n = tasks
            .iter()
            .filter(|t| t.dataset_tag.eq_ignore_ascii_case(tag))
            .count();
        if n > 0 && n != expected {
            warn!(
                dataset = tag,
                found = n,
                expected,
                "evaluation subset size differs from the published one"
            );
        }
    }
}
