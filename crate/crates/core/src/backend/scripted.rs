use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{
    count_tokens, Backend, CompletionRequest, CompletionResponse, Perspective, Purpose, RoleTag,
    ScriptKey,
};
use crate::error::{Error, Result};

pub const SCRIPT_VERSION: u32 = 1;

/// One canned reply. A bare string is consumed once; the object form can be
/// made conditional on the prompt and/or reusable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptResponse {
    Text(String),
    Rule {
        text: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        when_contains: Option<String>,
        #[serde(default)]
        repeat: bool,
    },
}

impl ScriptResponse {
    pub fn text(&self) -> &str {
        match self {
            ScriptResponse::Text(t) | ScriptResponse::Rule { text: t, .. } => t,
        }
    }

    fn matches(&self, prompt: &str) -> bool {
        match self {
            ScriptResponse::Rule {
                when_contains: Some(needle),
                ..
            } => prompt.contains(needle.as_str()),
            _ => true,
        }
    }

    fn repeats(&self) -> bool {
        matches!(self, ScriptResponse::Rule { repeat: true, .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub role: RoleTag,
    pub purpose: Purpose,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perspective: Option<Perspective>,
    /// `None` matches any round, after all round-specific entries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round: Option<usize>,
    pub responses: Vec<ScriptResponse>,
}

impl ScriptEntry {
    fn matches_key(&self, key: &ScriptKey, exact_round: bool) -> bool {
        self.role == key.role
            && self.purpose == key.purpose
            && self.perspective == key.perspective
            && if exact_round {
                self.round == Some(key.round)
            } else {
                self.round.is_none()
            }
    }
}

/// The entries for a single task run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Script {
    pub entries: Vec<ScriptEntry>,
}

impl Script {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(
        &mut self,
        role: impl Into<RoleTag>,
        purpose: Purpose,
        perspective: Option<Perspective>,
        round: Option<usize>,
        responses: impl IntoIterator<Item = ScriptResponse>,
    ) -> &mut Self {
        self.entries.push(ScriptEntry {
            role: role.into(),
            purpose,
            perspective,
            round,
            responses: responses.into_iter().collect(),
        });
        self
    }

    /// Adds plain one-shot responses for an exact round.
    pub fn on(
        &mut self,
        role: impl Into<RoleTag>,
        purpose: Purpose,
        perspective: Option<Perspective>,
        round: usize,
        texts: &[&str],
    ) -> &mut Self {
        self.push(
            role,
            purpose,
            perspective,
            Some(round),
            texts.iter().map(|t| ScriptResponse::Text(t.to_string())),
        )
    }

    /// Adds a reusable response that answers the key in any round.
    pub fn always(
        &mut self,
        role: impl Into<RoleTag>,
        purpose: Purpose,
        perspective: Option<Perspective>,
        text: &str,
    ) -> &mut Self {
        self.push(
            role,
            purpose,
            perspective,
            None,
            [ScriptResponse::Rule {
                text: text.to_string(),
                when_contains: None,
                repeat: true,
            }],
        )
    }
}

/// On-disk script document: per-task entries plus entries shared by every task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptFile {
    pub version: u32,
    #[serde(default)]
    pub shared: Vec<ScriptEntry>,
    #[serde(default)]
    pub tasks: BTreeMap<String, Vec<ScriptEntry>>,
}

impl ScriptFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ScriptFile = serde_json::from_str(&raw).map_err(|e| Error::json(path, e))?;
        if file.version != SCRIPT_VERSION {
            return Err(Error::SchemaMismatch {
                found: file.version,
                expected: SCRIPT_VERSION,
            });
        }
        Ok(file)
    }

    /// Task entries take precedence over shared ones.
    pub fn for_task(&self, task_id: &str) -> Script {
        let mut entries = self.tasks.get(task_id).cloned().unwrap_or_default();
        entries.extend(self.shared.iter().cloned());
        Script { entries }
    }
}

/// Deterministic backend that replays a [`Script`].
///
/// Lookup is by request key only. Within a key, responses are handed out in
/// file order, skipping consumed ones and ones whose prompt condition does not
/// hold; round-specific entries are tried before any-round entries.
#[derive(Debug)]
pub struct ScriptedBackend {
    script: Script,
    consumed: Mutex<Vec<Vec<bool>>>,
}

impl ScriptedBackend {
    pub fn new(script: Script) -> Self {
        let consumed = script
            .entries
            .iter()
            .map(|e| vec![false; e.responses.len()])
            .collect();
        Self {
            script,
            consumed: Mutex::new(consumed),
        }
    }

    fn lookup(&self, request: &CompletionRequest) -> Result<String> {
        let key = request.key();
        let mut consumed = self.consumed.lock().expect("script state poisoned");
        let mut any_entry = false;
        for exact in [true, false] {
            for (ei, entry) in self.script.entries.iter().enumerate() {
                if !entry.matches_key(&key, exact) {
                    continue;
                }
                any_entry = true;
                for (ri, resp) in entry.responses.iter().enumerate() {
                    if consumed[ei][ri] || !resp.matches(&request.prompt) {
                        continue;
                    }
                    if !resp.repeats() {
                        consumed[ei][ri] = true;
                    }
                    return Ok(resp.text().to_string());
                }
            }
        }
        Err(if any_entry {
            Error::ScriptExhausted(key)
        } else {
            Error::ScriptMiss(key)
        })
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse> {
        let text = self.lookup(request)?;
        Ok(CompletionResponse {
            prompt_tokens: count_tokens(&request.prompt) as u64,
            output_tokens: count_tokens(&text) as u64,
            text,
            latency: Duration::ZERO,
        })
    }
}
