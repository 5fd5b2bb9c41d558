//! Model completion contract and its two implementations.
//!
//! [`HttpBackend`] talks to any OpenAI-compatible chat-completions endpoint.
//! [`ScriptedBackend`] replays canned responses keyed by
//! `(role, purpose, perspective, round)` so that concurrent calls resolve the
//! same way regardless of completion order.

mod http;
mod score;
mod scripted;

use std::fmt;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::harness::cost::{CallRecord, CostLedger, ToolCallRecord};
use crate::memory::Agent;

pub use http::{HttpBackend, HttpConfig};
pub use score::{parse_score, ParsedScores};
pub use scripted::{
    Script, ScriptEntry, ScriptFile, ScriptResponse, ScriptedBackend, SCRIPT_VERSION,
};

pub const PLANNING_TEMPERATURE: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RoleTag {
    Planner,
    Executor,
    Diagnoser,
    Judge,
}

impl From<Agent> for RoleTag {
    fn from(agent: Agent) -> Self {
        match agent {
            Agent::Planner => RoleTag::Planner,
            Agent::Executor => RoleTag::Executor,
            Agent::Diagnoser => RoleTag::Diagnoser,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Purpose {
    CandidateGeneration,
    Evaluation,
    Diagnosis,
    ConstraintInduction,
    StopCheck,
    AnswerGeneration,
    ToolArgumentation,
    Judging,
    /// Page summarization inside the web_search tool.
    Summarization,
    /// Diagnoser choosing the round to revert to in rollback mode.
    RollbackTarget,
}

/// `(evaluating agent, target agent)`; equal agents denote a self evaluation.
pub type Perspective = (Agent, Agent);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub role_tag: RoleTag,
    pub purpose_tag: Purpose,
    pub perspective_tag: Option<Perspective>,
    /// Round the call belongs to; 0 for calls made outside the round loop (judging).
    pub round: usize,
    pub prompt: String,
    pub temperature: f64,
    pub max_output: u32,
}

impl CompletionRequest {
    /// Builds a request with the default temperature policy: sampling only for
    /// candidate generation, greedy for everything else.
    pub fn new(
        role: impl Into<RoleTag>,
        purpose: Purpose,
        round: usize,
        prompt: impl Into<String>,
    ) -> Self {
        let temperature = if purpose == Purpose::CandidateGeneration {
            PLANNING_TEMPERATURE
        } else {
            0.0
        };
        Self {
            role_tag: role.into(),
            purpose_tag: purpose,
            perspective_tag: None,
            round,
            prompt: prompt.into(),
            temperature,
            max_output: 1024,
        }
    }

    pub fn with_perspective(mut self, perspective: Perspective) -> Self {
        self.perspective_tag = Some(perspective);
        self
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn key(&self) -> ScriptKey {
        ScriptKey {
            role: self.role_tag,
            purpose: self.purpose_tag,
            perspective: self.perspective_tag,
            round: self.round,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionResponse {
    pub text: String,
    pub prompt_tokens: u64,
    pub output_tokens: u64,
    pub latency: Duration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ScriptKey {
    pub role: RoleTag,
    pub purpose: Purpose,
    pub perspective: Option<Perspective>,
    pub round: usize,
}

impl fmt::Display for ScriptKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:?}, {:?}, ", self.role, self.purpose)?;
        match self.perspective {
            Some((a, b)) => write!(f, "{}->{}", a.name(), b.name())?,
            None => f.write_str("-")?,
        }
        write!(f, ", round {})", self.round)
    }
}

pub trait Backend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse>;
}

/// Whitespace-delimited token count; the fallback when a backend reports no usage.
pub fn count_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

/// A backend handle that records every call and tool invocation for one run.
///
/// Concurrent fan-out goes through [`Session::fork`] / [`Session::absorb`] so
/// the recorded order depends only on the order in which forks are absorbed.
pub struct Session<'a> {
    backend: &'a dyn Backend,
    calls: Mutex<Vec<CallRecord>>,
    tools: Mutex<Vec<ToolCallRecord>>,
}

impl<'a> Session<'a> {
    pub fn new(backend: &'a dyn Backend) -> Self {
        Self {
            backend,
            calls: Mutex::new(Vec::new()),
            tools: Mutex::new(Vec::new()),
        }
    }

    pub fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse> {
        let started = Instant::now();
        let result = self.backend.complete(request);
        let record = match &result {
            Ok(resp) => CallRecord::from_response(request, resp),
            Err(_) => CallRecord::failed(request, started.elapsed()),
        };
        self.calls.lock().expect("call log poisoned").push(record);
        result
    }

    pub fn record_tool(&self, round: usize, tool_id: &str, latency: Duration, transport_ok: bool) {
        self.tools
            .lock()
            .expect("tool log poisoned")
            .push(ToolCallRecord {
                round,
                tool_id: tool_id.to_string(),
                latency_ms: latency.as_secs_f64() * 1e3,
                transport_ok,
            });
    }

    pub fn fork(&self) -> Session<'a> {
        Session::new(self.backend)
    }

    pub fn absorb(&self, other: Session<'_>) {
        let (calls, tools) = other.into_parts();
        self.calls.lock().expect("call log poisoned").extend(calls);
        self.tools.lock().expect("tool log poisoned").extend(tools);
    }

    pub fn call_count(&self) -> usize {
        self.calls.lock().expect("call log poisoned").len()
    }

    pub fn calls(&self) -> Vec<CallRecord> {
        self.calls.lock().expect("call log poisoned").clone()
    }

    fn into_parts(self) -> (Vec<CallRecord>, Vec<ToolCallRecord>) {
        (
            self.calls.into_inner().expect("call log poisoned"),
            self.tools.into_inner().expect("tool log poisoned"),
        )
    }

    pub fn into_ledger(self) -> CostLedger {
        let (calls, tools) = self.into_parts();
        CostLedger::from_records(calls, tools)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_counts() {
        assert_eq!(count_tokens("hello world"), 2);
        assert_eq!(count_tokens(""), 0);
        assert_eq!(count_tokens("a  b\n c"), 3);
    }

    #[test]
    fn temperature_follows_purpose() {
        let gen = CompletionRequest::new(Agent::Planner, Purpose::CandidateGeneration, 1, "p");
        assert_eq!(gen.temperature, 0.9);
        for purpose in [
            Purpose::Evaluation,
            Purpose::Diagnosis,
            Purpose::ConstraintInduction,
            Purpose::StopCheck,
            Purpose::AnswerGeneration,
            Purpose::ToolArgumentation,
            Purpose::Judging,
        ] {
            assert_eq!(
                CompletionRequest::new(Agent::Planner, purpose, 1, "p").temperature,
                0.0
            );
        }
    }

    #[test]
    fn key_display_names_everything() {
        let req = CompletionRequest::new(Agent::Planner, Purpose::Evaluation, 3, "p")
            .with_perspective((Agent::Planner, Agent::Executor));
        assert_eq!(
            req.key().to_string(),
            "(Planner, Evaluation, Planner->Executor, round 3)"
        );
    }
}
