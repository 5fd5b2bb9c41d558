use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::steps::StopDecision;
use super::RunConfig;
use crate::harness::cost::CostLedger;
use crate::ips::{CandidateSet, ConsistencyReport, Plan, ScoreMatrix};
use crate::memory::{Agent, Constraint, Diagnosis, Evidence};
use crate::tools::ExecutionOutcome;

pub const TRACE_SCHEMA_VERSION: u32 = 1;

/// Keys dropped from the comparison canon: wall-clock values vary between
/// otherwise identical runs.
const VOLATILE_KEYS: &[&str] = &[
    "latency_ms",
    "llm_latency_ms",
    "tool_latency_ms",
    "started_at_unix_ms",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    Sufficient,
    MaxRounds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectionMethod {
    /// Argmax of the cross-agent consistency score.
    Ips,
    /// Argmax of the mean of the three self scores.
    MeanSelfScore,
    /// Argmax of the planner's own scores.
    PlannerSelf,
    /// One candidate was generated and taken as is.
    Single,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub method: SelectionMethod,
    pub selected_index: usize,
    /// The planner's own preference, when the planner scored the candidates.
    pub planner_index: Option<usize>,
    pub tie_broken: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_scores: Option<Vec<f64>>,
}

impl SelectionRecord {
    pub fn diverged(&self) -> bool {
        self.planner_index.is_some_and(|p| p != self.selected_index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfEvaluation {
    pub agent: Agent,
    pub scores: Vec<f64>,
}

/// A superseded attempt kept for the record (the first try of a retried round).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub plan: Plan,
    pub outcome: ExecutionOutcome,
    pub diagnosis: Diagnosis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollbackRecord {
    pub from_round: usize,
    pub to_round: usize,
    pub feedback: String,
}

/// Everything that happened in one loop iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 1-based loop counter; differs from `round` only after a rollback.
    pub iteration: usize,
    /// Position of this round's record in the history.
    pub round: usize,
    pub candidates: Option<CandidateSet>,
    pub score_matrix: Option<ScoreMatrix>,
    pub consistency: Option<ConsistencyReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub self_evaluations: Vec<SelfEvaluation>,
    pub selection: Option<SelectionRecord>,
    pub executed_plan: Option<Plan>,
    pub outcome: Option<ExecutionOutcome>,
    pub diagnosis: Option<Diagnosis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retried: Option<Attempt>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rollback: Option<RollbackRecord>,
    pub constraint: Option<Constraint>,
    pub evidence_count: usize,
    pub stop: Option<StopDecision>,
    /// Set when the round was recorded as failed instead of aborting the run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RoundRecord {
    pub fn new(round: usize) -> Self {
        Self {
            iteration: 0,
            round,
            candidates: None,
            score_matrix: None,
            consistency: None,
            self_evaluations: Vec::new(),
            selection: None,
            executed_plan: None,
            outcome: None,
            diagnosis: None,
            retried: None,
            rollback: None,
            constraint: None,
            evidence_count: 0,
            stop: None,
            error: None,
        }
    }

    pub fn selected_index(&self) -> Option<usize> {
        self.selection.as_ref().map(|s| s.selected_index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub schema_version: u32,
    pub task_id: String,
    pub dataset: String,
    pub question: String,
    pub gold_answer: String,
    pub config: RunConfig,
    pub rounds: Vec<RoundRecord>,
    /// Absent only when a live backend failed for good.
    pub final_answer: Option<String>,
    pub stop_reason: StopReason,
    pub final_evidence: Vec<Evidence>,
    pub planner_constraints: Vec<Constraint>,
    pub cost: CostLedger,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default)]
    pub started_at_unix_ms: u64,
}

fn scrub(value: &mut Value) {
    match value {
        Value::Object(map) => {
            map.retain(|k, _| !VOLATILE_KEYS.contains(&k.as_str()));
            map.values_mut().for_each(scrub);
        }
        Value::Array(items) => items.iter_mut().for_each(scrub),
        _ => {}
    }
}

impl Trace {
    /// JSON value with wall-clock fields removed; equal canons mean equal runs.
    pub fn canonical_value(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("trace serializes");
        scrub(&mut v);
        v
    }

    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(&self.canonical_value()).expect("value serializes")
    }

    pub fn selected_indices(&self) -> Vec<Option<usize>> {
        self.rounds
            .iter()
            .map(RoundRecord::selected_index)
            .collect()
    }
}
