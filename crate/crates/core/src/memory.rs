//! Shared system memory, role-filtered agent memories and prompt context rendering.
//!
//! The system memory holds the query, the evidence set and the three role
//! descriptions. Each agent sees its own projection of the interaction
//! history: the planner keeps the rounds whose outcome did not meet the plan,
//! the diagnoser keeps the rounds that did, and the executor keeps all of them.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::backend::count_tokens;
use crate::error::{Error, Result};
use crate::ips::Plan;
use crate::tools::ExecutionOutcome;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Agent {
    Planner,
    Executor,
    Diagnoser,
}

impl Agent {
    pub const ALL: [Agent; 3] = [Agent::Planner, Agent::Executor, Agent::Diagnoser];

    pub fn index(self) -> usize {
        match self {
            Agent::Planner => 0,
            Agent::Executor => 1,
            Agent::Diagnoser => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Agent::Planner => "Planner",
            Agent::Executor => "Executor",
            Agent::Diagnoser => "Diagnoser",
        }
    }

    pub fn peers(self) -> impl Iterator<Item = Agent> {
        Agent::ALL.into_iter().filter(move |a| *a != self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Supported,
    Unsupported,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnosis {
    pub verdict: Verdict,
    pub rationale: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence_text: Option<String>,
    /// Set when the diagnoser output was unusable and the conservative verdict was applied.
    #[serde(default)]
    pub fallback: bool,
}

impl Diagnosis {
    pub fn supported(rationale: impl Into<String>, evidence: Option<String>) -> Self {
        Self {
            verdict: Verdict::Supported,
            rationale: rationale.into(),
            evidence_text: evidence.filter(|e| !normalize_text(e).is_empty()),
            fallback: false,
        }
    }

    pub fn unsupported(rationale: impl Into<String>) -> Self {
        Self {
            verdict: Verdict::Unsupported,
            rationale: rationale.into(),
            evidence_text: None,
            fallback: false,
        }
    }

    pub fn failed(&self) -> bool {
        self.verdict == Verdict::Unsupported
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub round: usize,
    pub plan: Plan,
    pub outcome: ExecutionOutcome,
    pub diagnosis: Diagnosis,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub text: String,
    pub source_round: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleDescription {
    pub role_id: Agent,
    pub description: String,
}

impl RoleDescription {
    pub fn default_for(role_id: Agent) -> Self {
        let description = match role_id {
            Agent::Planner => {
                "You are the Planner. You decompose the user query into the next intermediate \
                 goal and choose one tool action that can acquire verifiable evidence for it."
            }
            Agent::Executor => {
                "You are the Executor. You turn a planned action into concrete tool inputs, \
                 invoke the tool, and report the raw execution outcome."
            }
            Agent::Diagnoser => {
                "You are the Diagnoser. You judge whether an execution outcome actually meets \
                 the plan it was meant to serve and extract verifiable evidence when it does."
            }
        };
        Self {
            role_id,
            description: description.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemMemory {
    pub query: String,
    pub evidence: Vec<Evidence>,
    /// Indexed by [`Agent::index`].
    pub roles: [RoleDescription; 3],
}

impl SystemMemory {
    pub fn new(query: impl Into<String>) -> Self {
        Self::with_roles(query, Agent::ALL.map(RoleDescription::default_for))
    }

    pub fn with_roles(query: impl Into<String>, roles: [RoleDescription; 3]) -> Self {
        Self {
            query: query.into(),
            evidence: Vec::new(),
            roles,
        }
    }

    pub fn role(&self, agent: Agent) -> &RoleDescription {
        &self.roles[agent.index()]
    }

    fn contains_evidence(&self, text: &str) -> bool {
        let key = evidence_key(text);
        self.evidence.iter().any(|e| evidence_key(&e.text) == key)
    }

    /// Rebuilds the evidence set from scratch out of a history prefix.
    pub fn rebuilt_from(&self, history: &[HistoryRecord]) -> Self {
        let fresh = Self {
            query: self.query.clone(),
            evidence: Vec::new(),
            roles: self.roles.clone(),
        };
        history
            .iter()
            .fold(fresh, |mem, rec| update_system_memory(&mem, rec))
    }
}

/// Collapses runs of whitespace to single spaces and trims the ends.
pub fn normalize_text(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn evidence_key(text: &str) -> String {
    normalize_text(text).to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintOrigin {
    Generated,
    /// Model output was still too long after the re-prompt and was cut to two sentences.
    Truncated,
    /// Model output was unusable; the text is the fixed mismatch template.
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraint {
    pub text: String,
    pub round: usize,
    pub planner_choice_index: usize,
    pub ips_choice_index: usize,
    pub origin: ConstraintOrigin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentMemory {
    pub role_id: Agent,
    pub records: Vec<HistoryRecord>,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InformationState {
    pub role: RoleDescription,
    pub memory: AgentMemory,
}

impl InformationState {
    /// The agent's own state: its role description paired with its own memory.
    pub fn own(system: &SystemMemory, memory: AgentMemory) -> Self {
        Self {
            role: system.role(memory.role_id).clone(),
            memory,
        }
    }

    /// The state `evaluator` uses to stand in for `target`: the target's role
    /// description paired with the evaluator's memory, records unfiltered.
    pub fn approximated(
        system: &SystemMemory,
        evaluator_memory: &AgentMemory,
        target: Agent,
    ) -> Self {
        Self {
            role: system.role(target).clone(),
            memory: evaluator_memory.clone(),
        }
    }
}

pub fn update_system_memory(memory: &SystemMemory, record: &HistoryRecord) -> SystemMemory {
    let mut next = memory.clone();
    if record.diagnosis.verdict == Verdict::Supported {
        if let Some(raw) = &record.diagnosis.evidence_text {
            let text = normalize_text(raw);
            if !text.is_empty() && !next.contains_evidence(&text) {
                next.evidence.push(Evidence {
                    text,
                    source_round: record.round,
                });
            }
        }
    }
    next
}

pub fn project_agent_memory(history: &[HistoryRecord], role: Agent) -> AgentMemory {
    let records = history
        .iter()
        .filter(|r| match role {
            Agent::Planner => r.diagnosis.failed(),
            Agent::Diagnoser => !r.diagnosis.failed(),
            Agent::Executor => true,
        })
        .cloned()
        .collect();
    AgentMemory {
        role_id: role,
        records,
        constraints: Vec::new(),
    }
}

pub fn append_constraint(memory: &AgentMemory, constraint: Constraint) -> Result<AgentMemory> {
    if memory.role_id != Agent::Planner {
        return Err(Error::NotPlannerMemory(memory.role_id));
    }
    let mut next = memory.clone();
    next.constraints.push(constraint);
    Ok(next)
}

fn render_sections(
    state: &InformationState,
    system: &SystemMemory,
    evidence: &[Evidence],
    records: &[HistoryRecord],
    constraints: &[Constraint],
) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "## Query\n{}\n", system.query.trim());
    if !evidence.is_empty() {
        out.push_str("## Evidence\n");
        for e in evidence {
            let _ = writeln!(out, "- [round {}] {}", e.source_round, e.text);
        }
        out.push('\n');
    }
    let _ = writeln!(
        out,
        "## Role: {}\n{}\n",
        state.role.role_id.name(),
        state.role.description.trim()
    );
    if !records.is_empty() {
        out.push_str("## History\n");
        for r in records {
            let verdict = match r.diagnosis.verdict {
                Verdict::Supported => "SUPPORTED",
                Verdict::Unsupported => "UNSUPPORTED",
            };
            let _ = writeln!(
                out,
                "[round {}] GOAL: {} | TOOL: {} | ARGS: {}",
                r.round,
                normalize_text(&r.plan.goal),
                r.plan.action.tool_id,
                normalize_text(&r.plan.action.argument_sketch)
            );
            let _ = writeln!(
                out,
                "  OUTCOME: {}",
                normalize_text(&r.outcome.result.raw_output)
            );
            let _ = writeln!(
                out,
                "  VERDICT: {} {}",
                verdict,
                normalize_text(&r.diagnosis.rationale)
            );
        }
        out.push('\n');
    }
    if !constraints.is_empty() {
        out.push_str("## Constraints\n");
        for c in constraints {
            let _ = writeln!(out, "- [round {}] {}", c.round, c.text);
        }
        out.push('\n');
    }
    out
}

/// Renders the prompt context for an information state within a token budget.
///
/// Sections appear in a fixed order: query, evidence, role, history (oldest
/// first), constraints. When the budget is exceeded the oldest history records
/// go first, then evidence, then constraints; query and role are never dropped.
pub fn render_context(
    state: &InformationState,
    system: &SystemMemory,
    budget: usize,
) -> Result<String> {
    let minimal = render_sections(state, system, &[], &[], &[]);
    let needed = count_tokens(&minimal);
    if needed > budget {
        return Err(Error::ContextOverflow { needed, budget });
    }
    let records = &state.memory.records[..];
    let evidence = &system.evidence[..];
    let constraints = &state.memory.constraints[..];

    for drop_records in 0..=records.len() {
        let text = render_sections(
            state,
            system,
            evidence,
            &records[drop_records..],
            constraints,
        );
        if count_tokens(&text) <= budget {
            return Ok(text);
        }
    }
    for drop_evidence in 1..=evidence.len() {
        let text = render_sections(state, system, &evidence[drop_evidence..], &[], constraints);
        if count_tokens(&text) <= budget {
            return Ok(text);
        }
    }
    for drop_constraints in 1..=constraints.len() {
        let text = render_sections(state, system, &[], &[], &constraints[drop_constraints..]);
        if count_tokens(&text) <= budget {
            return Ok(text);
        }
    }
    Ok(minimal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ips::Plan;
    use crate::tools::{ExecutionOutcome, ToolResult};

    fn record(round: usize, supported: bool, evidence: Option<&str>) -> HistoryRecord {
        let diagnosis = if supported {
            Diagnosis::supported("meets the plan", evidence.map(str::to_string))
        } else {
            Diagnosis::unsupported("page returned no usable content")
        };
        HistoryRecord {
            round,
            plan: Plan::new(
                1,
                format!("goal {round}"),
                "google_search",
                format!("query {round}"),
            ),
            outcome: ExecutionOutcome {
                tool_id: "google_search".into(),
                arguments: format!("query {round}"),
                result: ToolResult::ok("google_search", format!("outcome {round}")),
            },
            diagnosis,
        }
    }

    fn constraint(round: usize) -> Constraint {
        Constraint {
            text: format!("constraint from round {round}"),
            round,
            planner_choice_index: 2,
            ips_choice_index: 1,
            origin: ConstraintOrigin::Generated,
        }
    }

    #[test]
    fn supported_record_adds_evidence() {
        let sys = SystemMemory::new("What is the capital of France?");
        let next = update_system_memory(
            &sys,
            &record(1, true, Some("Paris is the capital of France")),
        );
        assert_eq!(next.evidence.len(), 1);
        assert_eq!(next.evidence[0].source_round, 1);
        assert_eq!(next.query, sys.query);
        assert_eq!(next.roles, sys.roles);
    }

    #[test]
    fn unsupported_record_leaves_evidence() {
        let sys = update_system_memory(&SystemMemory::new("q"), &record(1, true, Some("e1")));
        let next = update_system_memory(&sys, &record(2, false, None));
        assert_eq!(next.evidence, sys.evidence);
    }

    #[test]
    fn evidence_dedup_uses_normalized_text() {
        let sys = update_system_memory(&SystemMemory::new("q"), &record(1, true, Some("x")));
        let next = update_system_memory(&sys, &record(2, true, Some("  x ")));
        assert_eq!(next.evidence.len(), 1);
        let next = update_system_memory(&next, &record(3, true, Some("X")));
        assert_eq!(next.evidence.len(), 1);
    }

    #[test]
    fn projections_follow_verdicts() {
        let history = vec![
            record(1, false, None),
            record(2, true, Some("a")),
            record(3, false, None),
            record(4, true, Some("b")),
        ];
        let rounds = |m: AgentMemory| m.records.iter().map(|r| r.round).collect::<Vec<_>>();
        assert_eq!(
            rounds(project_agent_memory(&history, Agent::Planner)),
            vec![1, 3]
        );
        assert_eq!(
            rounds(project_agent_memory(&history, Agent::Diagnoser)),
            vec![2, 4]
        );
        assert_eq!(
            rounds(project_agent_memory(&history, Agent::Executor)),
            vec![1, 2, 3, 4]
        );
    }

    #[test]
    fn projections_of_empty_and_all_supported_history() {
        for agent in Agent::ALL {
            let m = project_agent_memory(&[], agent);
            assert!(m.records.is_empty() && m.constraints.is_empty());
        }
        let history = vec![record(1, true, Some("a")), record(2, true, Some("b"))];
        assert!(project_agent_memory(&history, Agent::Planner)
            .records
            .is_empty());
        assert_eq!(
            project_agent_memory(&history, Agent::Diagnoser).records,
            history
        );
        assert_eq!(
            project_agent_memory(&history, Agent::Executor).records,
            history
        );
    }

    #[test]
    fn constraints_append_in_order() {
        let m = project_agent_memory(&[], Agent::Planner);
        let m = append_constraint(&m, constraint(2)).unwrap();
        assert_eq!(m.constraints, vec![constraint(2)]);
        let m = append_constraint(&m, constraint(4)).unwrap();
        assert_eq!(
            m.constraints.iter().map(|c| c.round).collect::<Vec<_>>(),
            vec![2, 4]
        );
        assert!(m.records.is_empty());
    }

    #[test]
    fn constraint_on_executor_memory_is_rejected() {
        let m = project_agent_memory(&[], Agent::Executor);
        assert!(matches!(
            append_constraint(&m, constraint(1)),
            Err(Error::NotPlannerMemory(Agent::Executor))
        ));
    }

    fn planner_state(sys: &SystemMemory, history: &[HistoryRecord]) -> InformationState {
        let mut mem = project_agent_memory(history, Agent::Planner);
        mem.constraints.push(constraint(2));
        InformationState::own(sys, mem)
    }

    #[test]
    fn render_without_truncation_keeps_everything_in_order() {
        let history = vec![
            record(1, false, None),
            record(2, false, None),
            record(3, false, None),
        ];
        let sys = update_system_memory(
            &SystemMemory::new("Who directed Film X?"),
            &record(9, true, Some("ev one")),
        );
        let text = render_context(&planner_state(&sys, &history), &sys, 10_000).unwrap();
        let pos = |needle: &str| {
            text.find(needle)
                .unwrap_or_else(|| panic!("missing {needle}"))
        };
        assert!(pos("Who directed Film X?") < pos("ev one"));
        assert!(pos("ev one") < pos("## Role: Planner"));
        assert!(pos("## Role: Planner") < pos("[round 1]"));
        assert!(pos("[round 1]") < pos("[round 2] GOAL"));
        assert!(pos("[round 2] GOAL") < pos("[round 3]"));
        assert!(pos("[round 3]") < pos("constraint from round 2"));
    }

    #[test]
    fn render_truncates_oldest_records_first() {
        let history = vec![
            record(1, false, None),
            record(2, false, None),
            record(3, false, None),
        ];
        let sys = update_system_memory(&SystemMemory::new("q"), &record(9, true, Some("ev one")));
        let state = planner_state(&sys, &history);
        let full = count_tokens(&render_context(&state, &sys, 10_000).unwrap());
        let text = render_context(&state, &sys, full - 1).unwrap();
        assert!(count_tokens(&text) < full);
        assert!(!text.contains("goal 1"));
        assert!(text.contains("goal 3"));
        assert!(text.contains("ev one"));
        assert!(text.contains("constraint from round 2"));
    }

    #[test]
    fn render_drops_evidence_only_after_all_records() {
        let history = vec![record(1, false, None)];
        let sys = update_system_memory(&SystemMemory::new("q"), &record(9, true, Some("ev one")));
        let state = planner_state(&sys, &history);
        let no_records =
            render_sections(&state, &sys, &sys.evidence, &[], &state.memory.constraints);
        let budget = count_tokens(&no_records) - 1;
        let text = render_context(&state, &sys, budget).unwrap();
        assert!(!text.contains("goal 1"));
        assert!(!text.contains("ev one"));
        assert!(text.contains("constraint from round 2"));
        assert!(count_tokens(&text) <= budget);
    }

    #[test]
    fn render_overflow_when_query_and_role_do_not_fit() {
        let sys = SystemMemory::new("a fairly long query that needs several tokens");
        let state = InformationState::own(&sys, project_agent_memory(&[], Agent::Planner));
        assert!(matches!(
            render_context(&state, &sys, 5),
            Err(Error::ContextOverflow { budget: 5, .. })
        ));
    }

    #[test]
    fn render_is_deterministic() {
        let history = vec![record(1, false, None), record(2, true, Some("a"))];
        let sys = SystemMemory::new("q");
        let state = planner_state(&sys, &history);
        assert_eq!(
            render_context(&state, &sys, 50).unwrap(),
            render_context(&state, &sys, 50).unwrap()
        );
    }

    #[test]
    fn approximated_state_pairs_target_role_with_own_memory() {
        let sys = SystemMemory::new("q");
        let mem = project_agent_memory(&[record(1, false, None)], Agent::Planner);
        let approx = InformationState::approximated(&sys, &mem, Agent::Diagnoser);
        assert_eq!(approx.role.role_id, Agent::Diagnoser);
        assert_eq!(approx.memory.role_id, Agent::Planner);
        assert_eq!(approx.memory.records.len(), 1);
    }
}
