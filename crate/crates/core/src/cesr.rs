//! Consistency-guided refinement of the planner's epistemic state.
//!
//! When the plan the planner itself rates highest differs from the plan the
//! consistency score selects, the diagnoser writes a short constraint that is
//! appended to the planner's private memory and shown in every later planning
//! prompt.

use serde::{Deserialize, Serialize};

use crate::backend::{CompletionRequest, Purpose, Session};
use crate::error::Result;
use crate::ips::Plan;
use crate::memory::{
    append_constraint, normalize_text, Agent, AgentMemory, Constraint, ConstraintOrigin,
    SystemMemory,
};
use crate::prompts;

pub const MAX_CONSTRAINT_SENTENCES: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceEvent {
    pub round: usize,
    pub planner_plan: Plan,
    pub ips_plan: Plan,
    pub constraint: Constraint,
}

pub fn detect_divergence(planner_index: usize, selected_index: usize) -> bool {
    planner_index != selected_index
}

/// Splits text into sentences ending in `.`, `!` or `?` followed by whitespace or the end.
pub fn sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        current.push(c);
        if matches!(c, '.' | '!' | '?') && chars.peek().is_none_or(|n| n.is_whitespace()) {
            let s = normalize_text(&current);
            if !s.is_empty() {
                out.push(s);
            }
            current.clear();
        }
    }
    let rest = normalize_text(&current);
    if !rest.is_empty() {
        out.push(rest);
    }
    out
}

enum Candidate {
    Usable(String),
    Overlong(Vec<String>),
    Empty,
}

fn classify(text: &str) -> Candidate {
    let parts = sentences(text);
    match parts.len() {
        0 => Candidate::Empty,
        n if n <= MAX_CONSTRAINT_SENTENCES => Candidate::Usable(parts.join(" ")),
        _ => Candidate::Overlong(parts),
    }
}

/// Asks the diagnoser for a constraint. Empty or overlong output gets one
/// re-prompt; after that an overlong reply is cut to two sentences and an
/// empty one is replaced by a fixed template naming both plans.
pub fn induce_constraint(
    session: &Session<'_>,
    planner_plan: &Plan,
    ips_plan: &Plan,
    system: &SystemMemory,
    round: usize,
) -> Result<Constraint> {
    let prompt = prompts::constraint_induction(planner_plan, ips_plan, system);
    let request = CompletionRequest::new(
        Agent::Diagnoser,
        Purpose::ConstraintInduction,
        round,
        prompt.clone(),
    );
    let (text, origin) = match classify(&session.complete(&request)?.text) {
        Candidate::Usable(t) => (t, ConstraintOrigin::Generated),
        _ => {
            let retry = CompletionRequest {
                prompt: prompts::constraint_reprompt(&prompt),
                ..request
            };
            match classify(&session.complete(&retry)?.text) {
                Candidate::Usable(t) => (t, ConstraintOrigin::Generated),
                Candidate::Overlong(parts) => (
                    parts[..MAX_CONSTRAINT_SENTENCES].join(" "),
                    ConstraintOrigin::Truncated,
                ),
                Candidate::Empty => (
                    prompts::constraint_fallback(planner_plan, ips_plan),
                    ConstraintOrigin::Fallback,
                ),
            }
        }
    };
    Ok(Constraint {
        text,
        round,
        planner_choice_index: planner_plan.candidate_index,
        ips_choice_index: ips_plan.candidate_index,
        origin,
    })
}

pub fn refine(planner_memory: &AgentMemory, event: &DivergenceEvent) -> Result<AgentMemory> {
    append_constraint(planner_memory, event.constraint.clone())
}
