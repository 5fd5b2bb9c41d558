//! Single-call workflow steps: execution, diagnosis, stop check and answer generation.

use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::backend::{CompletionRequest, Purpose, Session};
use crate::error::Result;
use crate::ips::Plan;
use crate::memory::{
    render_context, Agent, Diagnosis, Evidence, HistoryRecord, InformationState, SystemMemory,
    Verdict,
};
use crate::prompts;
use crate::tools::{ExecutionOutcome, ToolRegistry, ToolResult, BASE_GENERATOR};

/// Turns the plan's action sketch into concrete tool input (one executor
/// call) and runs the tool. `base_generator` plans use the completion text as
/// the outcome; unregistered tools yield a failed outcome without any call.
#[allow(clippy::too_many_arguments)]
pub fn execute_plan(
    session: &Session<'_>,
    tools: &ToolRegistry,
    plan: &Plan,
    executor_state: &InformationState,
    system: &SystemMemory,
    round: usize,
    context_budget: usize,
) -> Result<ExecutionOutcome> {
    let tool_id = plan.action.tool_id.as_str();
    let Some(spec) = tools.spec(tool_id) else {
        return Ok(ExecutionOutcome {
            tool_id: tool_id.to_string(),
            arguments: plan.action.argument_sketch.clone(),
            result: ToolResult::failure(tool_id, format!("unknown tool `{tool_id}`")),
        });
    };
    let context = render_context(executor_state, system, context_budget)?;
    let request = CompletionRequest::new(
        Agent::Executor,
        Purpose::ToolArgumentation,
        round,
        prompts::tool_argumentation(&context, plan, spec),
    );
    let arguments = session.complete(&request)?.text.trim().to_string();
    let result = if tool_id == BASE_GENERATOR {
        ToolResult::ok(BASE_GENERATOR, arguments.clone())
    } else {
        tools.invoke_tool(session, round, tool_id, &arguments)?
    };
    Ok(ExecutionOutcome {
        tool_id: tool_id.to_string(),
        arguments,
        result,
    })
}

fn strip_markup(line: &str) -> &str {
    line.trim()
        .trim_start_matches(['*', '#', '-', '>', '`', ' '])
        .trim()
}

fn starts_with_ignore_case(s: &str, prefix: &str) -> bool {
    s.get(..prefix.len())
        .is_some_and(|h| h.eq_ignore_ascii_case(prefix))
}

/// Parses a verdict-first diagnoser reply; `None` when the verdict token is missing.
pub fn parse_diagnosis(text: &str) -> Option<Diagnosis> {
    let mut lines = text.lines().map(strip_markup).filter(|l| !l.is_empty());
    let first = lines.next()?;
    let (verdict, rest) = if starts_with_ignore_case(first, "UNSUPPORTED") {
        (Verdict::Unsupported, &first["UNSUPPORTED".len()..])
    } else if starts_with_ignore_case(first, "SUPPORTED") {
        (Verdict::Supported, &first["SUPPORTED".len()..])
    } else {
        return None;
    };
    if rest.starts_with(|c: char| c.is_ascii_alphanumeric()) {
        return None;
    }
    let mut rationale: Vec<&str> = Vec::new();
    let head = rest
        .trim()
        .trim_start_matches([':', '-', '–', '—', ',', '.', '*'])
        .trim();
    if !head.is_empty() {
        rationale.push(head);
    }
    let mut evidence = None;
    for line in lines {
        if starts_with_ignore_case(line, "EVIDENCE:") {
            if evidence.is_none() {
                evidence = Some(line["EVIDENCE:".len()..].trim().to_string());
            }
        } else {
            rationale.push(line);
        }
    }
    let rationale = rationale.join(" ");
    Some(match verdict {
        Verdict::Supported => Diagnosis::supported(rationale, evidence),
        Verdict::Unsupported => Diagnosis::unsupported(rationale),
    })
}

/// One diagnoser call; an unreadable verdict gets one re-prompt and then
/// falls back to a conservative Unsupported.
#[allow(clippy::too_many_arguments)]
pub fn diagnose_outcome(
    session: &Session<'_>,
    plan: &Plan,
    outcome: &ExecutionOutcome,
    diagnoser_state: &InformationState,
    system: &SystemMemory,
    round: usize,
    context_budget: usize,
) -> Result<Diagnosis> {
    let context = render_context(diagnoser_state, system, context_budget)?;
    let prompt = prompts::diagnosis(&context, plan, outcome);
    let request =
        CompletionRequest::new(Agent::Diagnoser, Purpose::Diagnosis, round, prompt.clone());
    if let Some(d) = parse_diagnosis(&session.complete(&request)?.text) {
        return Ok(d);
    }
    let retry = CompletionRequest {
        prompt: prompts::diagnosis_reprompt(&prompt),
        ..request
    };
    if let Some(d) = parse_diagnosis(&session.complete(&retry)?.text) {
        return Ok(d);
    }
    warn!(
        round,
        "diagnoser output unusable twice; recording Unsupported"
    );
    let mut d = Diagnosis::unsupported("diagnoser output could not be interpreted");
    d.fallback = true;
    Ok(d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopDecision {
    pub stop: bool,
    /// The reply was neither SUFFICIENT nor INSUFFICIENT.
    pub warning: bool,
}

pub fn parse_stop(text: &str) -> StopDecision {
    let token: String = strip_markup(text)
        .chars()
        .take_while(|c| c.is_ascii_alphabetic() || *c == '_')
        .collect::<String>()
        .to_ascii_uppercase();
    match token.as_str() {
        "SUFFICIENT" => StopDecision {
            stop: true,
            warning: false,
        },
        "INSUFFICIENT" => StopDecision {
            stop: false,
            warning: false,
        },
        _ => StopDecision {
            stop: false,
            warning: true,
        },
    }
}

pub fn check_stop(
    session: &Session<'_>,
    query: &str,
    evidence: &[Evidence],
    round: usize,
) -> Result<StopDecision> {
    let request = CompletionRequest::new(
        Agent::Diagnoser,
        Purpose::StopCheck,
        round,
        prompts::stop_check(query, evidence),
    );
    let decision = parse_stop(&session.complete(&request)?.text);
    if decision.warning {
        warn!(round, "stop check reply unreadable; continuing");
    }
    Ok(decision)
}

/// Final answer from the query, the evidence set and a digest of the history; returned verbatim.
pub fn generate_answer(
    session: &Session<'_>,
    query: &str,
    evidence: &[Evidence],
    history: &[HistoryRecord],
    round: usize,
) -> Result<String> {
    let request = CompletionRequest::new(
        Agent::Planner,
        Purpose::AnswerGeneration,
        round,
        prompts::answer(query, evidence, history),
    );
    Ok(session.complete(&request)?.text)
}
