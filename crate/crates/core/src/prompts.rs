//! Prompt templates. Every completion the workflow issues is built here.

use std::fmt::Write as _;

use crate::ips::Plan;
use crate::memory::{normalize_text, Agent, Evidence, HistoryRecord, SystemMemory, Verdict};
use crate::tools::{ExecutionOutcome, ToolSpec};

/// Feasibility rubric embedded in every evaluation prompt.
pub const FEASIBILITY_RUBRIC: &str = include_str!("../resources/feasibility_rubric.v1.txt");
pub const RUBRIC_VERSION: u32 = 1;

pub fn format_plan(plan: &Plan) -> String {
    format!(
        "Plan {}: GOAL: {} | TOOL: {} | ARGS: {}",
        plan.candidate_index,
        normalize_text(&plan.goal),
        plan.action.tool_id,
        normalize_text(&plan.action.argument_sketch)
    )
}

fn plan_list(plans: &[Plan]) -> String {
    plans.iter().map(|p| format_plan(p) + "\n").collect()
}

fn tool_list(tools: &[ToolSpec]) -> String {
    tools
        .iter()
        .map(|t| format!("- {}: {}\n", t.tool_id, t.description))
        .collect()
}

fn evidence_list(evidence: &[Evidence]) -> String {
    if evidence.is_empty() {
        return "(none yet)\n".into();
    }
    evidence
        .iter()
        .map(|e| format!("- [round {}] {}\n", e.source_round, e.text))
        .collect()
}

pub fn candidate_generation(
    context: &str,
    k: usize,
    tools: &[ToolSpec],
    feedback: Option<&str>,
) -> String {
    let mut p = String::new();
    p.push_str(context);
    let _ = write!(
        p,
        "## Task\nPropose {k} structurally distinct candidate next-step plans for answering the query. \
         Each plan names one intermediate goal and one tool action that can acquire verifiable evidence for it.\n\n\
         ## Available tools\n{}\n",
        tool_list(tools)
    );
    if let Some(fb) = feedback {
        let _ = write!(
            p,
            "## Diagnostic feedback on the previous attempt\n{}\n\n",
            fb.trim()
        );
    }
    p.push_str(
        "## Output format\nWrite each plan as a block of three lines, blocks separated by a blank line:\n\
         GOAL: <intermediate goal>\nTOOL: <tool id from the list above>\nARGS: <what the tool should be asked>\n",
    );
    p
}

fn evaluation_tail(plans: &[Plan]) -> String {
    format!(
        "## Feasibility rubric\n{}\n## Candidate plans\n{}\n\
         Reply with exactly one line per plan in the form `Plan <k>: <score>` where <score> is an integer from 1 to 5.\n",
        FEASIBILITY_RUBRIC,
        plan_list(plans)
    )
}

pub fn evaluation(context: &str, evaluator: Agent, target: Agent, plans: &[Plan]) -> String {
    let mut p = String::new();
    p.push_str(context);
    if evaluator == target {
        let _ = writeln!(
            p,
            "## Task\nAs the {}, assess how feasible each candidate plan is given the information above.\n",
            evaluator.name()
        );
    } else {
        let _ = writeln!(
            p,
            "## Task\nYou are the {ev}. The role description above belongs to the {tg}. Using only the \
             information you hold, predict the feasibility scores the {tg} would assign to each candidate plan.\n",
            ev = evaluator.name(),
            tg = target.name()
        );
    }
    p.push_str(&evaluation_tail(plans));
    p
}

/// One call per agent returning its self scores and its predictions for both peers.
pub fn evaluation_batch(context: &str, evaluator: Agent, plans: &[Plan]) -> String {
    let mut p = String::new();
    p.push_str(context);
    let peers: Vec<&str> = evaluator.peers().map(Agent::name).collect();
    let _ = writeln!(
        p,
        "## Task\nAs the {ev}, first assess how feasible each candidate plan is. Then, using only the \
         information you hold, predict the scores the {a} and the {b} would assign.\n",
        ev = evaluator.name(),
        a = peers[0],
        b = peers[1]
    );
    p.push_str(&evaluation_tail(plans));
    let _ = writeln!(
        p,
        "Write three sections headed `[{}]`, `[{}]` and `[{}]`, each containing the score lines.",
        evaluator.name(),
        peers[0],
        peers[1]
    );
    p
}

pub fn score_reprompt(original: &str, reason: &str, k: usize) -> String {
    format!(
        "{original}\nYour previous reply could not be parsed ({reason}). Reply only with lines \
         `Plan <k>: <score>` for k = 1..{k}, each score an integer from 1 to 5.\n"
    )
}

pub fn candidate_reprompt(original: &str) -> String {
    format!("{original}\nYour previous reply contained no parseable plan block. Use exactly the GOAL/TOOL/ARGS format.\n")
}

pub fn tool_argumentation(context: &str, plan: &Plan, tool: &ToolSpec) -> String {
    format!(
        "{context}## Task\nInstantiate the planned action as concrete input for the tool.\n\
         Tool: {} ({})\nGoal: {}\nAction sketch: {}\n\n\
         Reply with only the tool input (a search query, code, or the requested text), nothing else.\n",
        tool.tool_id,
        tool.description,
        normalize_text(&plan.goal),
        normalize_text(&plan.action.argument_sketch)
    )
}

pub fn diagnosis(context: &str, plan: &Plan, outcome: &ExecutionOutcome) -> String {
    format!(
        "{context}## Task\nDecide whether the execution outcome meets the plan.\n\
         Goal: {}\nTool: {}\nTool input: {}\nOutcome:\n{}\n\n\
         Reply starting with SUPPORTED or UNSUPPORTED, followed by a short rationale. When SUPPORTED, \
         add one line `EVIDENCE: <verifiable fact extracted from the outcome>`.\n",
        normalize_text(&plan.goal),
        outcome.tool_id,
        normalize_text(&outcome.arguments),
        outcome.result.raw_output.trim()
    )
}

pub fn diagnosis_reprompt(original: &str) -> String {
    format!("{original}\nYour previous reply did not start with SUPPORTED or UNSUPPORTED. Answer again in that format.\n")
}

pub fn stop_check(query: &str, evidence: &[Evidence]) -> String {
    format!(
        "## Query\n{}\n\n## Verified evidence\n{}\n## Task\nDoes the verified evidence suffice to answer the query? \
         Reply with SUFFICIENT or INSUFFICIENT.\n",
        query.trim(),
        evidence_list(evidence)
    )
}

pub fn history_digest(history: &[HistoryRecord]) -> String {
    if history.is_empty() {
        return "(no rounds executed)\n".into();
    }
    history
        .iter()
        .map(|r| {
            let verdict = match r.diagnosis.verdict {
                Verdict::Supported => "supported",
                Verdict::Unsupported => "unsupported",
            };
            format!(
                "- round {}: {} via {} -> {}\n",
                r.round,
                normalize_text(&r.plan.goal),
                r.plan.action.tool_id,
                verdict
            )
        })
        .collect()
}

pub fn answer(query: &str, evidence: &[Evidence], history: &[HistoryRecord]) -> String {
    format!(
        "## Query\n{}\n\n## Verified evidence\n{}\n## Interaction history\n{}\n\
         ## Task\nAnswer the query as concisely as possible using the evidence. If the evidence is \
         incomplete, give your best answer anyway.\n",
        query.trim(),
        evidence_list(evidence),
        history_digest(history)
    )
}

pub fn constraint_induction(planner_plan: &Plan, ips_plan: &Plan, system: &SystemMemory) -> String {
    format!(
        "## Query\n{}\n\n## Verified evidence\n{}\n\
         ## Divergence\nThe Planner preferred:\n{}\nbut the plan whose evaluations were most consistent across agents was:\n{}\n\n\
         ## Task\nWrite one lightweight epistemic constraint (one or two sentences) that the Planner should \
         follow in later rounds to avoid the feasibility misjudgment this divergence reveals. Reply with the \
         constraint only.\n",
        system.query.trim(),
        evidence_list(&system.evidence),
        format_plan(planner_plan),
        format_plan(ips_plan)
    )
}

pub fn constraint_reprompt(original: &str) -> String {
    format!("{original}\nYour previous reply was empty or longer than two sentences. Reply with at most two sentences.\n")
}

pub fn constraint_fallback(planner_plan: &Plan, ips_plan: &Plan) -> String {
    format!(
        "Do not assume plan {} ({} for \"{}\") is feasible when the cross-agent consistent plan {} ({} for \"{}\") \
         is preferred; validate that the chosen tool can actually produce verifiable evidence for the goal.",
        planner_plan.candidate_index,
        planner_plan.action.tool_id,
        normalize_text(&planner_plan.goal),
        ips_plan.candidate_index,
        ips_plan.action.tool_id,
        normalize_text(&ips_plan.goal)
    )
}

pub fn rollback_target(context: &str, current_round: usize, feedback: &str) -> String {
    format!(
        "{context}## Task\nThe plan executed in round {current_round} did not meet its goal: {}\n\
         Choose the round to revert to: the system will keep rounds 1..R and discard the rest \
         (0 discards everything). Reply with `ROUND: <R>` where 0 <= R < {current_round}.\n",
        feedback.trim()
    )
}

pub fn summarization(query: &str, pages: &[(String, String)]) -> String {
    let mut p = format!("## Search query\n{}\n\n## Retrieved pages\n", query.trim());
    for (url, text) in pages {
        let _ = writeln!(p, "### {url}\n{}\n", text.trim());
    }
    p.push_str(
        "## Task\nSummarize the information in these pages that is relevant to the search query.\n",
    );
    p
}

pub fn judge(question: &str, predicted: &str, gold: &str) -> String {
    format!(
        "Question: {}\nGround-truth answer: {}\nModel prediction: {}\n\n\
         Does the prediction match the ground-truth answer? Reply with CORRECT or INCORRECT.\n",
        question.trim(),
        gold.trim(),
        predicted.trim()
    )
}
