//! Information-consistency-based plan selection.
//!
//! Each round the planner proposes up to `k` candidate plans. Every agent
//! scores them under its own information state, and predicts how each peer
//! would score them by pairing the peer's role description with its own
//! memory. Agent `i`'s consistency for plan `k` is
//! `ln e_i(k) - ln mean_{j != i} ê_{i->j}(k)`, the plan score is the mean over
//! the three agents, and the plan with the highest score is executed.

use serde::{Deserialize, Serialize};

use crate::backend::{parse_score, CompletionRequest, ParsedScores, Purpose, Session};
use crate::error::{Error, Result};
use crate::memory::{
    project_agent_memory, render_context, Agent, AgentMemory, Constraint, HistoryRecord,
    InformationState, SystemMemory,
};
use crate::prompts;
use crate::tools::ToolSpec;

/// Absolute tolerance under which two plan scores count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Action {
    pub tool_id: String,
    pub argument_sketch: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub goal: String,
    pub action: Action,
    /// 1-based position in the round's candidate set.
    pub candidate_index: usize,
}

impl Plan {
    pub fn new(
        index: usize,
        goal: impl Into<String>,
        tool_id: impl Into<String>,
        args: impl Into<String>,
    ) -> Self {
        Self {
            goal: goal.into(),
            action: Action {
                tool_id: tool_id.into(),
                argument_sketch: args.into(),
            },
            candidate_index: index,
        }
    }

    fn same_content(&self, other: &Plan) -> bool {
        self.goal == other.goal && self.action == other.action
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub plans: Vec<Plan>,
    pub requested_k: usize,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.plans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plans.is_empty()
    }

    /// Plan at a 1-based index.
    pub fn get(&self, index: usize) -> &Plan {
        &self.plans[index - 1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
pub enum EvalBatching {
    /// Nine calls: three self evaluations and six cross predictions.
    #[default]
    PerPerspective,
    /// Three calls, each returning one agent's self scores and both predictions.
    PerAgent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClampFlag {
    pub evaluator: Agent,
    pub target: Agent,
    pub plan: usize,
}

/// Row = evaluating agent, column = target agent; the diagonal holds self scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    pub scores: [[Vec<f64>; 3]; 3],
    #[serde(default)]
    pub clamp_flags: Vec<ClampFlag>,
}

impl ScoreMatrix {
    pub fn new(scores: [[Vec<f64>; 3]; 3]) -> Self {
        Self {
            scores,
            clamp_flags: Vec::new(),
        }
    }

    pub fn self_scores(&self, agent: Agent) -> &[f64] {
        &self.scores[agent.index()][agent.index()]
    }

    pub fn prediction(&self, evaluator: Agent, target: Agent) -> &[f64] {
        &self.scores[evaluator.index()][target.index()]
    }

    pub fn plan_count(&self) -> usize {
        self.scores[0][0].len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    /// Per agent, the mean of its predictions for its two peers.
    pub peer_means: [Vec<f64>; 3],
    /// Per agent, natural-log consistency scores.
    pub agent_scores: [Vec<f64>; 3],
    pub plan_scores: Vec<f64>,
    pub selected_index: usize,
    pub planner_index: usize,
    pub tie_broken: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Selection {
    pub index: usize,
    pub tie_broken: bool,
}

/// Argmax with lowest-index tie-break; indices are 1-based.
pub fn select_plan(values: &[f64]) -> Selection {
    assert!(!values.is_empty(), "select_plan needs at least one score");
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut winners = values
        .iter()
        .enumerate()
        .filter(|(_, v)| (max - **v).abs() <= TIE_TOLERANCE)
        .map(|(i, _)| i + 1);
    let index = winners.next().expect("maximum is attained");
    Selection {
        index,
        tie_broken: winners.next().is_some(),
    }
}

/// Computes the consistency scores; selection fields are filled from the
/// plan scores and the planner's self scores.
pub fn compute_consistency(matrix: &ScoreMatrix) -> ConsistencyReport {
    let n = matrix.plan_count();
    let peer_means = Agent::ALL.map(|i| {
        (0..n)
            .map(|k| {
                let sum: f64 = i.peers().map(|j| matrix.prediction(i, j)[k]).sum();
                sum / (Agent::ALL.len() - 1) as f64
            })
            .collect::<Vec<f64>>()
    });
    let agent_scores = Agent::ALL.map(|i| {
        let own = matrix.self_scores(i);
        (0..n)
            .map(|k| own[k].ln() - peer_means[i.index()][k].ln())
            .collect::<Vec<f64>>()
    });
    let plan_scores: Vec<f64> = (0..n)
        .map(|k| agent_scores.iter().map(|s| s[k]).sum::<f64>() / Agent::ALL.len() as f64)
        .collect();
    let selection = select_plan(&plan_scores);
    let planner = select_plan(matrix.self_scores(Agent::Planner));
    ConsistencyReport {
        peer_means,
        agent_scores,
        plan_scores,
        selected_index: selection.index,
        planner_index: planner.index,
        tie_broken: selection.tie_broken,
    }
}

fn normalize_tool_id(raw: &str) -> String {
    raw.trim()
        .trim_matches(['`', '"', '\''])
        .to_lowercase()
        .replace([' ', '-'], "_")
}

#[derive(Clone, Copy)]
enum Field {
    Goal,
    Tool,
    Args,
}

/// Parses GOAL/TOOL/ARGS blocks, drops exact duplicates (first occurrence
/// wins), keeps at most `k` plans and renumbers them from 1.
pub fn parse_candidates(text: &str, k: usize) -> Vec<Plan> {
    let mut blocks: Vec<(String, String, String)> = Vec::new();
    let mut current: Option<(String, String, String)> = None;
    let mut last = Field::Goal;

    for raw in text.lines() {
        let line = strip_label(raw.trim().trim_start_matches(['-', '*', '#']).trim());
        if line.is_empty() {
            continue;
        }
        let (field, value) = match split_field(line) {
            Some(fv) => fv,
            None => {
                if let Some(block) = current.as_mut() {
                    let slot = match last {
                        Field::Goal => &mut block.0,
                        Field::Tool => &mut block.1,
                        Field::Args => &mut block.2,
                    };
                    if !matches!(last, Field::Tool) {
                        if !slot.is_empty() {
                            slot.push(' ');
                        }
                        slot.push_str(line);
                    }
                }
                continue;
            }
        };
        match field {
            Field::Goal => {
                blocks.extend(current.take());
                current = Some((value.to_string(), String::new(), String::new()));
            }
            Field::Tool => {
                if let Some(block) = current.as_mut() {
                    block.1 = normalize_tool_id(value);
                }
            }
            Field::Args => {
                if let Some(block) = current.as_mut() {
                    block.2 = value.to_string();
                }
            }
        }
        last = field;
    }
    blocks.extend(current);

    let mut plans: Vec<Plan> = Vec::new();
    for (goal, tool, args) in blocks {
        if goal.trim().is_empty() || tool.is_empty() {
            continue;
        }
        let plan = Plan::new(plans.len() + 1, goal.trim(), tool, args.trim());
        if plans.iter().any(|p| p.same_content(&plan)) {
            continue;
        }
        plans.push(plan);
        if plans.len() == k {
            break;
        }
    }
    plans
}

/// Strips a leading `Plan 3:` / `3.` / `3)` label.
fn strip_label(line: &str) -> &str {
    let rest = match line.get(..4) {
        Some(head) if head.eq_ignore_ascii_case("plan") => line[4..].trim_start(),
        _ => line,
    };
    let digits = rest.chars().take_while(char::is_ascii_digit).count();
    if digits == 0 {
        return line;
    }
    let after = &rest[digits..];
    let labelled = rest.len() != line.len() || after.starts_with(['.', ')', ':']);
    if !labelled {
        return line;
    }
    after.trim_start_matches([':', '.', ')']).trim_start()
}

fn split_field(line: &str) -> Option<(Field, &str)> {
    let (name, value) = line.split_once(':')?;
    let field = match name.trim().to_ascii_uppercase().as_str() {
        "GOAL" => Field::Goal,
        "TOOL" => Field::Tool,
        "ARGS" | "ARGUMENTS" => Field::Args,
        _ => return None,
    };
    Some((field, value.trim()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IpsConfig {
    pub k: usize,
    pub temperature_plan: f64,
    pub batching: EvalBatching,
    pub context_budget: usize,
}

/// Issues the candidate generation call (one re-prompt on an unparseable reply).
#[allow(clippy::too_many_arguments)]
pub fn generate_candidates(
    session: &Session<'_>,
    system: &SystemMemory,
    planner_state: &InformationState,
    k: usize,
    round: usize,
    temperature: f64,
    context_budget: usize,
    tools: &[ToolSpec],
    feedback: Option<&str>,
) -> Result<CandidateSet> {
    assert!(k >= 1, "k must be positive");
    let context = render_context(planner_state, system, context_budget)?;
    let prompt = prompts::candidate_generation(&context, k, tools, feedback);
    let request = CompletionRequest::new(
        Agent::Planner,
        Purpose::CandidateGeneration,
        round,
        prompt.clone(),
    )
    .with_temperature(temperature);
    let plans = parse_candidates(&session.complete(&request)?.text, k);
    let plans = if plans.is_empty() {
        let retry = CompletionRequest {
            prompt: prompts::candidate_reprompt(&prompt),
            ..request
        };
        parse_candidates(&session.complete(&retry)?.text, k)
    } else {
        plans
    };
    if plans.is_empty() {
        return Err(Error::CandidateParseFailure);
    }
    Ok(CandidateSet {
        plans,
        requested_k: k,
    })
}

fn complete_scores(
    session: &Session<'_>,
    request: CompletionRequest,
    k: usize,
) -> Result<ParsedScores> {
    let first = session.complete(&request)?;
    match parse_score(&first.text, k) {
        Ok(p) => Ok(p),
        Err(Error::ScoreParseFailure { reason, .. }) => {
            let retry = CompletionRequest {
                prompt: prompts::score_reprompt(&request.prompt, &reason, k),
                ..request
            };
            parse_score(&session.complete(&retry)?.text, k)
        }
        Err(e) => Err(e),
    }
}

/// One evaluation call for `(evaluator, target)`; `state` must already be the
/// self state (evaluator == target) or the approximated state.
pub fn evaluate_perspective(
    session: &Session<'_>,
    state: &InformationState,
    system: &SystemMemory,
    candidates: &CandidateSet,
    perspective: (Agent, Agent),
    round: usize,
    context_budget: usize,
) -> Result<ParsedScores> {
    let (evaluator, target) = perspective;
    let context = render_context(state, system, context_budget)?;
    let prompt = prompts::evaluation(&context, evaluator, target, &candidates.plans);
    let request = CompletionRequest::new(evaluator, Purpose::Evaluation, round, prompt)
        .with_perspective(perspective);
    complete_scores(session, request, candidates.len())
}

fn parse_batch(text: &str, evaluator: Agent, k: usize) -> Result<[Option<ParsedScores>; 3]> {
    let mut sections: [String; 3] = Default::default();
    let mut current: Option<Agent> = None;
    for line in text.lines() {
        let t = line.trim();
        if t.starts_with('[') && t.ends_with(']') {
            let name = t.trim_matches(['[', ']']).trim();
            let name = name
                .strip_prefix("As ")
                .or_else(|| name.strip_prefix("as "))
                .unwrap_or(name);
            current = Agent::ALL
                .into_iter()
                .find(|a| a.name().eq_ignore_ascii_case(name.trim()));
            continue;
        }
        if let Some(a) = current {
            sections[a.index()].push_str(line);
            sections[a.index()].push('\n');
        }
    }
    let mut out: [Option<ParsedScores>; 3] = Default::default();
    for agent in Agent::ALL {
        let parsed = parse_score(&sections[agent.index()], k).map_err(|e| match e {
            Error::ScoreParseFailure { expected, reason } => Error::ScoreParseFailure {
                expected,
                reason: format!(
                    "{} section of {} batch: {reason}",
                    agent.name(),
                    evaluator.name()
                ),
            },
            other => other,
        })?;
        out[agent.index()] = Some(parsed);
    }
    Ok(out)
}

fn evaluate_batch(
    session: &Session<'_>,
    memory: &AgentMemory,
    system: &SystemMemory,
    candidates: &CandidateSet,
    round: usize,
    context_budget: usize,
) -> Result<[ParsedScores; 3]> {
    let evaluator = memory.role_id;
    let state = InformationState::own(system, memory.clone());
    let context = render_context(&state, system, context_budget)?;
    let prompt = prompts::evaluation_batch(&context, evaluator, &candidates.plans);
    let request = CompletionRequest::new(evaluator, Purpose::Evaluation, round, prompt)
        .with_perspective((evaluator, evaluator));
    let k = candidates.len();
    let first = session.complete(&request)?;
    let parsed = match parse_batch(&first.text, evaluator, k) {
        Ok(p) => p,
        Err(Error::ScoreParseFailure { reason, .. }) => {
            let retry = CompletionRequest {
                prompt: prompts::score_reprompt(&request.prompt, &reason, k),
                ..request
            };
            parse_batch(&session.complete(&retry)?.text, evaluator, k)?
        }
        Err(e) => return Err(e),
    };
    Ok(parsed.map(|p| p.expect("every section parsed")))
}

/// Runs every evaluation concurrently and assembles the score matrix. Call
/// records are merged in evaluator-major order regardless of completion order.
pub fn evaluate_all(
    session: &Session<'_>,
    memories: &[AgentMemory; 3],
    system: &SystemMemory,
    candidates: &CandidateSet,
    round: usize,
    config: &IpsConfig,
) -> Result<ScoreMatrix> {
    let mut scores: [[Option<ParsedScores>; 3]; 3] = Default::default();
    match config.batching {
        EvalBatching::PerPerspective => {
            let perspectives: Vec<(Agent, Agent)> = Agent::ALL
                .into_iter()
                .flat_map(|i| Agent::ALL.into_iter().map(move |j| (i, j)))
                .collect();
            let results: Vec<(Session<'_>, Result<ParsedScores>)> = std::thread::scope(|scope| {
                let handles: Vec<_> = perspectives
                    .iter()
                    .map(|&(i, j)| {
                        let fork = session.fork();
                        scope.spawn(move || {
                            let memory = &memories[i.index()];
                            let state = if i == j {
                                InformationState::own(system, memory.clone())
                            } else {
                                InformationState::approximated(system, memory, j)
                            };
                            let r = evaluate_perspective(
                                &fork,
                                &state,
                                system,
                                candidates,
                                (i, j),
                                round,
                                config.context_budget,
                            );
                            (fork, r)
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("evaluation thread panicked"))
                    .collect()
            });
            let mut first_err = None;
            for (&(i, j), (fork, result)) in perspectives.iter().zip(results) {
                session.absorb(fork);
                match result {
                    Ok(p) => scores[i.index()][j.index()] = Some(p),
                    Err(e) => {
                        first_err.get_or_insert(e);
                    }
                }
            }
            if let Some(e) = first_err {
                return Err(e);
            }
        }
        EvalBatching::PerAgent => {
            let results: Vec<(Session<'_>, Result<[ParsedScores; 3]>)> =
                std::thread::scope(|scope| {
                    let handles: Vec<_> = memories
                        .iter()
                        .map(|memory| {
                            let fork = session.fork();
                            scope.spawn(move || {
                                let r = evaluate_batch(
                                    &fork,
                                    memory,
                                    system,
                                    candidates,
                                    round,
                                    config.context_budget,
                                );
                                (fork, r)
                            })
                        })
                        .collect();
                    handles
                        .into_iter()
                        .map(|h| h.join().expect("evaluation thread panicked"))
                        .collect()
                });
            let mut first_err = None;
            for (i, (fork, result)) in Agent::ALL.into_iter().zip(results) {
                session.absorb(fork);
                match result {
                    Ok(rows) => {
                        for (j, p) in Agent::ALL.into_iter().zip(rows) {
                            scores[i.index()][j.index()] = Some(p);
                        }
                    }
                    Err(e) => {
                        first_err.get_or_insert(e);
                    }
                }
            }
            if let Some(e) = first_err {
                return Err(e);
            }
        }
    }

    let mut clamp_flags = Vec::new();
    let matrix = Agent::ALL.map(|i| {
        Agent::ALL.map(|j| {
            let parsed = scores[i.index()][j.index()]
                .take()
                .expect("all perspectives evaluated");
            clamp_flags.extend(parsed.clamped.iter().map(|&plan| ClampFlag {
                evaluator: i,
                target: j,
                plan,
            }));
            parsed.as_f64()
        })
    });
    Ok(ScoreMatrix {
        scores: matrix,
        clamp_flags,
    })
}

/// Projects the three agent memories from the history and re-attaches the
/// planner's accumulated constraints.
pub fn agent_memories(
    history: &[HistoryRecord],
    planner_constraints: &[Constraint],
) -> [AgentMemory; 3] {
    Agent::ALL.map(|agent| {
        let mut memory = project_agent_memory(history, agent);
        if agent == Agent::Planner {
            memory.constraints = planner_constraints.to_vec();
        }
        memory
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IpsOutcome {
    pub candidates: CandidateSet,
    pub matrix: ScoreMatrix,
    pub report: ConsistencyReport,
}

/// Full selection step, from candidate generation through the argmax.
#[allow(clippy::too_many_arguments)]
pub fn run_ips(
    session: &Session<'_>,
    history: &[HistoryRecord],
    planner_constraints: &[Constraint],
    system: &SystemMemory,
    config: &IpsConfig,
    round: usize,
    tools: &[ToolSpec],
    feedback: Option<&str>,
) -> Result<IpsOutcome> {
    let memories = agent_memories(history, planner_constraints);
    let planner_state = InformationState::own(system, memories[Agent::Planner.index()].clone());
    let candidates = generate_candidates(
        session,
        system,
        &planner_state,
        config.k,
        round,
        config.temperature_plan,
        config.context_budget,
        tools,
        feedback,
    )?;
    let matrix = evaluate_all(session, &memories, system, &candidates, round, config)?;
    let report = compute_consistency(&matrix);
    Ok(IpsOutcome {
        candidates,
        matrix,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn worked_matrix() -> ScoreMatrix {
        // rows: Planner, Executor, Diagnoser; columns likewise
        ScoreMatrix::new([
            [vec![4.0, 3.0], vec![3.0, 4.0], vec![4.0, 2.0]],
            [vec![4.0, 3.0], vec![3.0, 3.0], vec![5.0, 2.0]],
            [vec![5.0, 3.0], vec![4.0, 3.0], vec![5.0, 2.0]],
        ])
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn worked_example() {
        let r = compute_consistency(&worked_matrix());
        assert!(close(&r.peer_means[0], &[3.5, 3.0], 1e-12));
        assert!(close(&r.peer_means[1], &[4.5, 2.5], 1e-12));
        assert!(close(&r.peer_means[2], &[4.5, 3.0], 1e-12));
        assert!(close(&r.agent_scores[0], &[0.133531, 0.0], 1e-6));
        assert!(close(&r.agent_scores[1], &[-0.405465, 0.182322], 1e-6));
        assert!(close(&r.agent_scores[2], &[0.105361, -0.405465], 1e-6));
        assert!(close(&r.plan_scores, &[-0.055524, -0.074381], 1e-6));
        assert_eq!(r.selected_index, 1);
        assert_eq!(r.planner_index, 1);
        assert!(!r.tie_broken);
    }

    #[test]
    fn uniform_scores_give_zero_consistency() {
        let v = vec![3.0; 4];
        let m = ScoreMatrix::new(std::array::from_fn(|_| std::array::from_fn(|_| v.clone())));
        let r = compute_consistency(&m);
        assert!(r.plan_scores.iter().all(|&s| s == 0.0));
        assert!(r.agent_scores.iter().flatten().all(|&s| s == 0.0));
        assert_eq!(r.selected_index, 1);
        assert!(r.tie_broken);
    }

    #[test]
    fn doubling_one_plan_leaves_its_score() {
        let mut m = worked_matrix();
        for row in m.scores.iter_mut() {
            for v in row.iter_mut() {
                v[0] *= 2.0;
            }
        }
        let base = compute_consistency(&worked_matrix());
        let scaled = compute_consistency(&m);
        assert!((base.plan_scores[0] - scaled.plan_scores[0]).abs() < 1e-12);
        assert_eq!(base.plan_scores[1], scaled.plan_scores[1]);
    }

    #[test]
    fn select_plan_cases() {
        assert_eq!(
            select_plan(&[-0.055524, -0.074381]),
            Selection {
                index: 1,
                tie_broken: false
            }
        );
        assert_eq!(
            select_plan(&[0.0, 0.0, 0.0]),
            Selection {
                index: 1,
                tie_broken: true
            }
        );
        assert_eq!(
            select_plan(&[0.7]),
            Selection {
                index: 1,
                tie_broken: false
            }
        );
        assert_eq!(
            select_plan(&[0.1, 0.3, 0.3]),
            Selection {
                index: 2,
                tie_broken: true
            }
        );
    }

    #[test]
    fn planner_index_follows_planner_self_scores() {
        let mut m = worked_matrix();
        m.scores[0][0] = vec![3.0, 4.0];
        // C = [-0.1514, -0.2095] once the diagnoser rates plan 2 poorly
        m.scores[2][2] = vec![5.0, 1.0];
        let r = compute_consistency(&m);
        assert_eq!(r.planner_index, 2);
        assert_eq!(r.selected_index, 1);
    }

    fn nine_blocks() -> String {
        (1..=9)
            .map(|i| format!("GOAL: goal {i}\nTOOL: google_search\nARGS: query {i}\n\n"))
            .collect()
    }

    #[test]
    fn parses_nine_blocks_in_order() {
        let plans = parse_candidates(&nine_blocks(), 9);
        assert_eq!(plans.len(), 9);
        for (i, p) in plans.iter().enumerate() {
            assert_eq!(p.candidate_index, i + 1);
            assert_eq!(p.goal, format!("goal {}", i + 1));
        }
    }

    #[test]
    fn duplicate_blocks_collapse() {
        // nine blocks, the last a byte-identical copy of block 4
        let mut text = String::new();
        for i in [1, 2, 3, 4, 5, 6, 7, 8] {
            text.push_str(&format!(
                "GOAL: goal {i}\nTOOL: google_search\nARGS: query {i}\n\n"
            ));
        }
        text.push_str("GOAL: goal 4\nTOOL: google_search\nARGS: query 4\n");
        let plans = parse_candidates(&text, 9);
        assert_eq!(plans.len(), 8);
        assert_eq!(
            plans.iter().map(|p| p.candidate_index).collect::<Vec<_>>(),
            (1..=8).collect::<Vec<_>>()
        );
        assert_eq!(plans[3].goal, "goal 4");
        assert_eq!(plans[7].goal, "goal 8");
    }

    #[test]
    fn tolerant_block_parsing() {
        let text = "Plan 1:\nGOAL: Find the director\n of Film X\nTOOL: Wikipedia Search\nARGS: Film X\n(film)\n\n\
                    2. GOAL: nothing\nPlan 3: GOAL: recall\nTOOL: `base_generator`\n";
        let plans = parse_candidates(text, 9);
        assert_eq!(plans.len(), 2);
        assert_eq!(plans[0].goal, "Find the director of Film X");
        assert_eq!(plans[0].action.tool_id, "wikipedia_search");
        assert_eq!(plans[0].action.argument_sketch, "Film X (film)");
        assert_eq!(plans[1].action.tool_id, "base_generator");
        assert_eq!(plans[1].candidate_index, 2);
    }

    #[test]
    fn parse_truncates_to_k_and_rejects_garbage() {
        assert_eq!(parse_candidates(&nine_blocks(), 1).len(), 1);
        assert!(parse_candidates("I think we should search.", 3).is_empty());
    }

    #[test]
    fn batch_sections_parse() {
        let text = "[Executor]\nPlan 1: 3\nPlan 2: 4\n[Planner]\nPlan 1: 5\nPlan 2: 1\n[As Diagnoser]\nPlan 1: 2\nPlan 2: 2\n";
        let parsed = parse_batch(text, Agent::Planner, 2).unwrap();
        assert_eq!(parsed[0].as_ref().unwrap().scores, vec![5, 1]);
        assert_eq!(parsed[1].as_ref().unwrap().scores, vec![3, 4]);
        assert_eq!(parsed[2].as_ref().unwrap().scores, vec![2, 2]);
        assert!(parse_batch("[Planner]\nPlan 1: 5\n", Agent::Planner, 1).is_err());
    }

    fn arb_matrix() -> impl Strategy<Value = ScoreMatrix> {
        (1usize..=9).prop_flat_map(|k| {
            proptest::collection::vec(proptest::collection::vec(1.0f64..=5.0, k), 9).prop_map(
                |rows| {
                    let mut it = rows.into_iter();
                    ScoreMatrix::new(std::array::from_fn(|_| {
                        std::array::from_fn(|_| it.next().unwrap())
                    }))
                },
            )
        })
    }

    proptest! {
        #[test]
        fn plan_wise_scale_invariance(m in arb_matrix(), c in 0.01f64..100.0, pick in 0usize..9) {
            let k = pick % m.plan_count();
            let mut scaled = m.clone();
            for row in scaled.scores.iter_mut() {
                for v in row.iter_mut() {
                    v[k] *= c;
                }
            }
            let a = compute_consistency(&m);
            let b = compute_consistency(&scaled);
            prop_assert!((a.plan_scores[k] - b.plan_scores[k]).abs() < 1e-9);
        }

        #[test]
        fn zero_identity(m in arb_matrix()) {
            // force e_i = mean of predictions for plan 1
            let mut m = m;
            for i in Agent::ALL {
                let mean = i.peers().map(|j| m.prediction(i, j)[0]).sum::<f64>() / 2.0;
                m.scores[i.index()][i.index()][0] = mean;
            }
            let r = compute_consistency(&m);
            prop_assert!(r.plan_scores[0].abs() <= 3e-15);
        }
    }
}
