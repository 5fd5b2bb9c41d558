//! The round loop: plan, execute, diagnose, update memory, refine, stop.

pub mod repair;
pub mod steps;
pub mod trace;

use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use tracing::{debug, warn};

use crate::backend::{Backend, ParsedScores, Session, PLANNING_TEMPERATURE};
use crate::cesr::{detect_divergence, induce_constraint, refine, DivergenceEvent};
use crate::error::{Error, Result};
use crate::harness::dataset::TaskRecord;
use crate::ips::{
    agent_memories, evaluate_perspective, generate_candidates, run_ips, select_plan, CandidateSet,
    EvalBatching, IpsConfig, Plan,
};
use crate::memory::{
    update_system_memory, Agent, AgentMemory, Constraint, Diagnosis, HistoryRecord,
    InformationState, SystemMemory, Verdict,
};
use crate::tools::{ExecutionOutcome, ToolRegistry, ToolResult};

pub use repair::{parse_rollback_target, retry_step, rollback_to, select_rollback_target};
pub use steps::{
    check_stop, diagnose_outcome, execute_plan, generate_answer, parse_diagnosis, StopDecision,
};
pub use trace::{
    Attempt, RollbackRecord, RoundRecord, SelectionMethod, SelectionRecord, SelfEvaluation,
    StopReason, Trace, TRACE_SCHEMA_VERSION,
};

pub const DEFAULT_K: usize = 9;
pub const DEFAULT_MAX_ROUNDS: usize = 10;
pub const DEFAULT_CONTEXT_BUDGET: usize = 6000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
pub enum Mode {
    EpcAw,
    NoRepair,
    Retry,
    Rollback,
    Msa,
}

impl Mode {
    pub fn label(self) -> &'static str {
        match self {
            Mode::EpcAw => "epc-aw",
            Mode::NoRepair => "no-repair",
            Mode::Retry => "retry",
            Mode::Rollback => "rollback",
            Mode::Msa => "msa",
        }
    }

    /// Modes that plan one candidate per round.
    pub fn single_candidate(self) -> bool {
        matches!(self, Mode::NoRepair | Mode::Retry | Mode::Rollback)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: Mode,
    pub k: usize,
    pub max_rounds: usize,
    pub temperature_plan: f64,
    pub ips_enabled: bool,
    pub cesr_enabled: bool,
    pub eval_batching: EvalBatching,
    /// Token budget for every rendered agent context.
    pub context_budget: usize,
    pub seed: u64,
}

impl RunConfig {
    /// Defaults for a mode: IPS and CESR on for EPC-AW, off elsewhere.
    pub fn new(mode: Mode) -> Self {
        let full = mode == Mode::EpcAw;
        Self {
            mode,
            k: DEFAULT_K,
            max_rounds: DEFAULT_MAX_ROUNDS,
            temperature_plan: PLANNING_TEMPERATURE,
            ips_enabled: full,
            cesr_enabled: full,
            eval_batching: EvalBatching::default(),
            context_budget: DEFAULT_CONTEXT_BUDGET,
            seed: 0,
        }
    }

    /// EPC-AW with planner self-selection instead of IPS (and hence no CESR).
    pub fn without_ips(mut self) -> Self {
        self.ips_enabled = false;
        self.cesr_enabled = false;
        self
    }

    pub fn without_cesr(mut self) -> Self {
        self.cesr_enabled = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if self.max_rounds == 0 {
            return bad("max_rounds must be at least 1");
        }
        if self.context_budget == 0 {
            return bad("context_budget must be positive");
        }
        if !(0.0..=2.0).contains(&self.temperature_plan) {
            return bad("temperature_plan must lie in [0, 2]");
        }
        if self.mode != Mode::EpcAw && (self.ips_enabled || self.cesr_enabled) {
            return bad("IPS and CESR are only available in epc-aw mode");
        }
        if self.cesr_enabled && !self.ips_enabled {
            return bad("CESR needs IPS: divergence is defined against the IPS selection");
        }
        Ok(())
    }

    /// Number of candidates actually requested per round.
    pub fn effective_k(&self) -> usize {
        if self.mode.single_candidate() {
            1
        } else {
            self.k
        }
    }

    fn ips_config(&self) -> IpsConfig {
        IpsConfig {
            k: self.effective_k(),
            temperature_plan: self.temperature_plan,
            batching: self.eval_batching,
            context_budget: self.context_budget,
        }
    }
}

/// The loop state between rounds. `round` counts the records in `history`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundState {
    pub round: usize,
    pub system: SystemMemory,
    pub history: Vec<HistoryRecord>,
    pub planner_constraints: Vec<Constraint>,
    pub stop: bool,
    /// Diagnostic feedback carried into the next planning prompt (rollback mode).
    pub pending_feedback: Option<String>,
}

impl RoundState {
    pub fn new(query: impl Into<String>) -> Self {
        Self {
            round: 0,
            system: SystemMemory::new(query),
            history: Vec::new(),
            planner_constraints: Vec::new(),
            stop: false,
            pending_feedback: None,
        }
    }

    pub fn memories(&self) -> [AgentMemory; 3] {
        agent_memories(&self.history, &self.planner_constraints)
    }

    fn state_of(&self, agent: Agent) -> InformationState {
        InformationState::own(&self.system, self.memories()[agent.index()].clone())
    }

    /// Appends a finished round and folds its evidence into the system memory.
    pub fn commit(&self, record: HistoryRecord) -> RoundState {
        let system = update_system_memory(&self.system, &record);
        let mut history = self.history.clone();
        history.push(record);
        RoundState {
            round: history.len(),
            system,
            history,
            planner_constraints: self.planner_constraints.clone(),
            stop: false,
            pending_feedback: None,
        }
    }
}

/// Errors that fail one round without ending the run.
fn recoverable(e: &Error) -> bool {
    matches!(
        e,
        Error::CandidateParseFailure
            | Error::ScoreParseFailure { .. }
            | Error::ContextOverflow { .. }
            | Error::UnknownTool(_)
    )
}

/// Self-evaluation calls for the given agents, issued concurrently and recorded in the given order.
fn self_scores(
    session: &Session<'_>,
    state: &RoundState,
    candidates: &CandidateSet,
    agents: &[Agent],
    round: usize,
    context_budget: usize,
) -> Result<Vec<ParsedScores>> {
    let memories = state.memories();
    let results: Vec<(Session<'_>, Result<ParsedScores>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = agents
            .iter()
            .map(|&agent| {
                let fork = session.fork();
                let memory = memories[agent.index()].clone();
                let system = &state.system;
                scope.spawn(move || {
                    let info = InformationState::own(system, memory);
                    let r = evaluate_perspective(
                        &fork,
                        &info,
                        system,
                        candidates,
                        (agent, agent),
                        round,
                        context_budget,
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
    let mut out = Vec::with_capacity(agents.len());
    let mut first_err = None;
    for (fork, r) in results {
        session.absorb(fork);
        match r {
            Ok(p) => out.push(p),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    match first_err {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

fn generate(
    session: &Session<'_>,
    config: &RunConfig,
    tools: &ToolRegistry,
    state: &RoundState,
    round: usize,
    k: usize,
    feedback: Option<&str>,
) -> Result<CandidateSet> {
    generate_candidates(
        session,
        &state.system,
        &state.state_of(Agent::Planner),
        k,
        round,
        config.temperature_plan,
        config.context_budget,
        tools.specs(),
        feedback,
    )
}

/// Picks this round's plan according to the mode, filling the selection fields of `record`.
fn choose_plan(
    session: &Session<'_>,
    config: &RunConfig,
    tools: &ToolRegistry,
    state: &RoundState,
    round: usize,
    record: &mut RoundRecord,
) -> Result<Plan> {
    let feedback = state.pending_feedback.as_deref();
    if config.mode == Mode::EpcAw && config.ips_enabled {
        let ips = run_ips(
            session,
            &state.history,
            &state.planner_constraints,
            &state.system,
            &config.ips_config(),
            round,
            tools.specs(),
            feedback,
        )?;
        let plan = ips.candidates.get(ips.report.selected_index).clone();
        record.selection = Some(SelectionRecord {
            method: SelectionMethod::Ips,
            selected_index: ips.report.selected_index,
            planner_index: Some(ips.report.planner_index),
            tie_broken: ips.report.tie_broken,
            mean_scores: None,
        });
        record.candidates = Some(ips.candidates);
        record.score_matrix = Some(ips.matrix);
        record.consistency = Some(ips.report);
        return Ok(plan);
    }

    let candidates = generate(
        session,
        config,
        tools,
        state,
        round,
        config.effective_k(),
        feedback,
    )?;
    record.candidates = Some(candidates.clone());
    let selection = match config.mode {
        Mode::EpcAw => {
            let scores = self_scores(
                session,
                state,
                &candidates,
                &[Agent::Planner],
                round,
                config.context_budget,
            )?;
            let planner = scores[0].as_f64();
            let pick = select_plan(&planner);
            record.self_evaluations.push(SelfEvaluation {
                agent: Agent::Planner,
                scores: planner,
            });
            SelectionRecord {
                method: SelectionMethod::PlannerSelf,
                selected_index: pick.index,
                planner_index: Some(pick.index),
                tie_broken: pick.tie_broken,
                mean_scores: None,
            }
        }
        Mode::Msa => {
            let scores = self_scores(
                session,
                state,
                &candidates,
                &Agent::ALL,
                round,
                config.context_budget,
            )?;
            let rows: Vec<Vec<f64>> = scores.iter().map(ParsedScores::as_f64).collect();
            let means: Vec<f64> = (0..candidates.len())
                .map(|k| rows.iter().map(|r| r[k]).sum::<f64>() / rows.len() as f64)
                .collect();
            let pick = select_plan(&means);
            let planner_pick = select_plan(&rows[Agent::Planner.index()]);
            for (agent, scores) in Agent::ALL.into_iter().zip(rows) {
                record
                    .self_evaluations
                    .push(SelfEvaluation { agent, scores });
            }
            SelectionRecord {
                method: SelectionMethod::MeanSelfScore,
                selected_index: pick.index,
                planner_index: Some(planner_pick.index),
                tie_broken: pick.tie_broken,
                mean_scores: Some(means),
            }
        }
        _ => SelectionRecord {
            method: SelectionMethod::Single,
            selected_index: 1,
            planner_index: None,
            tie_broken: false,
            mean_scores: None,
        },
    };
    let plan = candidates.get(selection.selected_index).clone();
    record.selection = Some(selection);
    Ok(plan)
}

/// Executes and diagnoses a plan against the round's pre-update state.
pub(crate) fn act(
    session: &Session<'_>,
    config: &RunConfig,
    tools: &ToolRegistry,
    state: &RoundState,
    plan: &Plan,
    round: usize,
) -> Result<(ExecutionOutcome, Diagnosis)> {
    let outcome = execute_plan(
        session,
        tools,
        plan,
        &state.state_of(Agent::Executor),
        &state.system,
        round,
        config.context_budget,
    )?;
    if tools.spec(&plan.action.tool_id).is_none() {
        let d = Diagnosis::unsupported(format!(
            "plan names unregistered tool `{}`",
            plan.action.tool_id
        ));
        return Ok((outcome, d));
    }
    let diagnosis = diagnose_outcome(
        session,
        plan,
        &outcome,
        &state.state_of(Agent::Diagnoser),
        &state.system,
        round,
        config.context_budget,
    )?;
    Ok((outcome, diagnosis))
}

fn attempt_round(
    session: &Session<'_>,
    config: &RunConfig,
    tools: &ToolRegistry,
    state: &RoundState,
    round: usize,
    record: &mut RoundRecord,
) -> Result<RoundState> {
    let plan = choose_plan(session, config, tools, state, round, record)?;
    let (outcome, diagnosis) = act(session, config, tools, state, &plan, round)?;
    let unsupported = diagnosis.verdict == Verdict::Unsupported;

    let next = if config.mode == Mode::Retry && unsupported {
        let first = Attempt {
            plan,
            outcome,
            diagnosis,
        };
        let (next, second) = retry_step(state, config, session, tools, &first.diagnosis)?;
        record.retried = Some(first);
        record.executed_plan = Some(second.plan);
        record.outcome = Some(second.outcome);
        record.diagnosis = Some(second.diagnosis);
        next
    } else {
        let next = state.commit(HistoryRecord {
            round,
            plan: plan.clone(),
            outcome: outcome.clone(),
            diagnosis: diagnosis.clone(),
        });
        record.executed_plan = Some(plan);
        record.outcome = Some(outcome);
        record.diagnosis = Some(diagnosis);
        next
    };
    let mut next = next;

    if config.cesr_enabled {
        let selection = record.selection.as_ref().expect("selection recorded");
        let planner_index = selection
            .planner_index
            .expect("IPS records the planner preference");
        if detect_divergence(planner_index, selection.selected_index) {
            let candidates = record.candidates.as_ref().expect("candidates recorded");
            let planner_plan = candidates.get(planner_index).clone();
            let ips_plan = candidates.get(selection.selected_index).clone();
            let constraint =
                induce_constraint(session, &planner_plan, &ips_plan, &next.system, round)?;
            let planner_memory = AgentMemory {
                constraints: next.planner_constraints.clone(),
                ..crate::memory::project_agent_memory(&next.history, Agent::Planner)
            };
            let event = DivergenceEvent {
                round,
                planner_plan,
                ips_plan,
                constraint: constraint.clone(),
            };
            next.planner_constraints = refine(&planner_memory, &event)?.constraints;
            debug!(
                round,
                planner_index,
                selected = selection.selected_index,
                "divergence; constraint added"
            );
            record.constraint = Some(constraint);
        }
    }

    if config.mode == Mode::Rollback && unsupported {
        let feedback = record
            .diagnosis
            .as_ref()
            .map(|d| d.rationale.clone())
            .unwrap_or_default();
        let target = select_rollback_target(session, config, &next, round, &feedback)?;
        next = rollback_to(&next, target)?;
        next.pending_feedback = Some(feedback.clone());
        record.rollback = Some(RollbackRecord {
            from_round: round,
            to_round: target,
            feedback,
        });
    }
    Ok(next)
}

/// Runs one loop iteration. Parse failures and similar per-round problems are
/// recorded as an Unsupported round instead of aborting the run.
pub fn run_round(
    state: &RoundState,
    config: &RunConfig,
    session: &Session<'_>,
    tools: &ToolRegistry,
) -> Result<(RoundState, RoundRecord)> {
    let round = state.round + 1;
    let mut record = RoundRecord::new(round);
    let mut next = match attempt_round(session, config, tools, state, round, &mut record) {
        Ok(next) => next,
        Err(e) if recoverable(&e) => {
            warn!(round, error = %e, "round failed; recording Unsupported");
            let plan = record
                .executed_plan
                .clone()
                .unwrap_or_else(|| Plan::new(1, "(no usable plan)", "none", ""));
            let outcome = ExecutionOutcome {
                tool_id: plan.action.tool_id.clone(),
                arguments: String::new(),
                result: ToolResult::failure(plan.action.tool_id.clone(), e.to_string()),
            };
            let diagnosis = Diagnosis::unsupported(format!("round failed: {e}"));
            let next = state.commit(HistoryRecord {
                round,
                plan: plan.clone(),
                outcome: outcome.clone(),
                diagnosis: diagnosis.clone(),
            });
            record.executed_plan = Some(plan);
            record.outcome = Some(outcome);
            record.diagnosis = Some(diagnosis);
            record.error = Some(e.to_string());
            next
        }
        Err(e) => return Err(e),
    };
    let decision = check_stop(session, &next.system.query, &next.system.evidence, round)?;
    next.stop = decision.stop;
    record.stop = Some(decision);
    record.evidence_count = next.system.evidence.len();
    Ok((next, record))
}

fn unix_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Runs one task to completion. Scripted-backend misses propagate as errors;
/// an exhausted live backend ends the run with `error` set and no answer.
pub fn run_task(
    config: &RunConfig,
    task: &TaskRecord,
    backend: &dyn Backend,
    tools: &ToolRegistry,
) -> Result<Trace> {
    config.validate()?;
    let started_at_unix_ms = unix_ms();
    let session = Session::new(backend);
    let mut state = RoundState::new(&task.question);
    let mut rounds: Vec<RoundRecord> = Vec::new();
    let mut stop_reason = StopReason::MaxRounds;

    let result = (|| -> Result<String> {
        for iteration in 1..=config.max_rounds {
            let (mut next, mut record) = run_round(&state, config, &session, tools)?;
            record.iteration = iteration;
            rounds.push(record);
            if next.stop {
                stop_reason = StopReason::Sufficient;
                state = next;
                break;
            }
            if iteration == config.max_rounds {
                next.stop = true;
            }
            state = next;
        }
        let answer_round = rounds.last().map_or(0, |r| r.round);
        generate_answer(
            &session,
            &state.system.query,
            &state.system.evidence,
            &state.history,
            answer_round,
        )
    })();

    let (final_answer, error) = match result {
        Ok(answer) => (Some(answer), None),
        Err(e @ Error::BackendUnavailable { .. }) => {
            warn!(task = %task.id, error = %e, "backend unavailable; trace has no answer");
            (None, Some(e.to_string()))
        }
        Err(e) => return Err(e),
    };
    Ok(Trace {
        schema_version: TRACE_SCHEMA_VERSION,
        task_id: task.id.clone(),
        dataset: task.dataset_tag.clone(),
        question: task.question.clone(),
        gold_answer: task.gold_answer.clone(),
        config: config.clone(),
        rounds,
        final_answer,
        stop_reason,
        final_evidence: state.system.evidence,
        planner_constraints: state.planner_constraints,
        cost: session.into_ledger(),
        error,
        started_at_unix_ms,
    })
}
