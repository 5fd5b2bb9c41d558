//! Retry and Rollback repair steps.

use crate::backend::{CompletionRequest, Purpose, Session};
use crate::error::{Error, Result};
use crate::memory::{render_context, Agent, HistoryRecord};
use crate::prompts;
use crate::tools::ToolRegistry;

use super::trace::Attempt;
use super::{act, generate, RoundState, RunConfig};

/// Regenerates the current round's plan once with the diagnostic rationale in
/// the planner prompt. Only the replacement attempt enters the history.
pub fn retry_step(
    state: &RoundState,
    config: &RunConfig,
    session: &Session<'_>,
    tools: &ToolRegistry,
    feedback: &crate::memory::Diagnosis,
) -> Result<(RoundState, Attempt)> {
    let round = state.round + 1;
    let note = format!(
        "The previous attempt at this step failed: {}",
        feedback.rationale
    );
    let candidates = generate(session, config, tools, state, round, 1, Some(&note))?;
    let plan = candidates.get(1).clone();
    let (outcome, diagnosis) = act(session, config, tools, state, &plan, round)?;
    let next = state.commit(HistoryRecord {
        round,
        plan: plan.clone(),
        outcome: outcome.clone(),
        diagnosis: diagnosis.clone(),
    });
    Ok((
        next,
        Attempt {
            plan,
            outcome,
            diagnosis,
        },
    ))
}

/// Reads a round index from the diagnoser reply and clamps it to
/// `[0, current - 1]` so the failing step is always discarded. Unreadable
/// replies fall back to the previous round.
pub fn parse_rollback_target(text: &str, current: usize) -> usize {
    let default = current.saturating_sub(1);
    let upper = text.to_ascii_uppercase();
    let tail = upper
        .find("ROUND")
        .map_or(upper.as_str(), |i| &upper[i + "ROUND".len()..]);
    let digits: String = tail
        .chars()
        .skip_while(|c| !c.is_ascii_digit())
        .take_while(char::is_ascii_digit)
        .collect();
    match digits.parse::<usize>() {
        Ok(r) => r.min(default),
        Err(_) => default,
    }
}

/// One diagnoser call naming the round to return to, shown the full executor-view history.
pub fn select_rollback_target(
    session: &Session<'_>,
    config: &RunConfig,
    state: &RoundState,
    current: usize,
    feedback: &str,
) -> Result<usize> {
    let context = render_context(
        &state.state_of(Agent::Executor),
        &state.system,
        config.context_budget,
    )?;
    let request = CompletionRequest::new(
        Agent::Diagnoser,
        Purpose::RollbackTarget,
        current,
        prompts::rollback_target(&context, current, feedback),
    );
    Ok(parse_rollback_target(
        &session.complete(&request)?.text,
        current,
    ))
}

/// Reverts to the state after `target_round` records: evidence is rebuilt from
/// the retained history and later constraints are dropped.
pub fn rollback_to(state: &RoundState, target_round: usize) -> Result<RoundState> {
    if target_round > state.round {
        return Err(Error::InvalidRollbackTarget {
            target: target_round,
            current: state.round,
        });
    }
    let history: Vec<HistoryRecord> = state.history[..target_round].to_vec();
    Ok(RoundState {
        round: target_round,
        system: state.system.rebuilt_from(&history),
        history,
        planner_constraints: state
            .planner_constraints
            .iter()
            .filter(|c| c.round <= target_round)
            .cloned()
            .collect(),
        stop: false,
        pending_feedback: state.pending_feedback.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ips::Plan;
    use crate::memory::{Constraint, ConstraintOrigin, Diagnosis};
    use crate::tools::{ExecutionOutcome, ToolResult};

    fn five_rounds() -> RoundState {
        let mut s = RoundState::new("Who directed Film X?");
        for r in 1..=5 {
            let diagnosis = if r == 2 || r == 4 {
                Diagnosis::supported("ok", Some(format!("fact from round {r}")))
            } else {
                Diagnosis::unsupported("no")
            };
            s = s.commit(HistoryRecord {
                round: r,
                plan: Plan::new(1, format!("goal {r}"), "google_search", "q"),
                outcome: ExecutionOutcome {
                    tool_id: "google_search".into(),
                    arguments: "q".into(),
                    result: ToolResult::ok("google_search", "r"),
                },
                diagnosis,
            });
            s.planner_constraints.push(Constraint {
                text: format!("constraint {r}"),
                round: r,
                planner_choice_index: 1,
                ips_choice_index: 2,
                origin: ConstraintOrigin::Generated,
            });
        }
        s
    }

    #[test]
    fn rollback_rebuilds_evidence() {
        let s = rollback_to(&five_rounds(), 2).unwrap();
        assert_eq!(s.round, 2);
        assert_eq!(s.history.len(), 2);
        let texts: Vec<_> = s.system.evidence.iter().map(|e| e.text.as_str()).collect();
        assert_eq!(texts, ["fact from round 2"]);
        assert_eq!(s.planner_constraints.len(), 2);
        assert_eq!(rollback_to(&s, 2).unwrap(), s);
    }

    #[test]
    fn rollback_to_zero_keeps_query() {
        let s = rollback_to(&five_rounds(), 0).unwrap();
        assert!(
            s.history.is_empty()
                && s.system.evidence.is_empty()
                && s.planner_constraints.is_empty()
        );
        assert_eq!(s.system.query, "Who directed Film X?");
    }

    #[test]
    fn target_beyond_current_is_an_error() {
        assert!(matches!(
            rollback_to(&five_rounds(), 9),
            Err(Error::InvalidRollbackTarget {
                target: 9,
                current: 5
            })
        ));
    }

    #[test]
    fn target_parsing_clamps() {
        assert_eq!(parse_rollback_target("ROUND: 2", 5), 2);
        assert_eq!(parse_rollback_target("round 9", 5), 4);
        assert_eq!(parse_rollback_target("go back to step 1", 5), 1);
        assert_eq!(parse_rollback_target("no idea", 5), 4);
        assert_eq!(parse_rollback_target("ROUND: 0", 1), 0);
        assert_eq!(parse_rollback_target("whatever", 1), 0);
    }
}
