use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::backend::{Backend, CompletionRequest, Purpose, RoleTag};
use crate::prompts;

use super::dataset::TaskRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JudgeKind {
    LlmJudge,
    NormalizedExact,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub task_id: String,
    pub dataset_tag: String,
    pub predicted: String,
    pub correct: bool,
    pub judge_kind: JudgeKind,
    /// The LLM judge reply was unusable and exact matching decided instead.
    #[serde(default)]
    pub fallback: bool,
}

/// Case-folded, punctuation removed, whitespace collapsed.
pub fn normalize_answer(text: &str) -> String {
    let kept: String = text
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .flat_map(char::to_lowercase)
        .collect();
    kept.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn exact_match(predicted: &str, gold: &str) -> bool {
    normalize_answer(predicted) == normalize_answer(gold)
}

fn parse_judgement(text: &str) -> Option<bool> {
    let word: String = text
        .trim_start_matches(|c: char| !c.is_alphabetic())
        .chars()
        .take_while(|c| c.is_alphabetic())
        .collect::<String>()
        .to_ascii_uppercase();
    match word.as_str() {
        "CORRECT" => Some(true),
        "INCORRECT" => Some(false),
        _ => None,
    }
}

/// Judges one prediction. The LLM judge needs a backend; without one, or on
/// an unusable reply or call failure, exact matching decides and `fallback` is set.
pub fn judge_answer(
    backend: Option<&dyn Backend>,
    task: &TaskRecord,
    predicted: &str,
    kind: JudgeKind,
) -> JudgeVerdict {
    let exact = exact_match(predicted, &task.gold_answer);
    let mut verdict = JudgeVerdict {
        task_id: task.id.clone(),
        dataset_tag: task.dataset_tag.clone(),
        predicted: predicted.to_string(),
        correct: exact,
        judge_kind: kind,
        fallback: false,
    };
    if kind == JudgeKind::NormalizedExact {
        return verdict;
    }
    let reply = backend
        .ok_or_else(|| "no judge backend".to_string())
        .and_then(|b| {
            let request = CompletionRequest::new(
                RoleTag::Judge,
                Purpose::Judging,
                0,
                prompts::judge(&task.question, predicted, &task.gold_answer),
            );
            b.complete(&request)
                .map(|r| r.text)
                .map_err(|e| e.to_string())
        });
    match reply.as_deref().map(parse_judgement) {
        Ok(Some(correct)) => verdict.correct = correct,
        Ok(None) => {
            warn!(task = %task.id, "judge reply unusable; using exact match");
            verdict.fallback = true;
        }
        Err(e) => {
            warn!(task = %task.id, error = %e, "judge call failed; using exact match");
            verdict.fallback = true;
        }
    }
    verdict
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{Script, ScriptedBackend};
    use proptest::prelude::*;

    fn task(gold: &str) -> TaskRecord {
        TaskRecord::new("t1", "Capital of France?", gold, "toy")
    }

    #[test]
    fn exact_examples() {
        assert!(judge_answer(None, &task("paris"), "Paris.", JudgeKind::NormalizedExact).correct);
        assert!(!judge_answer(None, &task("1921"), "1912", JudgeKind::NormalizedExact).correct);
        assert!(exact_match("  The   Beatles! ", "the beatles"));
    }

    fn scripted_judge(reply: &str) -> JudgeVerdict {
        let mut s = Script::new();
        s.on(RoleTag::Judge, Purpose::Judging, None, 0, &[reply]);
        let backend = ScriptedBackend::new(s);
        judge_answer(
            Some(&backend),
            &task("Paris"),
            "It is Lutetia",
            JudgeKind::LlmJudge,
        )
    }

    #[test]
    fn llm_judge_verdicts() {
        let v = scripted_judge("CORRECT");
        assert!(v.correct && !v.fallback);
        assert_eq!(v.judge_kind, JudgeKind::LlmJudge);
        assert!(!scripted_judge("INCORRECT - different city").correct);
        let v = scripted_judge("hmm");
        assert!(v.fallback && !v.correct);
        assert_eq!(v.judge_kind, JudgeKind::LlmJudge);
    }

    proptest! {
        #[test]
        fn exact_is_symmetric(a in "[ -~]{0,20}", b in "[ -~]{0,20}") {
            prop_assert_eq!(exact_match(&a, &b), exact_match(&b, &a));
        }
    }
}
