use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_SCORE: i64 = 1;
pub const MAX_SCORE: i64 = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedScores {
    pub scores: Vec<u8>,
    /// 1-based plan indices whose reported score fell outside 1..=5 and was clamped.
    pub clamped: Vec<usize>,
}

impl ParsedScores {
    pub fn as_f64(&self) -> Vec<f64> {
        self.scores.iter().map(|&s| f64::from(s)).collect()
    }
}

/// Parses `Plan <k>: <score>` lines for plans `1..=expected`.
///
/// The first line for a plan wins. Scores outside the rubric range are clamped
/// and reported; a missing or non-integer score is a parse failure, and the
/// caller decides whether to re-prompt.
pub fn parse_score(text: &str, expected: usize) -> Result<ParsedScores> {
    let mut found: Vec<Option<i64>> = vec![None; expected];
    for line in text.lines() {
        let Some((index, value)) = split_plan_line(line) else {
            continue;
        };
        if index == 0 || index > expected || found[index - 1].is_some() {
            continue;
        }
        let value = leading_integer(value).ok_or_else(|| Error::ScoreParseFailure {
            expected,
            reason: format!("plan {index}: `{}` is not an integer score", value.trim()),
        })?;
        found[index - 1] = Some(value);
    }

    let mut scores = Vec::with_capacity(expected);
    let mut clamped = Vec::new();
    for (i, v) in found.into_iter().enumerate() {
        let v = v.ok_or_else(|| Error::ScoreParseFailure {
            expected,
            reason: format!("no score for plan {}", i + 1),
        })?;
        if !(MIN_SCORE..=MAX_SCORE).contains(&v) {
            clamped.push(i + 1);
        }
        scores.push(v.clamp(MIN_SCORE, MAX_SCORE) as u8);
    }
    Ok(ParsedScores { scores, clamped })
}

fn split_plan_line(line: &str) -> Option<(usize, &str)> {
    let line = line.trim().trim_start_matches(['-', '*', ' ']);
    let rest = strip_prefix_ignore_case(line, "plan")?.trim_start();
    let rest = rest.strip_prefix('#').unwrap_or(rest);
    let digits = rest.chars().take_while(char::is_ascii_digit).count();
    if digits == 0 {
        return None;
    }
    let index = rest[..digits].parse().ok()?;
    let rest = rest[digits..].trim_start();
    let rest = rest.strip_prefix([':', '=', '-']).unwrap_or(rest);
    Some((index, rest))
}

fn strip_prefix_ignore_case<'a>(s: &'a str, prefix: &str) -> Option<&'a str> {
    let head = s.get(..prefix.len())?;
    head.eq_ignore_ascii_case(prefix)
        .then(|| &s[prefix.len()..])
}

fn leading_integer(value: &str) -> Option<i64> {
    let token = value.split_whitespace().next()?;
    let token = token.trim_end_matches(['.', ',', ';']);
    let token = token.split('/').next()?;
    token.parse().ok()
}
