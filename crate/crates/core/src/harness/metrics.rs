use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::cost::CostTotals;
use super::judge::JudgeVerdict;
use crate::error::{Error, Result};

/// Rounds to the two decimals accuracies are reported with.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetAccuracy {
    pub dataset: String,
    pub correct: usize,
    pub total: usize,
    /// Percentage, two decimals.
    pub accuracy: f64,
    pub baseline_accuracy: Option<f64>,
    /// Accuracy minus baseline accuracy, both as reported.
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mode: String,
    pub baseline: Option<String>,
    pub datasets: Vec<DatasetAccuracy>,
    /// Mean of the per-dataset accuracies.
    pub average_accuracy: f64,
    pub average_delta: Option<f64>,
    pub run_count: usize,
    pub cost: CostTotals,
}

fn accuracies(verdicts: &[JudgeVerdict]) -> BTreeMap<&str, (usize, usize)> {
    let mut map: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for v in verdicts {
        let e = map.entry(v.dataset_tag.as_str()).or_default();
        e.0 += usize::from(v.correct);
        e.1 += 1;
    }
    map
}

fn percent(correct: usize, total: usize) -> f64 {
    round2(100.0 * correct as f64 / total as f64)
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| round2(sum / n as f64))
}

/// Per-dataset accuracy with optional deltas against a baseline run. Labels,
/// run count and cost are left for the caller to fill in.
pub fn aggregate_metrics(
    verdicts: &[JudgeVerdict],
    baseline: Option<&[JudgeVerdict]>,
) -> Result<MetricsReport> {
    if verdicts.is_empty() || baseline.is_some_and(<[JudgeVerdict]>::is_empty) {
        return Err(Error::EmptyRun);
    }
    let base = baseline.map(accuracies);
    let datasets: Vec<DatasetAccuracy> = accuracies(verdicts)
        .into_iter()
        .map(|(dataset, (correct, total))| {
            let accuracy = percent(correct, total);
            let baseline_accuracy = base
                .as_ref()
                .and_then(|b| b.get(dataset))
                .map(|&(c, t)| percent(c, t));
            DatasetAccuracy {
                dataset: dataset.to_string(),
                correct,
                total,
                accuracy,
                baseline_accuracy,
                delta: baseline_accuracy.map(|b| round2(accuracy - b)),
            }
        })
        .collect();
    let average_accuracy = mean(datasets.iter().map(|d| d.accuracy)).expect("non-empty");
    let average_delta = mean(datasets.iter().filter_map(|d| d.delta));
    Ok(MetricsReport {
        mode: String::new(),
        baseline: None,
        datasets,
        average_accuracy,
        average_delta,
        run_count: 1,
        cost: CostTotals::default(),
    })
}

fn signed(x: f64) -> String {
    format!("{}{:.2}", if x >= 0.0 { "+" } else { "" }, x)
}

impl MetricsReport {
    /// Accuracy table with a delta column when a baseline is present.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "mode: {}", self.mode);
        if let Some(b) = &self.baseline {
            let _ = write!(out, "   baseline: {b}");
        }
        let _ = writeln!(out, "   runs: {}", self.run_count);
        let with_base = self.datasets.iter().any(|d| d.baseline_accuracy.is_some());
        let width = self
            .datasets
            .iter()
            .map(|d| d.dataset.len())
            .max()
            .unwrap_or(0)
            .max(8);
        let _ = write!(out, "{:<width$}  {:>7}  {:>9}", "dataset", "n", "acc (%)");
        if with_base {
            let _ = write!(out, "  {:>9}  {:>8}", "base (%)", "delta");
        }
        out.push('\n');
        for d in &self.datasets {
            let _ = write!(
                out,
                "{:<width$}  {:>7}  {:>9.2}",
                d.dataset, d.total, d.accuracy
            );
            if with_base {
                let base = d
                    .baseline_accuracy
                    .map_or("-".into(), |b| format!("{b:.2}"));
                let delta = d.delta.map_or("-".into(), signed);
                let _ = write!(out, "  {base:>9}  {delta:>8}");
            }
            out.push('\n');
        }
        let _ = write!(
            out,
            "{:<width$}  {:>7}  {:>9.2}",
            "average", "", self.average_accuracy
        );
        if with_base {
            let delta = self.average_delta.map_or("-".into(), signed);
            let _ = write!(out, "  {:>9}  {delta:>8}", "");
        }
        out.push('\n');
        let c = &self.cost;
        let _ = writeln!(
            out,
            "completions: {}  prompt tokens: {}  output tokens: {}  tool calls: {}  llm time: {:.1} s  tool time: {:.1} s",
            c.completions,
            c.prompt_tokens,
            c.output_tokens,
            c.tool_calls,
            c.llm_latency_ms / 1e3,
            c.tool_latency_ms / 1e3
        );
        out
    }
}
