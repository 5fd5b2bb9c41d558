//! Per-call token and latency accounting.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::backend::{CompletionRequest, CompletionResponse, Perspective, Purpose, RoleTag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub round: usize,
    pub role: RoleTag,
    pub purpose: Purpose,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perspective: Option<Perspective>,
    pub temperature: f64,
    /// Memory plus fixed instruction tokens, measured jointly.
    pub prompt_tokens: u64,
    pub output_tokens: u64,
    pub latency_ms: f64,
    pub ok: bool,
}

impl CallRecord {
    pub(crate) fn from_response(
        request: &CompletionRequest,
        response: &CompletionResponse,
    ) -> Self {
        Self {
            round: request.round,
            role: request.role_tag,
            purpose: request.purpose_tag,
            perspective: request.perspective_tag,
            temperature: request.temperature,
            prompt_tokens: response.prompt_tokens,
            output_tokens: response.output_tokens,
            latency_ms: response.latency.as_secs_f64() * 1e3,
            ok: true,
        }
    }

    pub(crate) fn failed(request: &CompletionRequest, latency: Duration) -> Self {
        Self {
            round: request.round,
            role: request.role_tag,
            purpose: request.purpose_tag,
            perspective: request.perspective_tag,
            temperature: request.temperature,
            prompt_tokens: 0,
            output_tokens: 0,
            latency_ms: latency.as_secs_f64() * 1e3,
            ok: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCallRecord {
    pub round: usize,
    pub tool_id: String,
    pub latency_ms: f64,
    pub transport_ok: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostTotals {
    pub completions: u64,
    pub prompt_tokens: u64,
    pub output_tokens: u64,
    pub llm_latency_ms: f64,
    pub tool_calls: u64,
    pub tool_latency_ms: f64,
}

impl CostTotals {
    pub fn add(&mut self, other: &CostTotals) {
        self.completions += other.completions;
        self.prompt_tokens += other.prompt_tokens;
        self.output_tokens += other.output_tokens;
        self.llm_latency_ms += other.llm_latency_ms;
        self.tool_calls += other.tool_calls;
        self.tool_latency_ms += other.tool_latency_ms;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleRoundCost {
    pub round: usize,
    pub role: RoleTag,
    pub completions: u64,
    pub prompt_tokens: u64,
    pub output_tokens: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    pub calls: Vec<CallRecord>,
    pub tools: Vec<ToolCallRecord>,
    pub totals: CostTotals,
}

impl CostLedger {
    pub fn from_records(calls: Vec<CallRecord>, tools: Vec<ToolCallRecord>) -> Self {
        let totals = Self::sum(&calls, &tools);
        Self {
            calls,
            tools,
            totals,
        }
    }

    fn sum(calls: &[CallRecord], tools: &[ToolCallRecord]) -> CostTotals {
        CostTotals {
            completions: calls.len() as u64,
            prompt_tokens: calls.iter().map(|c| c.prompt_tokens).sum(),
            output_tokens: calls.iter().map(|c| c.output_tokens).sum(),
            llm_latency_ms: calls.iter().map(|c| c.latency_ms).sum(),
            tool_calls: tools.len() as u64,
            tool_latency_ms: tools.iter().map(|t| t.latency_ms).sum(),
        }
    }

    /// True when the stored totals equal the sums of the per-call entries.
    pub fn is_consistent(&self) -> bool {
        let s = Self::sum(&self.calls, &self.tools);
        s.completions == self.totals.completions
            && s.prompt_tokens == self.totals.prompt_tokens
            && s.output_tokens == self.totals.output_tokens
            && s.tool_calls == self.totals.tool_calls
            && (s.llm_latency_ms - self.totals.llm_latency_ms).abs() < 1e-6
            && (s.tool_latency_ms - self.totals.tool_latency_ms).abs() < 1e-6
    }

    pub fn by_round_and_role(&self) -> Vec<RoleRoundCost> {
        let mut map: BTreeMap<(usize, RoleTag), RoleRoundCost> = BTreeMap::new();
        for c in &self.calls {
            let entry = map
                .entry((c.round, c.role))
                .or_insert_with(|| RoleRoundCost {
                    round: c.round,
                    role: c.role,
                    completions: 0,
                    prompt_tokens: 0,
                    output_tokens: 0,
                });
            entry.completions += 1;
            entry.prompt_tokens += c.prompt_tokens;
            entry.output_tokens += c.output_tokens;
        }
        map.into_values().collect()
    }

    pub fn calls_in_round(&self, round: usize) -> impl Iterator<Item = &CallRecord> {
        self.calls.iter().filter(move |c| c.round == round)
    }
}
