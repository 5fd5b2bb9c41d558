//! The five-tool registry: base generator, Python coder, Google search,
//! Wikipedia search and web search (fetch + summarize).
//!
//! Tool failures never surface as errors; they come back as a [`ToolResult`]
//! with `transport_ok = false` and a description of what went wrong. The only
//! error is asking for a tool that is not registered.

mod code;
mod search;

use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::backend::{CompletionRequest, Purpose, Session};
use crate::error::{Error, Result};
use crate::memory::Agent;
use crate::prompts;

pub use code::{run_code, CodeConfig};
pub use search::{
    FixtureSearch, HttpSearch, SearchEngine, SearchFixtures, SearchHit, SearchProvider,
    FIXTURE_VERSION,
};

pub const BASE_GENERATOR: &str = "base_generator";
pub const PYTHON_CODER: &str = "python_coder";
pub const GOOGLE_SEARCH: &str = "google_search";
pub const WIKIPEDIA_SEARCH: &str = "wikipedia_search";
pub const WEB_SEARCH: &str = "web_search";

pub const DEFAULT_RESULT_COUNT: usize = 10;
/// Pages fetched and summarized by a single web_search call.
pub const WEB_SEARCH_PAGES: usize = 3;

pub fn default_excluded_domains() -> Vec<String> {
    vec!["huggingface.co".to_string()]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProviderKind {
    Live,
    Fixture,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub tool_id: String,
    pub description: String,
    pub provider: ProviderKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolResult {
    pub tool_id: String,
    pub raw_output: String,
    pub transport_ok: bool,
    pub latency_ms: f64,
}

impl ToolResult {
    pub fn ok(tool_id: impl Into<String>, output: impl Into<String>) -> Self {
        Self {
            tool_id: tool_id.into(),
            raw_output: output.into(),
            transport_ok: true,
            latency_ms: 0.0,
        }
    }

    pub fn failure(tool_id: impl Into<String>, message: impl Into<String>) -> Self {
        let mut message = message.into();
        if message.trim().is_empty() {
            message = "tool failed without an error message".into();
        }
        Self {
            tool_id: tool_id.into(),
            raw_output: message,
            transport_ok: false,
            latency_ms: 0.0,
        }
    }
}

/// What the executor produced for a plan: the concrete tool input and the tool's result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub tool_id: String,
    pub arguments: String,
    pub result: ToolResult,
}

/// Drops results whose URL contains any excluded domain (case-insensitive), keeping order.
pub fn filter_results(results: Vec<SearchHit>, excluded_domains: &[String]) -> Vec<SearchHit> {
    let excluded: Vec<String> = excluded_domains.iter().map(|d| d.to_lowercase()).collect();
    results
        .into_iter()
        .filter(|hit| {
            let url = hit.url.to_lowercase();
            !excluded
                .iter()
                .any(|d| !d.is_empty() && url.contains(d.as_str()))
        })
        .collect()
}

fn format_hits(hits: &[SearchHit]) -> String {
    if hits.is_empty() {
        return "No results found.".into();
    }
    hits.iter()
        .enumerate()
        .map(|(i, h)| format!("{}. {} ({})\n   {}", i + 1, h.title, h.url, h.snippet))
        .collect::<Vec<_>>()
        .join("\n")
}

pub struct ToolRegistry {
    specs: Vec<ToolSpec>,
    search: Arc<dyn SearchProvider>,
    excluded_domains: Vec<String>,
    result_count: usize,
    code: CodeConfig,
}

impl ToolRegistry {
    pub fn new(search: Arc<dyn SearchProvider>, provider: ProviderKind) -> Self {
        let spec = |id: &str, description: &str| ToolSpec {
            tool_id: id.to_string(),
            description: description.to_string(),
            provider,
        };
        Self {
            specs: vec![
                spec(
                    BASE_GENERATOR,
                    "answers directly from the model's own knowledge and reasoning",
                ),
                spec(
                    PYTHON_CODER,
                    "writes and executes Python code, returning its printed output",
                ),
                spec(
                    GOOGLE_SEARCH,
                    "web search returning the top ranked pages with snippets",
                ),
                spec(
                    WIKIPEDIA_SEARCH,
                    "searches Wikipedia for structured encyclopedic knowledge",
                ),
                spec(
                    WEB_SEARCH,
                    "retrieves relevant web pages and summarizes their content",
                ),
            ],
            search,
            excluded_domains: default_excluded_domains(),
            result_count: DEFAULT_RESULT_COUNT,
            code: CodeConfig::default(),
        }
    }

    pub fn fixture(fixtures: SearchFixtures) -> Self {
        Self::new(
            Arc::new(FixtureSearch::new(fixtures)),
            ProviderKind::Fixture,
        )
    }

    pub fn with_excluded_domains(mut self, domains: Vec<String>) -> Self {
        self.excluded_domains = domains;
        self
    }

    pub fn with_result_count(mut self, n: usize) -> Self {
        self.result_count = n;
        self
    }

    pub fn with_code(mut self, code: CodeConfig) -> Self {
        self.code = code;
        self
    }

    pub fn specs(&self) -> &[ToolSpec] {
        &self.specs
    }

    pub fn spec(&self, tool_id: &str) -> Option<&ToolSpec> {
        self.specs.iter().find(|s| s.tool_id == tool_id)
    }

    fn search_tool(&self, tool_id: &str, engine: SearchEngine, query: &str) -> ToolResult {
        if query.trim().is_empty() {
            return ToolResult::failure(tool_id, "empty search query");
        }
        match self.search.search(engine, query, self.result_count) {
            Ok(hits) => {
                let mut hits = filter_results(hits, &self.excluded_domains);
                hits.truncate(self.result_count);
                ToolResult::ok(tool_id, format_hits(&hits))
            }
            Err(e) => ToolResult::failure(tool_id, format!("search failed: {e}")),
        }
    }

    fn web_search(&self, session: &Session<'_>, round: usize, query: &str) -> Result<ToolResult> {
        let query = query.trim();
        if query.is_empty() {
            return Ok(ToolResult::failure(WEB_SEARCH, "empty search query"));
        }
        let urls: Vec<String> = if query.starts_with("http://") || query.starts_with("https://") {
            let direct = vec![SearchHit {
                url: query.to_string(),
                title: String::new(),
                snippet: String::new(),
            }];
            filter_results(direct, &self.excluded_domains)
                .into_iter()
                .map(|h| h.url)
                .collect()
        } else {
            match self
                .search
                .search(SearchEngine::Google, query, self.result_count)
            {
                Ok(hits) => filter_results(hits, &self.excluded_domains)
                    .into_iter()
                    .take(WEB_SEARCH_PAGES)
                    .map(|h| h.url)
                    .collect(),
                Err(e) => {
                    return Ok(ToolResult::failure(
                        WEB_SEARCH,
                        format!("search failed: {e}"),
                    ))
                }
            }
        };
        if urls.is_empty() {
            return Ok(ToolResult::failure(
                WEB_SEARCH,
                "page returned no usable content: no retrievable pages",
            ));
        }
        let mut pages = Vec::new();
        let mut errors = Vec::new();
        for url in urls {
            match self.search.fetch_page(&url) {
                Ok(text) if !text.trim().is_empty() => pages.push((url, text)),
                Ok(_) => errors.push(format!("{url}: empty page")),
                Err(e) => errors.push(format!("{url}: {e}")),
            }
        }
        if pages.is_empty() {
            return Ok(ToolResult::failure(
                WEB_SEARCH,
                format!("page returned no usable content: {}", errors.join("; ")),
            ));
        }
        let request = CompletionRequest::new(
            Agent::Executor,
            Purpose::Summarization,
            round,
            prompts::summarization(query, &pages),
        );
        match session.complete(&request) {
            Ok(resp) => Ok(ToolResult::ok(WEB_SEARCH, resp.text)),
            Err(e @ (Error::ScriptMiss(_) | Error::ScriptExhausted(_))) => Err(e),
            Err(e) => Ok(ToolResult::failure(
                WEB_SEARCH,
                format!("summarization failed: {e}"),
            )),
        }
    }

    /// Dispatches one tool call and records its latency in the session.
    ///
    /// Only an unregistered tool id is an error. Script misses inside the
    /// web_search summarization also propagate, since they are test failures.
    pub fn invoke_tool(
        &self,
        session: &Session<'_>,
        round: usize,
        tool_id: &str,
        arguments: &str,
    ) -> Result<ToolResult> {
        if self.spec(tool_id).is_none() {
            return Err(Error::UnknownTool(tool_id.to_string()));
        }
        let started = Instant::now();
        let mut result = match tool_id {
            BASE_GENERATOR => ToolResult::ok(BASE_GENERATOR, arguments),
            PYTHON_CODER => run_code(
                &strip_code_fence(arguments),
                self.code.timeout,
                self.code.enabled,
                &self.code.python,
            ),
            GOOGLE_SEARCH => self.search_tool(GOOGLE_SEARCH, SearchEngine::Google, arguments),
            WIKIPEDIA_SEARCH => {
                self.search_tool(WIKIPEDIA_SEARCH, SearchEngine::Wikipedia, arguments)
            }
            WEB_SEARCH => self.web_search(session, round, arguments)?,
            other => unreachable!("registered tool {other} has no adapter"),
        };
        let latency: Duration = started.elapsed();
        result.latency_ms = latency.as_secs_f64() * 1e3;
        session.record_tool(round, tool_id, latency, result.transport_ok);
        Ok(result)
    }
}

fn strip_code_fence(source: &str) -> String {
    let trimmed = source.trim();
    let Some(rest) = trimmed.strip_prefix("```") else {
        return trimmed.to_string();
    };
    let rest = rest.split_once('\n').map(|(_, body)| body).unwrap_or("");
    rest.trim_end()
        .trim_end_matches("```")
        .trim_end()
        .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{Script, ScriptedBackend};

    fn hit(url: &str) -> SearchHit {
        SearchHit {
            url: url.into(),
            title: format!("title {url}"),
            snippet: format!("snippet {url}"),
        }
    }

    fn fixtures() -> SearchFixtures {
        let mut f = SearchFixtures::default();
        let mut results: Vec<SearchHit> = (0..9)
            .map(|i| hit(&format!("https://site{i}.example/paris")))
            .collect();
        results.insert(3, hit("https://huggingface.co/datasets/bamboogle"));
        f.google.insert("capital of france".into(), results);
        f.google.insert(
            "film x director".into(),
            vec![
                hit("https://HuggingFace.co/x"),
                hit("https://films.example/x"),
            ],
        );
        f.pages.insert(
            "https://films.example/x".into(),
            "Film X (1999) was directed by Jane Doe.".into(),
        );
        f
    }

    fn with_session<T>(script: Script, f: impl FnOnce(&Session<'_>) -> T) -> T {
        let backend = ScriptedBackend::new(script);
        let session = Session::new(&backend);
        f(&session)
    }

    #[test]
    fn registry_has_five_tools() {
        let reg = ToolRegistry::fixture(SearchFixtures::default());
        let ids: Vec<&str> = reg.specs().iter().map(|s| s.tool_id.as_str()).collect();
        assert_eq!(
            ids,
            vec![
                BASE_GENERATOR,
                PYTHON_CODER,
                GOOGLE_SEARCH,
                WIKIPEDIA_SEARCH,
                WEB_SEARCH
            ]
        );
    }

    #[test]
    fn google_fixture_lookup_filters_huggingface() {
        let reg = ToolRegistry::fixture(fixtures());
        with_session(Script::new(), |s| {
            let r = reg
                .invoke_tool(s, 1, GOOGLE_SEARCH, "Capital of  France")
                .unwrap();
            assert!(r.transport_ok);
            assert!(r.raw_output.contains("https://site0.example/paris"));
            assert!(r.raw_output.contains("9. "));
            assert!(!r.raw_output.to_lowercase().contains("huggingface.co"));
        });
    }

    #[test]
    fn unknown_tool_is_an_error() {
        let reg = ToolRegistry::fixture(fixtures());
        with_session(Script::new(), |s| {
            assert!(matches!(
                reg.invoke_tool(s, 1, "sparql_query", "x"),
                Err(Error::UnknownTool(t)) if t == "sparql_query"
            ));
        });
    }

    #[test]
    fn filter_cases() {
        let results: Vec<SearchHit> = (0..8)
            .map(|i| hit(&format!("https://a{i}.example")))
            .chain([
                hit("https://huggingface.co/a"),
                hit("https://www.HUGGINGFACE.co/b"),
            ])
            .collect();
        let filtered = filter_results(results.clone(), &default_excluded_domains());
        assert_eq!(filtered.len(), 8);
        assert_eq!(filtered, results[..8].to_vec());
        assert_eq!(filter_results(results.clone(), &[]), results);
        let all_bad = vec![
            hit("https://huggingface.co/1"),
            hit("https://huggingface.co/2"),
        ];
        assert!(filter_results(all_bad, &default_excluded_domains()).is_empty());
    }

    #[test]
    fn empty_after_filtering_is_still_transport_ok() {
        let mut f = SearchFixtures::default();
        f.google.insert(
            "leak".into(),
            vec![hit("https://huggingface.co/datasets/x")],
        );
        let reg = ToolRegistry::fixture(f);
        with_session(Script::new(), |s| {
            let r = reg.invoke_tool(s, 1, GOOGLE_SEARCH, "leak").unwrap();
            assert!(r.transport_ok);
            assert_eq!(r.raw_output, "No results found.");
        });
    }

    #[test]
    fn web_search_fetches_and_summarizes() {
        let reg = ToolRegistry::fixture(fixtures());
        let mut script = Script::new();
        script.on(
            Agent::Executor,
            Purpose::Summarization,
            None,
            2,
            &["Film X was directed by Jane Doe."],
        );
        with_session(script, |s| {
            let r = reg
                .invoke_tool(s, 2, WEB_SEARCH, "film x director")
                .unwrap();
            assert!(r.transport_ok);
            assert_eq!(r.raw_output, "Film X was directed by Jane Doe.");
            let calls = s.calls();
            assert_eq!(calls.len(), 1);
            assert_eq!(calls[0].purpose, Purpose::Summarization);
        });
    }

    #[test]
    fn web_search_without_pages_reports_no_usable_content() {
        let reg = ToolRegistry::fixture(fixtures());
        with_session(Script::new(), |s| {
            let r = reg
                .invoke_tool(s, 1, WEB_SEARCH, "https://www.sciencedirect.com/article")
                .unwrap();
            assert!(!r.transport_ok);
            assert!(r.raw_output.contains("no usable content"));
            let r = reg
                .invoke_tool(s, 1, WEB_SEARCH, "https://huggingface.co/datasets/x")
                .unwrap();
            assert!(!r.transport_ok);
        });
    }

    #[test]
    fn fixture_results_are_deterministic() {
        let reg = ToolRegistry::fixture(fixtures());
        with_session(Script::new(), |s| {
            let a = reg
                .invoke_tool(s, 1, GOOGLE_SEARCH, "capital of france")
                .unwrap();
            let b = reg
                .invoke_tool(s, 1, GOOGLE_SEARCH, "capital of france")
                .unwrap();
            assert_eq!(a.raw_output, b.raw_output);
            assert_eq!(a.transport_ok, b.transport_ok);
        });
    }

    #[test]
    fn code_fences_are_stripped() {
        assert_eq!(strip_code_fence("```python\nprint(42)\n```"), "print(42)");
        assert_eq!(strip_code_fence("print(1)"), "print(1)");
    }

    #[test]
    fn empty_search_query_fails_softly() {
        let reg = ToolRegistry::fixture(fixtures());
        with_session(Script::new(), |s| {
            let r = reg.invoke_tool(s, 1, WIKIPEDIA_SEARCH, "  ").unwrap();
            assert!(!r.transport_ok);
            assert!(!r.raw_output.is_empty());
        });
    }
}
