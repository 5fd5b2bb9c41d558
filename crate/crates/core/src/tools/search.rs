use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::memory::normalize_text;

pub const FIXTURE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SearchEngine {
    Google,
    Wikipedia,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchHit {
    pub url: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub snippet: String,
}

/// Ranked search plus page retrieval. Errors are plain messages; the registry
/// turns them into failed tool results.
pub trait SearchProvider: Send + Sync {
    fn search(
        &self,
        engine: SearchEngine,
        query: &str,
        limit: usize,
    ) -> std::result::Result<Vec<SearchHit>, String>;
    fn fetch_page(&self, url: &str) -> std::result::Result<String, String>;
}

/// Fixture document: normalized query -> results, URL -> page text.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchFixtures {
    #[serde(default = "fixture_version")]
    pub version: u32,
    #[serde(default)]
    pub google: BTreeMap<String, Vec<SearchHit>>,
    #[serde(default)]
    pub wikipedia: BTreeMap<String, Vec<SearchHit>>,
    #[serde(default)]
    pub pages: BTreeMap<String, String>,
}

fn fixture_version() -> u32 {
    FIXTURE_VERSION
}

impl SearchFixtures {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let f: SearchFixtures = serde_json::from_str(&raw).map_err(|e| Error::json(path, e))?;
        if f.version != FIXTURE_VERSION {
            return Err(Error::SchemaMismatch {
                found: f.version,
                expected: FIXTURE_VERSION,
            });
        }
        Ok(f)
    }
}

/// Lowercased, whitespace-collapsed, with surrounding quotes and trailing `?`/`.` removed.
pub fn normalize_query(query: &str) -> String {
    normalize_text(query)
        .to_lowercase()
        .trim_matches(['"', '\'', '`'])
        .trim_end_matches(['?', '.', '!'])
        .trim()
        .to_string()
}

pub struct FixtureSearch {
    fixtures: SearchFixtures,
}

impl FixtureSearch {
    pub fn new(fixtures: SearchFixtures) -> Self {
        // keys are matched in normalized form
        let norm = |m: BTreeMap<String, Vec<SearchHit>>| {
            m.into_iter()
                .map(|(k, v)| (normalize_query(&k), v))
                .collect()
        };
        Self {
            fixtures: SearchFixtures {
                version: fixtures.version,
                google: norm(fixtures.google),
                wikipedia: norm(fixtures.wikipedia),
                pages: fixtures.pages,
            },
        }
    }
}

impl SearchProvider for FixtureSearch {
    fn search(
        &self,
        engine: SearchEngine,
        query: &str,
        limit: usize,
    ) -> std::result::Result<Vec<SearchHit>, String> {
        let table = match engine {
            SearchEngine::Google => &self.fixtures.google,
            SearchEngine::Wikipedia => &self.fixtures.wikipedia,
        };
        Ok(table
            .get(&normalize_query(query))
            .map(|hits| hits.iter().take(limit.max(1) * 2).cloned().collect())
            .unwrap_or_default())
    }

    fn fetch_page(&self, url: &str) -> std::result::Result<String, String> {
        self.fixtures
            .pages
            .get(url)
            .cloned()
            .ok_or_else(|| "page returned no usable content".to_string())
    }
}

/// Live provider: `GET {endpoint}?q=..&engine=google|wikipedia&num=N` returning
/// a JSON array of hits (or `{"results": [...]}`); pages are fetched directly.
pub struct HttpSearch {
    endpoint: String,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum HitsBody {
    Bare(Vec<SearchHit>),
    Wrapped { results: Vec<SearchHit> },
}

impl HttpSearch {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        Ok(Self {
            endpoint: endpoint.into(),
            client,
        })
    }
}

fn strip_tags(html: &str) -> String {
    let mut out = String::with_capacity(html.len() / 2);
    let mut in_tag = false;
    for c in html.chars() {
        match c {
            '<' => in_tag = true,
            '>' if in_tag => {
                in_tag = false;
                out.push(' ');
            }
            _ if !in_tag => out.push(c),
            _ => {}
        }
    }
    normalize_text(&out)
}

const MAX_PAGE_CHARS: usize = 20_000;

impl SearchProvider for HttpSearch {
    fn search(
        &self,
        engine: SearchEngine,
        query: &str,
        limit: usize,
    ) -> std::result::Result<Vec<SearchHit>, String> {
        let engine = match engine {
            SearchEngine::Google => "google",
            SearchEngine::Wikipedia => "wikipedia",
        };
        let resp = self
            .client
            .get(&self.endpoint)
            .query(&[
                ("q", query),
                ("engine", engine),
                ("num", &limit.to_string()),
            ])
            .send()
            .map_err(|e| e.to_string())?;
        if !resp.status().is_success() {
            return Err(format!("status {}", resp.status()));
        }
        match resp.json::<HitsBody>().map_err(|e| e.to_string())? {
            HitsBody::Bare(h) | HitsBody::Wrapped { results: h } => Ok(h),
        }
    }

    fn fetch_page(&self, url: &str) -> std::result::Result<String, String> {
        let resp = self.client.get(url).send().map_err(|e| e.to_string())?;
        if !resp.status().is_success() {
            return Err(format!("status {}", resp.status()));
        }
        let text = strip_tags(&resp.text().map_err(|e| e.to_string())?);
        Ok(text.chars().take(MAX_PAGE_CHARS).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn query_normalization() {
        assert_eq!(
            normalize_query("  Capital of   FRANCE? "),
            "capital of france"
        );
        assert_eq!(normalize_query("\"film x\""), "film x");
    }

    #[test]
    fn tags_are_stripped() {
        assert_eq!(strip_tags("<p>Hello <b>world</b></p>"), "Hello world");
    }

    #[test]
    fn fixture_miss_is_empty_not_error() {
        let f = FixtureSearch::new(SearchFixtures::default());
        assert!(f
            .search(SearchEngine::Google, "nothing", 10)
            .unwrap()
            .is_empty());
        assert!(f.fetch_page("https://nowhere.example").is_err());
    }
}
