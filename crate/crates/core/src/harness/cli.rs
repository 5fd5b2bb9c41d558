use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use super::cost::CostTotals;
use super::dataset::{load_dataset_with, FieldMap, TaskRecord};
use super::judge::{judge_answer, JudgeKind, JudgeVerdict};
use super::metrics::{aggregate_metrics, MetricsReport};
use super::persist::persist_trace;
use crate::backend::{Backend, HttpBackend, HttpConfig, ScriptFile, ScriptedBackend};
use crate::error::{Error, Result};
use crate::ips::EvalBatching;
use crate::tools::{
    CodeConfig, FixtureSearch, HttpSearch, ProviderKind, SearchFixtures, ToolRegistry,
};
use crate::workflow::{run_task, Mode, RunConfig, Trace, DEFAULT_CONTEXT_BUDGET};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Http,
    Scripted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum JudgeArg {
    Exact,
    Llm,
}

#[derive(Debug, Clone, Parser)]
#[command(
    name = "epcaw",
    version,
    about = "Run the three-agent planning workflow over a question-answering dataset"
)]
pub struct Cli {
    #[arg(long, value_enum, default_value = "epc-aw")]
    pub mode: Mode,
    /// Planner self-selection instead of consistency-based selection (implies --no-cesr).
    #[arg(long)]
    pub no_ips: bool,
    #[arg(long)]
    pub no_cesr: bool,
    #[arg(long, default_value_t = 9)]
    pub k: usize,
    #[arg(long, default_value_t = 10)]
    pub max_rounds: usize,
    #[arg(long, default_value_t = 0.9)]
    pub temperature_plan: f64,
    #[arg(long, default_value_t = DEFAULT_CONTEXT_BUDGET)]
    pub context_budget: usize,
    #[arg(long, value_enum, default_value = "scripted")]
    pub backend: BackendKind,
    #[arg(long, default_value = "http://localhost:8000/v1/chat/completions")]
    pub endpoint: String,
    #[arg(long, default_value = "default")]
    pub model: String,
    /// Environment variable holding the API key.
    #[arg(long, default_value = "OPENAI_API_KEY")]
    pub api_key_env: String,
    /// Script file for the scripted backend.
    #[arg(long)]
    pub script: Option<PathBuf>,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value = "id")]
    pub id_field: String,
    #[arg(long, default_value = "question")]
    pub question_field: String,
    #[arg(long, default_value = "answer")]
    pub answer_field: String,
    #[arg(long, default_value = "traces")]
    pub trace_dir: PathBuf,
    /// Report file (JSON); a rendered table is written next to it. Defaults to <trace-dir>/report.json.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "exact")]
    pub judge: JudgeArg,
    #[arg(long, value_enum, default_value = "per-perspective")]
    pub eval_batching: EvalBatching,
    #[arg(long, default_value_t = 4)]
    pub parallel_tasks: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Repeat the whole run; run r uses seed + r.
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    /// Baseline mode for the delta column. msa compares against epc-aw unless --no-compare.
    #[arg(long, value_enum)]
    pub compare: Option<Mode>,
    #[arg(long)]
    pub no_compare: bool,
    /// Search fixture file; searches never leave the process.
    #[arg(long)]
    pub tool_fixtures: Option<PathBuf>,
    /// Live search service (`GET ?q=&engine=&num=`).
    #[arg(long)]
    pub search_endpoint: Option<String>,
    /// Allow python_coder to run code in a child interpreter.
    #[arg(long)]
    pub enable_code: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionDifference {
    pub task_id: String,
    pub iteration: usize,
    pub round: usize,
    pub selected: Option<usize>,
    pub baseline_selected: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskFailure {
    pub task_id: String,
    pub mode: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub metrics: MetricsReport,
    pub baseline_cost: Option<CostTotals>,
    /// Rounds (first run only) where the two modes executed different candidates.
    pub selection_differences: Vec<SelectionDifference>,
    pub traces: Vec<PathBuf>,
    /// Tasks that aborted (scripted misses, configuration problems).
    pub failures: Vec<TaskFailure>,
    /// Tasks whose live backend gave out; their traces carry the error.
    pub unanswered: Vec<String>,
}

impl Cli {
    fn run_config(&self, mode: Mode, primary: bool) -> RunConfig {
        let mut c = RunConfig::new(mode);
        c.k = self.k;
        c.max_rounds = self.max_rounds;
        c.temperature_plan = self.temperature_plan;
        c.eval_batching = self.eval_batching;
        c.context_budget = self.context_budget;
        c.seed = self.seed;
        // ablation flags describe the primary run only
        if primary && mode == Mode::EpcAw {
            if self.no_ips {
                c = c.without_ips();
            }
            if self.no_cesr {
                c = c.without_cesr();
            }
        }
        c
    }

    fn baseline(&self) -> Option<Mode> {
        if self.no_compare {
            return None;
        }
        self.compare
            .or((self.mode == Mode::Msa).then_some(Mode::EpcAw))
    }

    fn tools(&self) -> Result<ToolRegistry> {
        let registry = match (&self.tool_fixtures, &self.search_endpoint) {
            (Some(path), _) => ToolRegistry::fixture(SearchFixtures::load(path)?),
            (None, Some(endpoint)) => ToolRegistry::new(
                Arc::new(HttpSearch::new(endpoint.as_str(), Duration::from_secs(60))?),
                ProviderKind::Live,
            ),
            (None, None) => {
                if self.backend == BackendKind::Http {
                    warn!("no search fixtures or endpoint given; searches return nothing");
                }
                ToolRegistry::new(
                    Arc::new(FixtureSearch::new(SearchFixtures::default())),
                    ProviderKind::Fixture,
                )
            }
        };
        Ok(registry.with_code(CodeConfig {
            enabled: self.enable_code,
            ..CodeConfig::default()
        }))
    }
}

enum Backends {
    Http(HttpBackend),
    Scripted(ScriptFile),
}

impl Backends {
    fn with_backend<T>(&self, task: &TaskRecord, f: impl FnOnce(&dyn Backend) -> T) -> T {
        match self {
            Backends::Http(b) => f(b),
            Backends::Scripted(file) => f(&ScriptedBackend::new(file.for_task(&task.id))),
        }
    }
}

struct ModeRun {
    traces: Vec<(usize, Trace)>,
    verdicts: Vec<JudgeVerdict>,
    paths: Vec<PathBuf>,
    failures: Vec<TaskFailure>,
    unanswered: Vec<String>,
    cost: CostTotals,
}

fn run_mode(
    cli: &Cli,
    config: &RunConfig,
    tasks: &[TaskRecord],
    backends: &Backends,
    tools: &ToolRegistry,
    pool: &rayon::ThreadPool,
) -> Result<ModeRun> {
    let judge = match cli.judge {
        JudgeArg::Exact => JudgeKind::NormalizedExact,
        JudgeArg::Llm => JudgeKind::LlmJudge,
    };
    let mut out = ModeRun {
        traces: Vec::new(),
        verdicts: Vec::new(),
        paths: Vec::new(),
        failures: Vec::new(),
        unanswered: Vec::new(),
        cost: CostTotals::default(),
    };
    for run in 0..cli.repeats {
        let mut config = config.clone();
        config.seed = cli.seed + run as u64;
        let mut dir = cli.trace_dir.join(config.mode.label());
        if cli.repeats > 1 {
            dir = dir.join(format!("run-{}", run + 1));
        }
        let results: Vec<(&TaskRecord, Result<(Trace, JudgeVerdict)>)> = pool.install(|| {
            tasks
                .par_iter()
                .map(|task| {
                    let r = backends.with_backend(task, |backend| {
                        let trace = run_task(&config, task, backend, tools)?;
                        let predicted = trace.final_answer.clone().unwrap_or_default();
                        Ok((trace, judge_answer(Some(backend), task, &predicted, judge)))
                    });
                    (task, r)
                })
                .collect()
        });
        for (task, result) in results {
            match result {
                Ok((trace, verdict)) => {
                    out.paths.push(persist_trace(&trace, &dir)?);
                    out.cost.add(&trace.cost.totals);
                    if trace.error.is_some() {
                        out.unanswered.push(task.id.clone());
                    }
                    out.verdicts.push(verdict);
                    out.traces.push((run, trace));
                }
                Err(e) => {
                    warn!(task = %task.id, mode = config.mode.label(), error = %e, "task failed");
                    out.failures.push(TaskFailure {
                        task_id: task.id.clone(),
                        mode: config.mode.label().into(),
                        error: e.to_string(),
                    });
                }
            }
        }
    }
    Ok(out)
}

fn selection_differences(
    primary: &[(usize, Trace)],
    baseline: &[(usize, Trace)],
) -> Vec<SelectionDifference> {
    let mut out = Vec::new();
    for (_, a) in primary.iter().filter(|(run, _)| *run == 0) {
        let Some((_, b)) = baseline
            .iter()
            .find(|(run, t)| *run == 0 && t.task_id == a.task_id)
        else {
            continue;
        };
        for (ra, rb) in a.rounds.iter().zip(&b.rounds) {
            if ra.selected_index() != rb.selected_index() {
                out.push(SelectionDifference {
                    task_id: a.task_id.clone(),
                    iteration: ra.iteration,
                    round: ra.round,
                    selected: ra.selected_index(),
                    baseline_selected: rb.selected_index(),
                });
            }
        }
    }
    out
}

fn write_report(report: &RunReport, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let body = serde_json::to_string_pretty(report).map_err(|e| Error::json(path, e))?;
    std::fs::write(path, body + "\n").map_err(|e| Error::io(path, e))?;
    let table = path.with_extension("txt");
    std::fs::write(&table, report.metrics.render()).map_err(|e| Error::io(&table, e))
}

/// Runs the configured evaluation and returns the report.
pub fn execute(cli: &Cli) -> Result<RunReport> {
    let primary = cli.run_config(cli.mode, true);
    primary.validate()?;
    if cli.repeats == 0 || cli.parallel_tasks == 0 {
        return Err(Error::Config(
            "--repeats and --parallel-tasks must be at least 1".into(),
        ));
    }
    let fields = FieldMap {
        id: cli.id_field.clone(),
        question: cli.question_field.clone(),
        answer: cli.answer_field.clone(),
        ..FieldMap::default()
    };
    let tasks = load_dataset_with(&cli.dataset, &fields)?;
    if tasks.is_empty() {
        return Err(Error::EmptyRun);
    }
    let backends = match cli.backend {
        BackendKind::Scripted => {
            let path = cli
                .script
                .as_ref()
                .ok_or_else(|| Error::Config("--backend scripted needs --script".into()))?;
            Backends::Scripted(ScriptFile::load(path)?)
        }
        BackendKind::Http => Backends::Http(HttpBackend::new(HttpConfig {
            endpoint: cli.endpoint.clone(),
            model: cli.model.clone(),
            api_key_env: cli.api_key_env.clone(),
            seed: Some(cli.seed),
            ..HttpConfig::default()
        })?),
    };
    let tools = cli.tools()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.parallel_tasks)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;

    info!(
        mode = primary.mode.label(),
        tasks = tasks.len(),
        "starting run"
    );
    let main = run_mode(cli, &primary, &tasks, &backends, &tools, &pool)?;
    let base_mode = cli
        .baseline()
        .filter(|&m| m != cli.mode || cli.no_ips || cli.no_cesr);
    let base = base_mode
        .map(|m| {
            run_mode(
                cli,
                &cli.run_config(m, false),
                &tasks,
                &backends,
                &tools,
                &pool,
            )
        })
        .transpose()?;

    let mut metrics =
        aggregate_metrics(&main.verdicts, base.as_ref().map(|b| b.verdicts.as_slice()))?;
    metrics.mode = primary_label(cli, &primary);
    metrics.baseline = base_mode.map(|m| m.label().to_string());
    metrics.run_count = cli.repeats;
    metrics.cost = main.cost.clone();

    let mut failures = main.failures;
    let mut unanswered = main.unanswered;
    let mut traces = main.paths;
    let (selection_differences, baseline_cost) = match base {
        Some(b) => {
            failures.extend(b.failures);
            unanswered.extend(b.unanswered);
            traces.extend(b.paths);
            (selection_differences(&main.traces, &b.traces), Some(b.cost))
        }
        None => (Vec::new(), None),
    };
    Ok(RunReport {
        metrics,
        baseline_cost,
        selection_differences,
        traces,
        failures,
        unanswered,
    })
}

fn primary_label(cli: &Cli, config: &RunConfig) -> String {
    let mut label = cli.mode.label().to_string();
    if config.mode == Mode::EpcAw && !config.ips_enabled {
        label.push_str(" (no ips)");
    } else if config.mode == Mode::EpcAw && !config.cesr_enabled {
        label.push_str(" (no cesr)");
    }
    label
}

/// Entry point shared by the binary and the tests; returns the process exit code.
pub fn cli_run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(report) => {
            let path = cli
                .report
                .clone()
                .unwrap_or_else(|| cli.trace_dir.join("report.json"));
            print!("{}", report.metrics.render());
            for d in &report.selection_differences {
                println!(
                    "selection differs: task {} iteration {}: {:?} vs {:?}",
                    d.task_id, d.iteration, d.selected, d.baseline_selected
                );
            }
            for f in &report.failures {
                eprintln!("task {} ({}) failed: {}", f.task_id, f.mode, f.error);
            }
            if let Err(e) = write_report(&report, &path) {
                eprintln!("error: {e}");
                return 1;
            }
            println!("report: {}", path.display());
            i32::from(!report.failures.is_empty())
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
