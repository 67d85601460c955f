//! Planning and robot suites, ablations, and their reports.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::metric::normalized_levenshtein;
use super::tasks::{TaskKind, TaskSpec, TaskSuite};
use crate::distiller::{distill, DistillError, DistillOptions};
use crate::knowledge_base::{Embedder, KbError, KnowledgeBase, KnowledgeEntry, DEFAULT_TOP_N};
use crate::llm_gateway::Gateway;
use crate::planner::{plan_task, run_task, Ablation, CorrectionConfig, RunOptions};
use crate::simulator::{FaultConfig, FaultMode, SimError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Distill(#[from] DistillError),
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error("unknown task {0}")]
    UnknownTask(u32),
    #[error("invalid evaluation options: {0}")]
    InvalidOptions(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    /// Initial-state seeds per task in the planning suite.
    pub initial_states: u64,
    pub repetitions: u32,
    /// Episodes per task in the robot suite.
    pub episodes: u64,
    pub base_seed: u64,
    pub top_n: usize,
    pub correction: CorrectionConfig,
    pub fault_probability: f64,
    pub fault_mode: FaultMode,
    pub ablation: Ablation,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            initial_states: 5,
            repetitions: 10,
            episodes: 20,
            base_seed: 0,
            top_n: DEFAULT_TOP_N,
            correction: CorrectionConfig::default(),
            fault_probability: 0.0,
            fault_mode: FaultMode::DropAfterPick,
            ablation: Ablation::default(),
        }
    }
}

impl EvalOptions {
    fn validate(&self) -> Result<(), EvalError> {
        if !(0.0..=1.0).contains(&self.fault_probability) {
            return Err(EvalError::InvalidOptions(format!("fault probability {} outside [0, 1]", self.fault_probability)));
        }
        if self.top_n == 0 {
            return Err(EvalError::InvalidOptions("top_n must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteKind {
    Planning,
    Robot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeRecord {
    pub task: u32,
    pub seed: u64,
    pub repetition: u32,
    /// Planning suite: plan score. Robot suite: 1.0 on success, else 0.0.
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub success: Option<bool>,
    pub plan_revisions: usize,
    pub exec_corrections: usize,
    pub gateway_calls: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cause: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskResult {
    pub task: u32,
    pub kind: TaskKind,
    pub description: String,
    /// Mean score (planning) or success rate (robot).
    pub mean: f64,
    pub episodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub suite: SuiteKind,
    pub config_digest: String,
    pub tasks: Vec<TaskResult>,
    pub episodes: Vec<EpisodeRecord>,
}

fn mean_of<'a>(scores: impl Iterator<Item = &'a EpisodeRecord>) -> (f64, usize) {
    let (sum, n) = scores.fold((0.0, 0usize), |(s, n), e| (s + e.score, n + 1));
    (if n == 0 { 0.0 } else { sum / n as f64 }, n)
}

impl EvalReport {
    fn assemble(suite: SuiteKind, config_digest: String, tasks: &[&TaskSpec], mut episodes: Vec<EpisodeRecord>) -> Self {
        episodes.sort_by_key(|e| (e.task, e.seed, e.repetition));
        let tasks = tasks
            .iter()
            .map(|t| {
                let (mean, n) = mean_of(episodes.iter().filter(|e| e.task == t.id));
                TaskResult { task: t.id, kind: t.kind, description: t.description.clone(), mean, episodes: n }
            })
            .collect();
        EvalReport { suite, config_digest, tasks, episodes }
    }

    /// Means recomputed from the episode records equal the stored ones.
    pub fn means_consistent(&self) -> bool {
        self.tasks.iter().all(|t| {
            let (mean, n) = mean_of(self.episodes.iter().filter(|e| e.task == t.task));
            mean == t.mean && n == t.episodes
        })
    }

    pub fn overall_mean(&self) -> f64 {
        mean_of(self.episodes.iter()).0
    }

    pub fn task(&self, id: u32) -> Option<&TaskResult> {
        self.tasks.iter().find(|t| t.task == id)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_json())
    }

    pub fn render_table(&self) -> String {
        let label = match self.suite {
            SuiteKind::Planning => "score",
            SuiteKind::Robot => "success",
        };
        let mut out = format!("{:>4}  {:<7}  {:>7}  {:>3}  task\n", "id", "kind", label, "n");
        for t in &self.tasks {
            let kind = match t.kind {
                TaskKind::Seen => "seen",
                TaskKind::Unseen => "unseen",
            };
            let _ = writeln!(out, "{:>4}  {:<7}  {:>7.3}  {:>3}  {}", t.task, kind, t.mean, t.episodes, t.description);
        }
        let _ = writeln!(out, "mean {:.3}  digest {}", self.overall_mean(), &self.config_digest[..12]);
        out
    }
}

/// Digest of everything that determines a report.
pub fn config_digest(backend: &str, suite: &str, options: &EvalOptions, kb: &KnowledgeBase, task_ids: &[u32]) -> String {
    let value = serde_json::json!({
        "backend": backend,
        "suite": suite,
        "options": options,
        "kb": kb.list(),
        "embedder": kb.embedder_name(),
        "tasks": task_ids,
    });
    let mut h = Sha256::new();
    h.update(value.to_string().as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Distill every bundled demonstration into a fresh base at `dir`.
pub fn build_knowledge_base(
    suite: &TaskSuite,
    dir: &Path,
    gateway: &Gateway,
    embedder: &dyn Embedder,
    options: &DistillOptions,
) -> Result<KnowledgeBase, EvalError> {
    let mut kb = KnowledgeBase::open_or_create(dir, embedder)?;
    for rec in suite.recordings()? {
        let id = rec.id.clone().unwrap_or_else(|| format!("demo{}", kb.len()));
        if kb.list().contains(&id.as_str()) {
            continue;
        }
        let d = distill(&rec, options, gateway)?;
        kb.store(KnowledgeEntry::from_distillation(&id, &d, embedder))?;
    }
    Ok(kb)
}

/// Shared inputs of every suite run.
#[derive(Clone, Copy)]
pub struct SuiteContext<'a> {
    pub kb: &'a KnowledgeBase,
    pub gateway: &'a Gateway,
    pub embedder: &'a dyn Embedder,
    /// Backend label recorded in the config digest.
    pub backend: &'a str,
}

fn run_options<'a>(ctx: &SuiteContext<'a>, options: &EvalOptions, faults: &'a FaultConfig) -> RunOptions<'a> {
    RunOptions {
        kb: Some(ctx.kb),
        embedder: ctx.embedder,
        top_n: options.top_n,
        correction: options.correction,
        ablation: options.ablation,
        faults,
    }
}

/// Score the corrected plan of every task over `initial_states` seeds ×
/// `repetitions`.
pub fn run_planning_suite(ctx: &SuiteContext, tasks: &[&TaskSpec], options: &EvalOptions) -> Result<EvalReport, EvalError> {
    options.validate()?;
    let jobs: Vec<(&TaskSpec, u64, u32)> = tasks
        .iter()
        .flat_map(|t| {
            (0..options.initial_states).flat_map(move |s| (0..options.repetitions).map(move |r| (*t, options.base_seed + s, r)))
        })
        .collect();
    let faults = FaultConfig::none();
    let episodes = jobs
        .par_iter()
        .map(|&(task, seed, repetition)| -> Result<EpisodeRecord, EvalError> {
            let world = task.world(seed)?;
            let gw = ctx.gateway.fork(Some(options.correction.planning_budget()));
            let out = plan_task(&task.description, &world, &gw, &run_options(ctx, options, &faults));
            let steps = out.last.as_ref().map(|p| p.steps.as_slice()).unwrap_or_default();
            let score = if out.last.is_some() { normalized_levenshtein(steps, task.ground_truth_plan(seed)) } else { 0.0 };
            Ok(EpisodeRecord {
                task: task.id,
                seed,
                repetition,
                score,
                success: None,
                plan_revisions: out.last.as_ref().map_or(0, |p| p.round),
                exec_corrections: 0,
                gateway_calls: gw.calls(),
                cause: out.error.map(|e| e.to_string()),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let ids: Vec<u32> = tasks.iter().map(|t| t.id).collect();
    let digest = config_digest(ctx.backend, "planning", options, ctx.kb, &ids);
    Ok(EvalReport::assemble(SuiteKind::Planning, digest, tasks, episodes))
}

/// One simulated episode of `task` with fault stream and variation `seed`.
pub fn run_episode(ctx: &SuiteContext, task: &TaskSpec, seed: u64, options: &EvalOptions) -> Result<EpisodeRecord, EvalError> {
    let mut world = task.world(seed)?;
    let faults = FaultConfig::new(options.fault_probability, options.fault_mode, seed)?;
    let r = run_task(&task.description, &mut world, &task.goal, ctx.gateway, &run_options(ctx, options, &faults));
    Ok(EpisodeRecord {
        task: task.id,
        seed,
        repetition: 0,
        score: if r.success { 1.0 } else { 0.0 },
        success: Some(r.success),
        plan_revisions: r.plan_revisions,
        exec_corrections: r.exec_corrections,
        gateway_calls: r.gateway_calls,
        cause: r.cause,
    })
}

/// `episodes` seeded episodes per task; seed = base_seed + episode index.
pub fn run_robot_suite(ctx: &SuiteContext, tasks: &[&TaskSpec], options: &EvalOptions) -> Result<EvalReport, EvalError> {
    options.validate()?;
    let jobs: Vec<(&TaskSpec, u64)> = tasks
        .iter()
        .flat_map(|t| (0..options.episodes).map(move |i| (*t, options.base_seed + i)))
        .collect();
    let episodes = jobs
        .par_iter()
        .map(|&(task, seed)| run_episode(ctx, task, seed, options))
        .collect::<Result<Vec<_>, _>>()?;
    let ids: Vec<u32> = tasks.iter().map(|t| t.id).collect();
    let digest = config_digest(ctx.backend, "robot", options, ctx.kb, &ids);
    Ok(EvalReport::assemble(SuiteKind::Robot, digest, tasks, episodes))
}

/// Tasks of the seeded fault suite used for ablations.
pub const ABLATION_TASKS: [u32; 4] = [1, 4, 10, 11];

impl EvalOptions {
    /// Robot-suite options of the seeded fault suite.
    pub fn ablation_suite() -> Self {
        EvalOptions { fault_probability: 0.3, fault_mode: FaultMode::DropAfterPick, ..EvalOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantResult {
    pub variant: String,
    pub success_rate: f64,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationReport {
    pub tasks: Vec<u32>,
    /// Full system first, then one variant per disabled component.
    pub variants: Vec<VariantResult>,
}

impl AblationReport {
    pub fn variant(&self, name: &str) -> Option<&VariantResult> {
        self.variants.iter().find(|v| v.variant == name)
    }

    /// Full system at least as successful as every ablated variant.
    pub fn full_dominates(&self) -> bool {
        let Some(full) = self.variant("full") else { return false };
        self.variants.iter().all(|v| v.success_rate <= full.success_rate)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn render_table(&self) -> String {
        let mut out = format!("{:<8}", "variant");
        for t in &self.tasks {
            let _ = write!(out, "  task{t:<3}");
        }
        out.push_str("  overall\n");
        for v in &self.variants {
            let _ = write!(out, "{:<8}", v.variant);
            for t in &v.report.tasks {
                let _ = write!(out, "  {:>7.2}", t.mean);
            }
            let _ = writeln!(out, "  {:>7.3}", v.success_rate);
        }
        out
    }
}

/// Robot suite once per variant in `variants` (names from
/// [`Ablation::VARIANTS`]).
pub fn run_ablation(
    ctx: &SuiteContext,
    tasks: &[&TaskSpec],
    options: &EvalOptions,
    variants: &[&str],
) -> Result<AblationReport, EvalError> {
    let mut out = Vec::new();
    for name in variants {
        let ablation =
            Ablation::named(name).ok_or_else(|| EvalError::InvalidOptions(format!("unknown ablation variant `{name}`")))?;
        let opts = EvalOptions { ablation, ..options.clone() };
        let report = run_robot_suite(ctx, tasks, &opts)?;
        out.push(VariantResult { variant: name.to_string(), success_rate: report.overall_mean(), report });
    }
    Ok(AblationReport { tasks: tasks.iter().map(|t| t.id).collect(), variants: out })
}

/// Look up tasks by id, in the given order.
pub fn select_tasks<'a>(suite: &'a TaskSuite, ids: &[u32]) -> Result<Vec<&'a TaskSpec>, EvalError> {
    ids.iter().map(|id| suite.task(*id).ok_or(EvalError::UnknownTask(*id))).collect()
}
