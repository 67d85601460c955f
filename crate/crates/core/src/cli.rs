//! Command-line entry point. Exit codes: 0 success, 1 domain error, 2 usage
//! error.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{Backend, Config};
use crate::distiller::distill;
use crate::eval::{
    build_knowledge_base, run_ablation, run_planning_suite, run_robot_suite, select_tasks, EvalOptions, SuiteContext,
    TaskKind, TaskSpec, TaskSuite, ABLATION_TASKS,
};
use crate::knowledge_base::{Embedder, KnowledgeBase, KnowledgeEntry};
use crate::llm_gateway::Gateway;
use crate::planner::{describe_plan, plan_task, run_task, Ablation, RunOptions};
use crate::scene_graph::Recording;
use crate::simulator::{FaultConfig, FaultMode};

type Failure = Box<dyn std::error::Error>;

#[derive(Debug, Parser)]
#[command(name = "digknow", version, about = "Distill demonstrations into task knowledge and plan with it")]
struct Cli {
    /// JSON configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    backend: Option<Backend>,
    /// Knowledge base directory. Without it, a temporary base is built
    /// from the bundled demonstrations.
    #[arg(long, global = true)]
    kb: Option<PathBuf>,
    /// Script file for the scripted backend.
    #[arg(long, global = true)]
    script: Option<PathBuf>,
    /// Log answered by the replay backend.
    #[arg(long, global = true)]
    replay: Option<PathBuf>,
    /// Append every model exchange to this log.
    #[arg(long, global = true)]
    record: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Repeat for more log output on stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Distill a recording and store the result in a knowledge base.
    Distill {
        #[arg(long)]
        recording: PathBuf,
        #[arg(long)]
        downsample: Option<usize>,
        /// Knowledge base to store into (defaults to --kb).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Entry id; defaults to the recording id or file name.
        #[arg(long)]
        id: Option<String>,
    },
    /// Inspect a knowledge base.
    Kb {
        #[command(subcommand)]
        action: KbAction,
    },
    /// Plan one task and print the corrected plan.
    Plan {
        #[arg(long)]
        task: u32,
        #[command(flatten)]
        ablate: AblateFlags,
    },
    /// Run one simulated episode.
    Run {
        #[arg(long)]
        task: u32,
        #[command(flatten)]
        faults: FaultFlags,
        #[command(flatten)]
        ablate: AblateFlags,
        /// Write the episode result as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the planning or robot suite.
    Eval {
        #[arg(long, value_enum, default_value_t = SuiteChoice::All)]
        suite: SuiteChoice,
        #[arg(long, value_enum, default_value_t = Mode::Planning)]
        mode: Mode,
        #[command(flatten)]
        faults: FaultFlags,
        #[command(flatten)]
        ablate: AblateFlags,
        /// Robot-suite episodes per task.
        #[arg(long)]
        episodes: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the seeded fault suite once per ablation variant.
    Ablate {
        #[arg(long, value_delimiter = ',', default_values_t = ABLATION_TASKS)]
        tasks: Vec<u32>,
        #[arg(long, default_value_t = 20)]
        episodes: u64,
        #[arg(long, default_value_t = 0.3)]
        inject_failures: f64,
        #[arg(long, value_enum, default_value_t = FaultChoice::DropAfterPick)]
        fault_mode: FaultChoice,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
enum KbAction {
    /// List entry ids in insertion order.
    List,
    /// Show one entry.
    Show {
        id: String,
        /// Print the full entry as JSON.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SuiteChoice {
    Seen,
    Unseen,
    All,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Planning,
    Robot,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Component {
    Kb,
    Sg,
    Pc,
    Ec,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FaultChoice {
    DropAfterPick,
    NoOp,
    WrongPlacement,
}

impl From<FaultChoice> for FaultMode {
    fn from(c: FaultChoice) -> Self {
        match c {
            FaultChoice::DropAfterPick => FaultMode::DropAfterPick,
            FaultChoice::NoOp => FaultMode::NoOp,
            FaultChoice::WrongPlacement => FaultMode::WrongPlacement,
        }
    }
}

#[derive(Debug, Args)]
struct AblateFlags {
    /// Components to switch off.
    #[arg(long, value_enum, value_delimiter = ',')]
    ablate: Vec<Component>,
}

impl AblateFlags {
    fn ablation(&self) -> Ablation {
        let mut a = Ablation::default();
        for c in &self.ablate {
            match c {
                Component::Kb => a.no_kb = true,
                Component::Sg => a.no_sg = true,
                Component::Pc => a.no_pc = true,
                Component::Ec => a.no_ec = true,
            }
        }
        a
    }
}

#[derive(Debug, Args)]
struct FaultFlags {
    /// Per-action fault probability.
    #[arg(long, default_value_t = 0.0)]
    inject_failures: f64,
    #[arg(long, value_enum, default_value_t = FaultChoice::DropAfterPick)]
    fault_mode: FaultChoice,
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(level));
    let _ = tracing_subscriber::fmt().with_writer(std::io::stderr).with_env_filter(filter).try_init();
}

fn load_config(cli: &Cli) -> Result<Config, Failure> {
    let mut config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(b) = cli.backend {
        config.backend = b;
    }
    if let Some(k) = &cli.kb {
        config.kb_dir = Some(k.clone());
    }
    if let Some(s) = &cli.script {
        config.script = Some(s.clone());
    }
    if let Some(r) = &cli.replay {
        config.replay_log = Some(r.clone());
    }
    if let Some(r) = &cli.record {
        config.record_log = Some(r.clone());
    }
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    config.validate()?;
    Ok(config)
}

/// The configured base, or a temporary one built from the bundled
/// demonstrations. The temp dir must outlive the base.
fn knowledge_base(
    config: &Config,
    gateway: &Gateway,
    embedder: &dyn Embedder,
) -> Result<(KnowledgeBase, Option<tempfile::TempDir>), Failure> {
    if let Some(dir) = &config.kb_dir {
        return Ok((KnowledgeBase::open(dir)?, None));
    }
    let tmp = tempfile::tempdir()?;
    let kb = build_knowledge_base(&TaskSuite::bundled(), tmp.path(), gateway, embedder, &config.distill_options())?;
    Ok((kb, Some(tmp)))
}

fn write_artifact(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))?;
    tracing::info!(path = %path.display(), "wrote artifact");
    Ok(())
}

fn find_task(suite: &TaskSuite, id: u32) -> Result<&TaskSpec, Failure> {
    suite.task(id).ok_or_else(|| format!("unknown task {id}").into())
}

fn show_entry(e: &KnowledgeEntry) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "id: {}", e.entry_id);
    let _ = writeln!(out, "instruction: {}", e.instruction);
    let _ = writeln!(out, "task pattern: {}", e.task_pattern.text);
    let _ = writeln!(out, "keyframes: {}  actions: {}", e.keyframe_graphs.len(), e.action_records.len());
    for r in &e.action_records {
        let step = r.step.as_ref().map(|s| s.canonical()).unwrap_or_else(|| "?".into());
        let _ = writeln!(out, "  {}. {} [{step}]", r.index + 1, r.description);
    }
    let _ = writeln!(out, "object patterns:");
    for p in &e.object_patterns {
        let _ = writeln!(out, "  {}: {}", p.object_class, p.render());
    }
    out
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let config = load_config(&cli)?;
    let embedder = config.embedder();
    let suite = TaskSuite::bundled();
    match cli.command {
        Command::Distill { recording, downsample, out, id } => {
            let mut options = config.distill_options();
            if let Some(d) = downsample {
                options.downsample = d;
            }
            let dir = out.or(config.kb_dir.clone()).ok_or("distill needs --out or --kb")?;
            let rec = Recording::load(&recording).map_err(|e| format!("{}: {e}", recording.display()))?;
            let id = id.or(rec.id.clone()).unwrap_or_else(|| {
                recording.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "recording".into())
            });
            let gateway = config.gateway()?;
            let d = distill(&rec, &options, &gateway)?;
            let mut kb = KnowledgeBase::open_or_create(&dir, embedder.as_ref())?;
            kb.store(KnowledgeEntry::from_distillation(&id, &d, embedder.as_ref()))?;
            println!("stored {id} in {} ({} actions)", dir.display(), d.records.len());
            println!("task pattern: {}", d.task_pattern.text);
        }
        Command::Kb { action } => {
            let dir = config.kb_dir.as_ref().ok_or("kb needs --kb <dir>")?;
            let kb = KnowledgeBase::open(dir)?;
            match action {
                KbAction::List => {
                    for id in kb.list() {
                        println!("{id}");
                    }
                }
                KbAction::Show { id, json } => {
                    let e = kb.load(&id)?;
                    if json {
                        println!("{}", serde_json::to_string_pretty(e)?);
                    } else {
                        print!("{}", show_entry(e));
                    }
                }
            }
        }
        Command::Plan { task, ablate } => {
            let task = find_task(&suite, task)?;
            let gateway = config.gateway()?;
            let (kb, _tmp) = knowledge_base(&config, &gateway, embedder.as_ref())?;
            let world = task.world(config.seed)?;
            let faults = FaultConfig::none();
            let mut options = RunOptions::new(Some(&kb), embedder.as_ref(), &faults);
            options.top_n = config.top_n;
            options.correction = config.correction;
            options.ablation = ablate.ablation();
            let out = plan_task(&task.description, &world, &gateway.fork(Some(config.correction.planning_budget())), &options);
            let g0 = world.observe();
            if let Some(p) = &out.last {
                println!("{}", describe_plan(&p.steps, &g0));
                for s in &p.steps {
                    println!("  {}", s.canonical());
                }
                println!("revisions: {}", p.round);
            }
            if let Some(e) = out.error {
                return Err(e.into());
            }
        }
        Command::Run { task, faults, ablate, out } => {
            let task = find_task(&suite, task)?;
            let gateway = config.gateway()?;
            let (kb, _tmp) = knowledge_base(&config, &gateway, embedder.as_ref())?;
            let mut world = task.world(config.seed)?;
            let fault = FaultConfig::new(faults.inject_failures, faults.fault_mode.into(), config.seed)?;
            let mut options = RunOptions::new(Some(&kb), embedder.as_ref(), &fault);
            options.top_n = config.top_n;
            options.correction = config.correction;
            options.ablation = ablate.ablation();
            let r = run_task(&task.description, &mut world, &task.goal, &gateway, &options);
            println!("success: {}", r.success);
            println!("executed: {}", r.executed.iter().map(|s| s.canonical()).collect::<Vec<_>>().join(" "));
            println!(
                "plan revisions: {}  execution corrections: {}  gateway calls: {}",
                r.plan_revisions, r.exec_corrections, r.gateway_calls
            );
            if let Some(c) = &r.cause {
                println!("cause: {c}");
            }
            if let Some(path) = out {
                write_artifact(&path, &(serde_json::to_string_pretty(&r)? + "\n"))?;
            }
        }
        Command::Eval { suite: which, mode, faults, ablate, episodes, out } => {
            let gateway = config.gateway()?;
            let (kb, _tmp) = knowledge_base(&config, &gateway, embedder.as_ref())?;
            let tasks: Vec<&TaskSpec> = match which {
                SuiteChoice::Seen => suite.of_kind(TaskKind::Seen),
                SuiteChoice::Unseen => suite.of_kind(TaskKind::Unseen),
                SuiteChoice::All => suite.tasks.iter().collect(),
            };
            let mut options = EvalOptions {
                base_seed: config.seed,
                top_n: config.top_n,
                correction: config.correction,
                fault_probability: faults.inject_failures,
                fault_mode: faults.fault_mode.into(),
                ablation: ablate.ablation(),
                ..EvalOptions::default()
            };
            if let Some(n) = episodes {
                options.episodes = n;
            }
            let ctx = SuiteContext { kb: &kb, gateway: &gateway, embedder: embedder.as_ref(), backend: config.backend.as_str() };
            let report = match mode {
                Mode::Planning => run_planning_suite(&ctx, &tasks, &options)?,
                Mode::Robot => run_robot_suite(&ctx, &tasks, &options)?,
            };
            print!("{}", report.render_table());
            if let Some(path) = out {
                write_artifact(&path, &report.to_json())?;
            }
        }
        Command::Ablate { tasks, episodes, inject_failures, fault_mode, out } => {
            let gateway = config.gateway()?;
            let (kb, _tmp) = knowledge_base(&config, &gateway, embedder.as_ref())?;
            let tasks = select_tasks(&suite, &tasks)?;
            let options = EvalOptions {
                episodes,
                base_seed: config.seed,
                top_n: config.top_n,
                correction: config.correction,
                fault_probability: inject_failures,
                fault_mode: fault_mode.into(),
                ..EvalOptions::default()
            };
            let ctx = SuiteContext { kb: &kb, gateway: &gateway, embedder: embedder.as_ref(), backend: config.backend.as_str() };
            let report = run_ablation(&ctx, &tasks, &options, &Ablation::VARIANTS)?;
            print!("{}", report.render_table());
            if let Some(path) = out {
                write_artifact(&path, &report.to_json())?;
            }
        }
    }
    Ok(())
}

/// Parse `argv` (program name first), run, and return the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    init_logging(cli.verbose);
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
