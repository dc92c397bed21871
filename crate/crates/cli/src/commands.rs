//! Subcommand implementations. Each writes its report to `out` and returns
//! the process exit code: 0 success, 2 best effort, 1 failure.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use agentplan::orchestrator::{AgentPool, RunStatus};
use agentplan::planner::{MetaPlanner, Query};
use agentplan::reward::synthetic::{planted_dataset, PlantedConfig};
use agentplan::reward::{
    build_dataset, read_examples, train, train_features, write_examples, LlmScorer, RewardModel, TrainConfig,
    TrainReport, DEFAULT_HIDDEN,
};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ndarray::Array1;

use crate::config::RunConfig;
use crate::eval::{evaluate_suite, read_queries};
use crate::setup::{self, Overrides, Runtime};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_BEST_EFFORT: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "agentplan",
    version,
    about = "Plan, route and run queries over a team of LLM agents"
)]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Answer from a script file instead of a live model.
    #[arg(long, global = true, conflicts_with = "replay")]
    pub script: Option<PathBuf>,
    /// Answer from a recording instead of a live model.
    #[arg(long, global = true)]
    pub replay: Option<PathBuf>,
    /// Append every model exchange to this file.
    #[arg(long, global = true)]
    pub record: Option<PathBuf>,
    #[arg(long, global = true)]
    pub trace_dir: Option<PathBuf>,
    /// Trained reward model parameters.
    #[arg(long, global = true)]
    pub params: Option<PathBuf>,
    /// Representative works store.
    #[arg(long, global = true)]
    pub works: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Answer one query end to end.
    Run(RunArgs),
    /// Score agents' responses on planned sub-tasks to build training data.
    BuildDataset(BuildArgs),
    /// Train the reward model.
    Train(TrainArgs),
    /// Answer and judge an annotated query file.
    Eval(EvalArgs),
    /// Inspect or seed representative works.
    #[command(subcommand)]
    Works(WorksCommand),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Query text.
    #[arg(required_unless_present = "file")]
    pub query: Option<String>,
    /// Read the query text from a file.
    #[arg(long, conflicts_with = "query")]
    pub file: Option<PathBuf>,
    #[arg(long, default_value = "query")]
    pub id: String,
    /// Judge the answer against this ground truth.
    #[arg(long)]
    pub ground_truth: Option<String>,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// Line-delimited `{"id", "question"}` records.
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Agents scored per sub-task; defaults to half the roster.
    #[arg(long)]
    pub l: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training examples from `build-dataset`.
    #[arg(long, required_unless_present = "planted", conflicts_with = "planted")]
    pub dataset: Option<PathBuf>,
    /// Train on a generated planted-cosine dataset instead.
    #[arg(long)]
    pub planted: bool,
    /// Size of the planted dataset.
    #[arg(long, default_value_t = 2000)]
    pub examples: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Loss history CSV; defaults to `<out>.loss.csv`.
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Line-delimited `{"id", "question", "ground_truth"}` records.
    #[arg(long)]
    pub queries: PathBuf,
    /// Also write the report as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum WorksCommand {
    /// Print each agent's works.
    List,
    /// Seed works from a training dataset.
    Import {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Per-agent counts and mean pairwise similarity.
    Stats,
}

impl Cli {
    fn overrides(&self) -> Overrides {
        Overrides {
            script: self.script.clone(),
            replay: self.replay.clone(),
            record: self.record.clone(),
            trace_dir: self.trace_dir.clone(),
            params: self.params.clone(),
            works: self.works.clone(),
        }
    }

    fn load_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        self.overrides().apply(&mut cfg);
        Ok(cfg)
    }
}

/// Runs a parsed command line. Errors are reported on `err`.
pub fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = cli.load_config().and_then(|cfg| match &cli.command {
        Command::Run(a) => cmd_run(&cfg, a, out, err),
        Command::BuildDataset(a) => cmd_build_dataset(&cfg, a, out, err),
        Command::Train(a) => cmd_train(&cfg, a, out),
        Command::Eval(a) => cmd_eval(&cfg, a, out),
        Command::Works(w) => cmd_works(&cfg, w, out),
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            EXIT_FAILURE
        }
    }
}

pub fn cmd_run(cfg: &RunConfig, args: &RunArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let text = match (&args.query, &args.file) {
        (Some(q), _) => q.clone(),
        (None, Some(f)) => std::fs::read_to_string(f).with_context(|| format!("cannot read {}", f.display()))?,
        (None, None) => bail!("no query given"),
    };
    let query = Query::new(args.id.clone(), text.trim())?;
    let rt = Runtime::build(cfg)?;
    let outcome = rt.engine.answer_query(&query, args.ground_truth.as_deref());
    let trace = &outcome.trace;
    for w in &trace.warnings {
        writeln!(err, "warning: {w}")?;
    }
    for e in &trace.errors {
        writeln!(err, "error [{}]: {}", e.stage, e.message)?;
    }
    let dir = rt.trace_dir.clone().unwrap_or_else(|| PathBuf::from("traces"));
    let path = trace
        .save(&dir)
        .with_context(|| format!("writing trace to {}", dir.display()))?;
    writeln!(err, "trace written to {}", path.display())?;
    if outcome.status != RunStatus::Failed {
        rt.persist()?;
    }
    if let Some(answer) = &outcome.answer {
        writeln!(out, "{answer}")?;
    }
    if let Some(v) = trace.judged_correct {
        writeln!(err, "judged {}", if v { "correct" } else { "incorrect" })?;
    }
    Ok(match outcome.status {
        RunStatus::Success => EXIT_OK,
        RunStatus::BestEffort => EXIT_BEST_EFFORT,
        RunStatus::Failed => EXIT_FAILURE,
    })
}

pub fn cmd_build_dataset(cfg: &RunConfig, args: &BuildArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    cfg.validate()?;
    let roster = cfg.roster()?;
    let gateway = setup::gateway(cfg)?;
    let prompts = setup::prompts(cfg)?;
    let queries = read_queries(&args.queries)?
        .iter()
        .enumerate()
        .map(|(i, q)| q.query(i))
        .collect::<Result<Vec<_>>>()?;
    let l = args.l.unwrap_or_else(|| cfg.routing.l_for(roster.len()));
    let planner = MetaPlanner::new(gateway.clone(), roster.clone(), prompts.clone());
    let pool = AgentPool::new(
        gateway.clone(),
        prompts.clone(),
        roster.clone(),
        setup::code_executor(cfg),
        setup::search(cfg)?,
    );
    let scorer = LlmScorer::new(gateway, prompts);
    let built = build_dataset(&queries, &planner, &pool, &scorer, Some(l))?;
    for (id, e) in &built.skipped {
        writeln!(err, "skipped query `{id}`: {e}")?;
    }
    write_examples(&args.out, &built.examples).with_context(|| format!("writing {}", args.out.display()))?;

    let mut per_agent: BTreeMap<&str, usize> = roster.iter().map(|a| (a.name.as_str(), 0)).collect();
    let mut histogram = [0usize; 9];
    for e in &built.examples {
        if let Some(a) = roster.by_description(&e.agent_description) {
            *per_agent.entry(a.name.as_str()).or_default() += 1;
        }
        histogram[usize::from(e.score.min(8))] += 1;
    }
    writeln!(
        out,
        "{} examples from {} queries ({} skipped), l = {l}",
        built.examples.len(),
        queries.len() - built.skipped.len(),
        built.skipped.len()
    )?;
    for a in roster.iter() {
        writeln!(out, "  {:<20} {}", a.name, per_agent[a.name.as_str()])?;
    }
    writeln!(out, "score histogram:")?;
    for (s, n) in histogram.iter().enumerate() {
        writeln!(out, "  {s}: {n}")?;
    }
    Ok(EXIT_OK)
}

fn loss_csv_path(args: &TrainArgs) -> PathBuf {
    args.loss_csv.clone().unwrap_or_else(|| {
        let mut p = args.out.clone().into_os_string();
        p.push(".loss.csv");
        PathBuf::from(p)
    })
}

pub fn cmd_train(cfg: &RunConfig, args: &TrainArgs, out: &mut dyn Write) -> Result<i32> {
    let tc = TrainConfig {
        batch_size: args.batch,
        learning_rate: args.lr,
        epochs: args.epochs,
        seed: args.seed,
    };
    let report: TrainReport = if args.planted {
        let pc = PlantedConfig {
            examples: args.examples,
            dim: cfg.embedder.dim,
            seed: args.seed,
            ..Default::default()
        };
        let data = planted_dataset(&pc);
        let model = RewardModel::new(&[2 * pc.dim, DEFAULT_HIDDEN[0], DEFAULT_HIDDEN[1], 1], args.seed)?;
        let w = Array1::from_elem(pc.examples, 1.0 / pc.examples as f64);
        train_features(model, data.features.view(), data.targets.view(), w.view(), &tc)?
    } else {
        let path = args.dataset.as_ref().context("--dataset is required")?;
        let examples = read_examples(path).with_context(|| format!("reading {}", path.display()))?;
        let embedding = setup::embedder(cfg)?;
        let r = train(&examples, embedding.embedder.clone(), &DEFAULT_HIDDEN, &tc)?;
        embedding.save_cache()?;
        r
    };
    report
        .model
        .save(&args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    let csv = loss_csv_path(args);
    report
        .write_csv(&csv)
        .with_context(|| format!("writing {}", csv.display()))?;
    let (first, last) = (report.initial(), report.last());
    writeln!(
        out,
        "epoch {:>3}  loss {:.6}  mse {:.6}",
        first.epoch, first.loss, first.mse
    )?;
    if last.epoch != first.epoch {
        writeln!(
            out,
            "epoch {:>3}  loss {:.6}  mse {:.6}",
            last.epoch, last.loss, last.mse
        )?;
    }
    writeln!(out, "parameters written to {}", args.out.display())?;
    Ok(EXIT_OK)
}

pub fn cmd_eval(cfg: &RunConfig, args: &EvalArgs, out: &mut dyn Write) -> Result<i32> {
    let items = read_queries(&args.queries)?;
    let rt = Runtime::build(cfg)?;
    let (report, traces) = evaluate_suite(&rt.engine, &items)?;
    if let Some(dir) = &rt.trace_dir {
        for t in &traces {
            t.save(dir)
                .with_context(|| format!("writing trace to {}", dir.display()))?;
        }
    }
    rt.persist()?;
    if let Some(path) = &args.report {
        std::fs::write(path, serde_json::to_string_pretty(&report)?)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    writeln!(out, "{report}")?;
    Ok(EXIT_OK)
}

fn works_path(cfg: &RunConfig) -> Result<&Path> {
    cfg.paths
        .works
        .as_deref()
        .context("no works store given: pass --works or set paths.works")
}

pub fn cmd_works(cfg: &RunConfig, cmd: &WorksCommand, out: &mut dyn Write) -> Result<i32> {
    let path = works_path(cfg)?;
    let roster = cfg.roster()?;
    let embedding = setup::embedder(cfg)?;
    let store = setup::works(cfg, embedding.embedder.clone(), &roster)?;
    match cmd {
        WorksCommand::List => {
            for agent in store.agent_names() {
                let works = store.works_of(&agent)?;
                writeln!(out, "{agent}:")?;
                if works.is_empty() {
                    writeln!(out, "  no works")?;
                }
                for w in works {
                    writeln!(out, "  - {}", w.task_text)?;
                }
            }
        }
        WorksCommand::Import { dataset } => {
            let examples = read_examples(dataset).with_context(|| format!("reading {}", dataset.display()))?;
            let added = store.init_from_training(&examples, &roster, cfg.routing.accept_threshold)?;
            store
                .save(path)
                .with_context(|| format!("writing {}", path.display()))?;
            writeln!(out, "imported {added} works into {}", path.display())?;
            for agent in store.agent_names() {
                writeln!(out, "  {:<20} {}", agent, store.works_of(&agent)?.len())?;
            }
        }
        WorksCommand::Stats => {
            writeln!(out, "{:<20} {:>6} {:>10}", "agent", "works", "mean sim")?;
            for agent in store.agent_names() {
                let n = store.works_of(&agent)?.len();
                let sim = match store.mean_pairwise_similarity(&agent)? {
                    Some(s) => format!("{s:.4}"),
                    None => "n/a".into(),
                };
                writeln!(out, "{agent:<20} {n:>6} {sim:>10}")?;
            }
        }
    }
    embedding.save_cache()?;
    Ok(EXIT_OK)
}
