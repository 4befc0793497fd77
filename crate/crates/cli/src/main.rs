mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use vlga::baselines::{summarize, BudgetedRun, RunSetup, Strategy};
use vlga::config::{EvaluatorKind, RunConfig};
use vlga::engine::{self, SearchState, StopReason};
use vlga::journal::{EventKind, JournalEvent};
use vlga::report;
use vlga::{ConfigError, EngineError, Evaluator, ExternalEvaluator, SurrogateEvaluator};

use output::RunFiles;

const EXIT_CONFIG: u8 = 1;
const EXIT_EVALUATOR: u8 = 2;
const EXIT_INTERRUPTED: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "vlga", version, about = "Variable-length genetic search over convolutional network hyperparameters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the phased search and write its journal, checkpoint and results.
    Search(SearchArgs),
    /// Run strategies under an equal budget and summarize their best fitness.
    Compare(CompareArgs),
    /// Print the exact number of chromosomes per phase.
    Space(SpaceArgs),
}

#[derive(Args, Debug)]
struct EvaluatorArgs {
    /// Config file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = ["surrogate", "external"])]
    evaluator: Option<String>,
    /// Shell command that starts an evaluator worker.
    #[arg(long, env = "VLGA_WORKER_CMD")]
    worker_cmd: Option<String>,
}

#[derive(Args, Debug)]
struct SearchArgs {
    #[command(flatten)]
    eval: EvaluatorArgs,
    #[arg(long)]
    out: PathBuf,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Optional cost budget in training epochs.
    #[arg(long)]
    budget: Option<f64>,
    /// Continue from the checkpoint in the output directory.
    #[arg(long)]
    resume: bool,
    /// Stop with a checkpoint after this many generations (for scheduled jobs).
    #[arg(long)]
    halt_after_generations: Option<usize>,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[command(flatten)]
    eval: EvaluatorArgs,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated strategies: vlga, random, classical, mutation.
    #[arg(long, value_delimiter = ',')]
    strategies: Option<Vec<Strategy>>,
    /// Number of seeds, run as 0..N.
    #[arg(long)]
    seeds: Option<u64>,
    /// Cost budget per run, in training epochs.
    #[arg(long)]
    budget: Option<f64>,
}

#[derive(Args, Debug)]
struct SpaceArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated phase indices; defaults to 0 through 6.
    #[arg(long, value_delimiter = ',')]
    phases: Vec<usize>,
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
enum Failure {
    Config(anyhow::Error),
    Evaluator(anyhow::Error),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        if e.downcast_ref::<ConfigError>().is_some() {
            return Failure::Config(e);
        }
        match e.downcast_ref::<EngineError>() {
            Some(EngineError::Config(_)) => Failure::Config(e),
            Some(EngineError::Evaluator(_)) => Failure::Evaluator(e),
            _ => Failure::Other(e),
        }
    }
}

fn load_config(path: Option<&Path>) -> anyhow::Result<RunConfig> {
    match path {
        Some(p) => Ok(RunConfig::load(p)?),
        None => Ok(RunConfig::default()),
    }
}

fn configure(args: &EvaluatorArgs) -> anyhow::Result<RunConfig> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(kind) = &args.evaluator {
        cfg.evaluator = kind.parse::<EvaluatorKind>()?;
    }
    if let Some(cmd) = &args.worker_cmd {
        cfg.worker.command = cmd.clone();
    }
    if cfg.evaluator == EvaluatorKind::External && cfg.worker.command.trim().is_empty() {
        return Err(ConfigError::InvalidSetting {
            field: "worker.command",
            reason: "the external evaluator needs a worker command (--worker-cmd or VLGA_WORKER_CMD)".into(),
        }
        .into());
    }
    Ok(cfg)
}

fn build_evaluator(cfg: &RunConfig) -> Box<dyn Evaluator<f64>> {
    match cfg.evaluator {
        EvaluatorKind::Surrogate => Box::new(SurrogateEvaluator::new(cfg.surrogate.clone())),
        EvaluatorKind::External => Box::new(ExternalEvaluator::new(cfg.worker_settings())),
    }
}

fn interrupt_flag() -> Arc<AtomicBool> {
    let flag = Arc::new(AtomicBool::new(false));
    let handler = flag.clone();
    if let Err(e) = ctrlc::set_handler(move || handler.store(true, Ordering::SeqCst)) {
        log::warn!("cannot install interrupt handler: {e}");
    }
    flag
}

fn search(args: SearchArgs) -> Result<ExitCode, Failure> {
    let mut cfg = configure(&args.eval)?;
    if let Some(seed) = args.seed {
        cfg.ga.master_seed = seed;
    }
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let evaluator = build_evaluator(&cfg);
    let mut ga = engine::VariableLengthGa::new(cfg.ga.clone(), cfg.search_space.clone(), evaluator.as_ref())
        .map_err(anyhow::Error::from)?
        .with_dataset(cfg.dataset);
    if let Some(b) = args.budget {
        ga = ga.with_budget(b);
    }
    let interrupted = interrupt_flag();

    let (state, files) = if args.resume {
        let path = args.out.join(output::CHECKPOINT);
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let state = SearchState::from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
        let files = RunFiles::reopen(&args.out, state.next_seq, interrupted).context("reopening journal")?;
        (state, files)
    } else {
        (ga.initial_state(), RunFiles::create(&args.out, interrupted).context("creating journal")?)
    };
    let mut files = files.halt_after(args.halt_after_generations);

    let outcome = ga.resume(state, &mut files).map_err(anyhow::Error::from)?;
    if outcome.stop == StopReason::Interrupted {
        eprintln!("interrupted; resume with --resume --out {}", args.out.display());
        return Ok(ExitCode::from(EXIT_INTERRUPTED));
    }

    fs::write(args.out.join(output::PHASE_FITNESS), report::phase_fitness_csv(&outcome.history))
        .context("writing phase fitness")?;
    let Some(best) = outcome.best.clone() else {
        eprintln!("no individual was evaluated");
        return Ok(ExitCode::SUCCESS);
    };
    let (final_best, error) = ga.finalize(&best, cfg.ga.final_epochs);
    let event = JournalEvent {
        seq: outcome.state.next_seq,
        timestamp_ms: vlga::journal::now_ms(),
        kind: EventKind::Finalized { best: final_best.clone(), error: error.clone() },
    };
    files.append(&event).context("writing journal")?;
    fs::write(args.out.join(output::BEST_CHROMOSOME), final_best.chromosome.canonical_json())
        .context("writing best chromosome")?;
    let graph = vlga::ArchitectureGraph::decode(&final_best.chromosome, cfg.dataset.input_shape, cfg.dataset.num_classes)
        .map_err(anyhow::Error::from)?;
    fs::write(args.out.join(output::BEST_GRAPH), graph.to_json()).context("writing best graph")?;

    println!("stopped: {:?}", outcome.stop);
    println!("phases: {}", outcome.history.len());
    println!("best phase-{} fitness: {}", best.chromosome.phase(), best.fitness().unwrap_or(0.0));
    match error {
        Some(e) => println!("final training failed: {e}"),
        None => println!("after final training: {}", final_best.fitness().unwrap_or(0.0)),
    }
    println!("cost spent: {}", outcome.ledger.spent);
    Ok(ExitCode::SUCCESS)
}

fn compare(args: CompareArgs) -> Result<ExitCode, Failure> {
    let mut cfg = configure(&args.eval)?;
    if let Some(s) = args.strategies {
        cfg.compare.strategies = s;
    }
    if let Some(n) = args.seeds {
        cfg.compare.seeds = (0..n).collect();
    }
    if let Some(b) = args.budget {
        cfg.compare.budget_units = b;
    }
    cfg.validate().map_err(anyhow::Error::from)?;
    if cfg.compare.strategies.is_empty() || cfg.compare.seeds.is_empty() {
        return Err(anyhow::Error::from(ConfigError::InvalidSetting {
            field: "compare",
            reason: "needs at least one strategy and one seed".into(),
        })
        .into());
    }
    let traces = args.out.join("traces");
    fs::create_dir_all(&traces).with_context(|| format!("creating {}", traces.display()))?;
    let evaluator = build_evaluator(&cfg);

    let mut runs: Vec<BudgetedRun<f64>> = Vec::new();
    for &strategy in &cfg.compare.strategies {
        for &seed in &cfg.compare.seeds {
            let setup = RunSetup {
                space: &cfg.search_space,
                ga: &cfg.ga,
                baselines: &cfg.baselines,
                dataset: cfg.dataset,
                evaluator: evaluator.as_ref(),
                budget: cfg.compare.budget_units,
                seed,
            };
            let run = setup.run(strategy).map_err(anyhow::Error::from)?;
            let name = format!("{}_seed{}.csv", strategy.short_name(), seed);
            fs::write(traces.join(name), report::trace_csv(&run)).context("writing trace")?;
            runs.push(run);
        }
    }
    let summaries: Vec<_> = cfg.compare.strategies.iter().map(|&s| summarize(s, &runs)).collect();
    fs::write(args.out.join("runs.csv"), report::runs_csv(&runs)).context("writing runs")?;
    fs::write(args.out.join("summary.csv"), report::summary_csv(&summaries)).context("writing summary")?;

    println!("{:<10} {:>5} {:>8} {:>8} {:>8} {:>8} {:>8}", "strategy", "runs", "mean", "sd", "min", "max", "evals");
    for s in &summaries {
        println!(
            "{:<10} {:>5} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.1}",
            s.strategy.short_name(),
            s.runs,
            s.mean,
            s.std_dev,
            s.min,
            s.max,
            s.mean_evaluations
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn space(args: SpaceArgs) -> Result<ExitCode, Failure> {
    let cfg = load_config(args.config.as_deref())?;
    let phases = if args.phases.is_empty() { (0..=6).collect() } else { args.phases };
    report::write_rows(std::io::stdout().lock(), &report::space_rows(&cfg.search_space, phases))
        .context("writing table")?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Search(a) => search(a),
        Command::Compare(a) => compare(a),
        Command::Space(a) => space(a),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Evaluator(e)) => {
            eprintln!("evaluator failure: {e:#}");
            ExitCode::from(EXIT_EVALUATOR)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
