use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use synthmix::orchestrator::{
    emit_report, generation_budget, plan_runs, BackendKind, ClassifierKind, ExecuteOptions, ExecutionSummary,
    Executor, ExperimentConfig, OrchestratorError, RunKind, RunRecord, RunStatus,
};

#[derive(Parser)]
#[command(name = "synthmix", version, about = "Synthetic training data mixing experiments")]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, short, global = true, default_value = "experiment.toml")]
    config: PathBuf,
    /// Override the backend named in the config.
    #[arg(long, global = true, value_enum)]
    backend: Option<BackendKind>,
    /// Override the master seed.
    #[arg(long, global = true)]
    master_seed: Option<u64>,
    /// Reuse completed pools and run stages found on disk.
    #[arg(long, global = true)]
    resume: bool,
    /// Concurrent runs (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Log level filter, e.g. `info` or `synthmix=debug`.
    #[arg(long, global = true, default_value = "warn")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the run plan and the generation budget without calling any backend.
    Plan,
    /// Generate the synthetic pools.
    Generate,
    /// Generate pools and materialize every run's training set.
    Mix,
    /// Mix and train; stops before evaluation.
    Train,
    /// Evaluate trained runs, finishing any earlier stage still missing.
    Evaluate,
    /// Classify the evaluation sets directly with the configured chat model.
    ClassifyLlm,
    /// Run the whole grid end to end.
    RunMatrix,
    /// Summarize the results files into tables.
    Report,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, OrchestratorError> {
    let mut config = ExperimentConfig::load(&cli.config)?;
    if let Some(seed) = cli.master_seed {
        config.master_seed = seed;
    }
    if let Some(backend) = cli.backend {
        config.backend = backend;
    }
    Ok(config)
}

fn print_summary(summary: &ExecutionSummary) {
    println!(
        "runs: {} evaluated, {} trained, {} generated, {} skipped, {} failed",
        summary.count(RunStatus::Evaluated),
        summary.count(RunStatus::Trained),
        summary.count(RunStatus::Generated),
        summary.count(RunStatus::Skipped),
        summary.count(RunStatus::Failed),
    );
    println!(
        "pools: {} generated, {} reused; generation calls: {} planned + {} re-requests, {} sent to backend; classification calls sent: {}",
        summary.pools_generated,
        summary.pools_reused,
        summary.planned_generation_calls,
        summary.rerequests,
        summary.generation_requests,
        summary.classification_requests,
    );
    for (id, err) in &summary.failures {
        eprintln!("failed: {id}: {err}");
    }
}

fn run(cli: &Cli) -> Result<i32, OrchestratorError> {
    let config = load_config(cli)?;
    let study_dir = config.study_dir();
    let runs = plan_runs(&config)?;
    let mut options = ExecuteOptions {
        resume: cli.resume,
        jobs: cli.jobs,
        stop_after: None,
    };
    let trainable = |r: &RunRecord| r.kind != RunKind::Prompting;

    let selected: Vec<RunRecord> = match cli.command {
        Command::Report => {
            let report = emit_report(&study_dir, config.diff_aggregation)?;
            for note in &report.notes {
                eprintln!("note: {note}");
            }
            for file in &report.files {
                println!("wrote {}", file.display());
            }
            return Ok(0);
        }
        Command::Plan => {
            let executor = Executor::from_config(config, Some(BackendKind::Mock))?;
            let data = executor.prepare()?;
            let specs = executor.pool_specs(&data);
            for run in &runs {
                println!("{}\t{:?}", run.id(), run.kind);
            }
            println!(
                "{} runs; {} synthetic pools; {} generation calls at batch size {}",
                runs.len(),
                specs.len(),
                generation_budget(&specs, executor.config.generation.batch_size),
                executor.config.generation.batch_size
            );
            return Ok(0);
        }
        Command::Generate => {
            let executor = Executor::from_config(config, None)?;
            let data = executor.prepare()?;
            let specs = executor.pool_specs(&data);
            let mut summary = ExecutionSummary::default();
            executor.build_pools(&data, &specs, cli.resume, &mut summary);
            summary.generation_requests = executor.generation_gateway().stats().requests;
            print_summary(&summary);
            return Ok(summary.exit_code());
        }
        Command::Mix => {
            options.stop_after = Some(RunStatus::Generated);
            runs.into_iter().filter(trainable).collect()
        }
        Command::Train => {
            options.stop_after = Some(RunStatus::Trained);
            runs.into_iter()
                .filter(|r| trainable(r) && r.classifier == ClassifierKind::Linear)
                .collect()
        }
        Command::Evaluate => {
            options.resume = true;
            runs
        }
        Command::ClassifyLlm => {
            let prompting: Vec<RunRecord> = runs.into_iter().filter(|r| r.kind == RunKind::Prompting).collect();
            if prompting.is_empty() {
                return Err(OrchestratorError::Config(
                    "no llm_prompting classifier in `classifiers`".into(),
                ));
            }
            prompting
        }
        Command::RunMatrix => runs,
    };
    let executor = Executor::from_config(config, None)?;
    let summary = executor.execute(selected, &options)?;
    print_summary(&summary);
    Ok(summary.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::new(&cli.log))
        .with_writer(std::io::stderr)
        .init();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e @ OrchestratorError::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
