use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use vislit::{Error, Pipeline, RunConfig, Selection};

#[derive(Parser)]
#[command(name = "vislit", about = "Visualization literacy test runs against multimodal LLMs")]
struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Experiment id (e1), condition tag (vis:choices:ctx) or both (e1:vis:choices:ctx).
    #[arg(long, global = true)]
    condition: Option<String>,
    /// Only this backend (`llm_id`).
    #[arg(long, global = true)]
    backend: Option<String>,
    /// Replace every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Skip stages whose manifest shows unchanged inputs.
    #[arg(long, global = true)]
    resume: bool,
    /// Output root, overriding the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Generate and render the charts.
    Gen,
    /// Build the question bank.
    Bank,
    /// Execute trials.
    Run,
    /// Score trial records.
    Score,
    /// Accuracy, costs and the pooled logistic analysis.
    Analyze,
    /// Tables, figures and HTML summaries.
    Report,
    /// All stages in order.
    All,
}

fn run(cli: &Cli) -> vislit::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.override_seed(s);
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    cfg.validate()?;
    let mut p = Pipeline::new(cfg);
    p.resume = cli.resume;
    p.select = Selection { condition: cli.condition.clone(), backend: cli.backend.clone() };
    match cli.cmd {
        Cmd::Gen => p.cmd_generate(),
        Cmd::Bank => p.cmd_bank(),
        Cmd::Run => p.cmd_run().map(|_| ()),
        Cmd::Score => p.cmd_score(),
        Cmd::Analyze => p.cmd_analyze(),
        Cmd::Report => p.cmd_report(),
        Cmd::All => p.cmd_all(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let e: Error = e;
            eprintln!("{}", serde_json::to_string(&e.summary()).unwrap_or_else(|_| e.to_string()));
            ExitCode::from(2)
        }
    }
}
