use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use graphsent_cli::dataset::load_corpus_and_splits;
use graphsent_cli::stages::{evaluate, glmm, ingest, stack, train};
use graphsent_cli::{exit_code, Dataset, InputError, LabelSource, PipelineConfig};
use graphsent_core::corpus::load_messages;

/// Graph-attention sentiment pipeline.
#[derive(Parser)]
#[command(name = "graphsent", version)]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Comma-separated penalties to cross-validate before training.
    #[arg(long, global = true, value_delimiter = ',')]
    lambda_grid: Option<Vec<f64>>,
    /// Gauss-Hermite nodes for the mixed model; 1 is Laplace.
    #[arg(long, global = true)]
    quad_nodes: Option<usize>,
    #[arg(long, global = true, value_enum)]
    labels_from: Option<LabelSource>,
    /// Aggregated counts CSV for `glmm`, bypassing the predictions.
    #[arg(long, global = true)]
    rows: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Validate inputs and summarise them per school-year.
    Ingest,
    /// Train the GAT and write a checkpoint.
    Train,
    /// Fit cutoffs and the meta-model and label every message.
    Stack,
    /// Score the three models on the test set.
    Evaluate,
    /// Fit the mixed models on labeled counts.
    Glmm,
    /// Run every stage in order.
    Pipeline,
}

impl Cli {
    fn config(&self) -> anyhow::Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.output {
            cfg.output = o.clone();
        }
        if let Some(g) = &self.lambda_grid {
            cfg.training.lambda_grid = g.clone();
        }
        if let Some(q) = self.quad_nodes {
            if q == 0 {
                anyhow::bail!(InputError("--quad-nodes must be at least 1".into()));
            }
            cfg.glmm.quad_nodes = q;
        }
        if let Some(l) = self.labels_from {
            cfg.glmm.labels_from = l;
        }
        if let Some(r) = &self.rows {
            cfg.paths.rows = Some(r.clone());
        }
        Ok(cfg)
    }
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let cfg = cli.config()?;
    match cli.command {
        Command::Ingest => {
            let ds = Dataset::load(&cfg)?;
            print!("{}", ingest::run(&cfg, &ds)?);
        }
        Command::Train => {
            let ds = Dataset::load(&cfg)?;
            train::run(&cfg, &ds)?;
        }
        Command::Stack => {
            let ds = Dataset::load(&cfg)?;
            stack::run(&cfg, &ds)?;
        }
        Command::Evaluate => {
            let (corpus, splits) = load_corpus_and_splits(&cfg)?;
            print!("{}", evaluate::run(&cfg, &corpus, &splits)?);
        }
        Command::Glmm => {
            let corpus = match (&cfg.paths.rows, &cfg.paths.messages) {
                (None, Some(p)) => Some(load_messages(p)?),
                _ => None,
            };
            let out = glmm::run(&cfg, corpus.as_ref(), cfg.glmm.labels_from, cfg.paths.rows.as_deref())?;
            print!("{}", out.report);
        }
        Command::Pipeline => {
            let ds = Dataset::load(&cfg)?;
            print!("{}", ingest::run(&cfg, &ds)?);
            train::run(&cfg, &ds).context("train stage")?;
            stack::run(&cfg, &ds).context("stack stage")?;
            print!("{}", evaluate::run(&cfg, &ds.corpus, &ds.splits)?);
            let primary = cfg.glmm.labels_from;
            let out = glmm::run(&cfg, Some(&ds.corpus), primary, None)?;
            print!("{}", out.report);
            if primary != LabelSource::Gat {
                glmm::run(&cfg, Some(&ds.corpus), LabelSource::Gat, None).context("GAT-label sensitivity run")?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GRAPHSENT_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
