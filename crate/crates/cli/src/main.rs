use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use densitylens_cli::config::RunConfig;
use densitylens_cli::curate::{curate, LineOperator};
use densitylens_cli::stages::Context;
use densitylens_cli::{run_pipeline, run_pls_table, run_report_only, run_stage, CliError};

#[derive(Parser)]
#[command(
    name = "densitylens",
    version,
    about = "Urban-density perception analytics from POI reviews"
)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the configured one.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage and write the report bundle.
    Run,
    /// Load and validate POIs, reviews and CBG factors.
    Ingest,
    /// Keep reviews that mention a lexicon entry.
    Filter,
    /// Grow the lexicon interactively from frequent terms.
    Curate {
        /// Candidates shown per page
        #[arg(long, default_value_t = 20)]
        page_size: usize,
        /// Number of candidates offered in total
        #[arg(long, default_value_t = 200)]
        limit: usize,
        /// Where to write the revised lexicon (default `<out>/lexicon.txt`).
        #[arg(long)]
        lexicon_out: Option<PathBuf>,
    },
    /// Fit TF-IDF and the configured classifier on the labeled reviews.
    Train,
    /// Label flagged reviews with the trained model or external predictions.
    Classify,
    /// Score density-related sentences and reviews.
    Sentiment,
    /// Roll review sentiment up to POIs and CBGs.
    Aggregate,
    /// Salience-valence tables only.
    Lsva,
    /// Category tests, factor correlations and salience-valence tables.
    Stats,
    /// PLS regression of CBG sentiment on the factors, or of any table.
    Pls {
        /// Plain CSV table to regress instead of the pipeline outputs.
        #[arg(long, requires = "response")]
        table: Option<PathBuf>,
        /// Response column of `--table`.
        #[arg(long)]
        response: Option<String>,
        /// Largest component count considered (default from config, else 10)
        #[arg(long)]
        max_components: Option<usize>,
        /// Cross-validation folds (default from config, else 10)
        #[arg(long)]
        folds: Option<usize>,
    },
    /// Collate report.md from existing outputs.
    Report,
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Validation("--config is required for this command".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: Option<&RunConfig>) -> Result<PathBuf, CliError> {
    match cfg {
        Some(c) => c.out_dir(cli.out.as_deref()),
        None => cli
            .out
            .clone()
            .ok_or_else(|| CliError::Validation("--out is required".into())),
    }
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Run => {
            let cfg = load_config(cli)?;
            let out = out_dir(cli, Some(&cfg))?;
            run_pipeline(&cfg, &out)?;
            eprintln!("report bundle written to {}", out.display());
        }
        Command::Pls {
            table: Some(table),
            response,
            max_components,
            folds,
        } => {
            let cfg = cli.config.as_ref().map(|_| load_config(cli)).transpose()?;
            let out = out_dir(cli, cfg.as_ref())?;
            let mut pls = cfg.as_ref().map(|c| c.pls.clone()).unwrap_or_default();
            if let Some(k) = max_components {
                pls.max_components = *k;
            }
            if let Some(f) = folds {
                pls.folds = *f;
            }
            let seed = cli.seed.or(cfg.as_ref().map(|c| c.seed)).unwrap_or(0);
            let response = response.as_deref().expect("clap enforces --response");
            run_pls_table(table, response, &out, seed, &pls)?;
        }
        Command::Report => {
            let cfg = cli.config.as_ref().map(|_| load_config(cli)).transpose()?;
            let out = out_dir(cli, cfg.as_ref())?;
            run_report_only(&out)?;
        }
        Command::Curate {
            page_size,
            limit,
            lexicon_out,
        } => {
            if !std::io::stdin().is_terminal() {
                return Err(CliError::Validation(
                    "curate is interactive and needs a terminal on stdin".into(),
                ));
            }
            let cfg = load_config(cli)?;
            cfg.validate()?;
            let out = out_dir(cli, Some(&cfg))?;
            let ctx = Context {
                config: &cfg,
                out: out.clone(),
                seed: cfg.seed,
            };
            let stdin = std::io::stdin();
            let mut op = LineOperator {
                input: stdin.lock(),
                output: std::io::stderr(),
            };
            let (path, accepted) = curate(&ctx, &mut op, *page_size, *limit, lexicon_out.clone())
                .map_err(|e| CliError::Stage {
                stage: "curate".into(),
                message: format!("{e:#}"),
            })?;
            eprintln!(
                "{accepted} entries added; lexicon written to {}",
                path.display()
            );
        }
        other => {
            let name = match other {
                Command::Ingest => "ingest",
                Command::Filter => "filter",
                Command::Train => "train",
                Command::Classify => "classify",
                Command::Sentiment => "sentiment",
                Command::Aggregate => "aggregate",
                Command::Lsva => "lsva",
                Command::Stats => "stats",
                Command::Pls {
                    max_components,
                    folds,
                    ..
                } => {
                    let mut cfg = load_config(cli)?;
                    if let Some(k) = max_components {
                        cfg.pls.max_components = *k;
                    }
                    if let Some(f) = folds {
                        cfg.pls.folds = *f;
                    }
                    let out = out_dir(cli, Some(&cfg))?;
                    run_stage(&cfg, &out, "pls")?;
                    return Ok(());
                }
                Command::Run | Command::Report | Command::Curate { .. } => {
                    unreachable!("handled above")
                }
            };
            let cfg = load_config(cli)?;
            let out = out_dir(cli, Some(&cfg))?;
            run_stage(&cfg, &out, name)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("densitylens: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
