use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use focusmeter::corpus::Variant;
use focusmeter::Result;
use focusmeter_cli::config::RunConfig;
use focusmeter_cli::pipeline;

/// Funneling vs. focusing measures for classroom transcripts.
#[derive(Parser)]
#[command(name = "focusmeter", version)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides paths.out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// unfiltered or filtered.
    #[arg(long, global = true)]
    variant: Option<Variant>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Aggregate judgments into gold scores for both variants.
    Gold,
    /// Fit phrase, TF-IDF and forwards-range models.
    Fit,
    /// Score every exchange with the fitted models and lexical features.
    Score,
    /// Correlate measures with gold and regress outcomes on them.
    Evaluate,
    /// Generate a seeded synthetic corpus and a config pointing at it.
    Synth {
        #[arg(long)]
        n_exchanges: Option<usize>,
        #[arg(long)]
        focusing_fraction: Option<f64>,
    },
    /// Run gold, fit, score and evaluate, then print the report.
    Report,
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(out) = cli.out {
        cfg.paths.out = out;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(v) = cli.variant {
        cfg.variant = v;
    }
    cfg.validate()?;

    match cli.command {
        Command::Gold => {
            let s = pipeline::cmd_gold(&cfg)?;
            for (v, n) in &s.counts {
                println!("{v}: {n} examples");
            }
        }
        Command::Fit => {
            let m = pipeline::cmd_fit(&cfg)?;
            println!(
                "fitted on {} exchanges ({} replies): {} range terms",
                m.n_exchanges, m.n_replies, m.n_range_terms
            );
        }
        Command::Score => {
            let n = pipeline::cmd_score(&cfg)?;
            println!("scored {n} exchanges");
        }
        Command::Evaluate => print!("{}", pipeline::cmd_evaluate(&cfg)?.to_text()),
        Command::Synth {
            n_exchanges,
            focusing_fraction,
        } => {
            if let Some(n) = n_exchanges {
                cfg.synth.n_exchanges = n;
            }
            if let Some(f) = focusing_fraction {
                cfg.synth.focusing_fraction = f;
            }
            let path = pipeline::cmd_synth(&cfg)?;
            println!("wrote {}", path.display());
        }
        Command::Report => print!("{}", pipeline::cmd_report(&cfg)?.to_text()),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 1 } else { 2 })
        }
    }
}
