//! Driver for next-word recommendation experiments: corpus preparation,
//! model training, mixture tuning, evaluation and an interactive session.

pub mod commands;
pub mod config;
pub mod error;
pub mod models;
pub mod repl;
pub mod synth;
pub mod workdir;

use std::io::Write;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use crate::config::{ExperimentConfig, ModelKind, Target, WORKDIR_ENV};
use crate::error::UsageError;
use crate::workdir::{write_atomic, Workdir};

#[derive(Debug, Parser)]
#[command(name = "nextword", version, about = "Next-word recommendation experiments")]
pub struct Cli {
    /// Experiment config file (`key = value` lines).
    #[arg(short, long, global = true)]
    pub config: Option<PathBuf>,
    /// Base profile: desk or paper.
    #[arg(long, global = true)]
    pub profile: Option<String>,
    /// Experiment directory; overrides the config and the environment.
    #[arg(short, long, global = true)]
    pub workdir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Any config key, e.g. `--set nlm.dim=32`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the vocabulary, split manifests and query files.
    Prepare,
    /// Train one model and write it under models/.
    Train {
        #[arg(value_enum)]
        kind: ModelKind,
    },
    /// Grid-tune mixture weights on the validation queries.
    Tune {
        /// Mixture such as nlm+ngram or nlm+cbow+ngram.
        combination: String,
    },
    /// Score models and mixtures; writes eval/<queries>/.
    Eval {
        /// Models or mixtures; defaults to the eval.models config key.
        targets: Vec<String>,
        /// Query set to score: valid or test.
        #[arg(long, default_value = "test")]
        queries: String,
    },
    /// Interactive top-K recommendations from a model or mixture.
    Recommend {
        target: String,
        #[arg(short)]
        k: Option<usize>,
    },
    /// Print the evaluation tables and tuned weights.
    Report {
        #[arg(long, default_value = "test")]
        queries: String,
    },
    /// prepare, train, tune and eval in one go.
    Run,
    /// Write the synthetic sparse corpus.
    Synth {
        #[arg(short, long)]
        out: PathBuf,
    },
}

/// Profile defaults, then the config file, the workdir environment
/// variable and finally command-line flags.
pub fn resolve_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path, cli.profile.as_deref())?,
        None => ExperimentConfig::parse("", cli.profile.as_deref())?,
    };
    if let Ok(dir) = std::env::var(WORKDIR_ENV) {
        if !dir.is_empty() {
            cfg.set("workdir", &dir)?;
        }
    }
    for pair in &cli.overrides {
        cfg.set_pair(pair)?;
    }
    if let Some(dir) = &cli.workdir {
        cfg.set("workdir", &dir.to_string_lossy())?;
    }
    if let Some(c) = &cli.corpus {
        cfg.set("corpus", &c.to_string_lossy())?;
    }
    if let Some(seed) = cli.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    Ok(cfg)
}

fn query_part(s: &str) -> Result<&str> {
    match s {
        "valid" | "test" => Ok(s),
        _ => Err(UsageError(format!("--queries must be valid or test, got {s:?}")).into()),
    }
}

pub fn execute<R: std::io::BufRead, W: Write>(cli: &Cli, input: R, mut out: W) -> Result<()> {
    let cfg = resolve_config(cli)?;
    let wd = Workdir::new(cfg.workdir());
    let mut log = |msg: &str| eprintln!("{msg}");
    match &cli.command {
        Command::Prepare => {
            let s = commands::prepare(&cfg, &wd)?;
            writeln!(
                out,
                "{} train / {} valid / {} test sequences; {} vocabulary entries; {} valid and {} test queries",
                s.sequences[0], s.sequences[1], s.sequences[2], s.vocabulary, s.queries[0], s.queries[1]
            )?;
        }
        Command::Train { kind } => {
            let report = commands::train(&cfg, &wd, *kind)?;
            if let Some(r) = report {
                for (e, loss) in r.epoch_losses.iter().enumerate() {
                    writeln!(out, "epoch {}\tloss {loss:.6}", e + 1)?;
                }
            }
            writeln!(out, "wrote {}", wd.model(kind.name()).display())?;
        }
        Command::Tune { combination } => {
            let c = config::Combination::parse(combination)?;
            let r = commands::tune(&cfg, &wd, &c)?;
            write!(out, "{}", r.to_tsv())?;
            writeln!(
                out,
                "best {}: {} = {:.6}",
                c.name(),
                r.best_weights().to_tsv().replace('\t', " "),
                r.objective.of(r.best_report())
            )?;
        }
        Command::Eval { targets, queries } => {
            let part = query_part(queries)?;
            let targets = if targets.is_empty() {
                cfg.eval_targets()?
            } else {
                targets
                    .iter()
                    .map(|t| Target::parse(t).map_err(Into::into))
                    .collect::<Result<Vec<_>>>()?
            };
            let result = commands::eval(&cfg, &wd, &targets, part)?;
            for name in &result.untuned {
                log(&format!("{name}: no tuned weights, using configured defaults"));
            }
            write!(out, "{}", nextword::eval::format_table(&result.rows))?;
        }
        Command::Recommend { target, k } => {
            let target = Target::parse(target)?;
            let vocab = commands::load_vocab(&wd)?;
            let mut cache = models::ModelCache::new(&wd, &vocab);
            let (model, weights) = models::build_target(&cfg, &wd, &mut cache, &target)?;
            if let Some((w, source)) = weights {
                let how = match source {
                    models::WeightSource::Tuned => "tuned",
                    models::WeightSource::Default => "default",
                };
                writeln!(out, "{} weights ({how}): {}", target.name(), w.to_tsv().replace('\t', " "))?;
            }
            let k = match k {
                Some(k) => *k,
                None => cfg.recommend_k()?,
            };
            if k == 0 {
                return Err(UsageError("k must be at least 1".into()).into());
            }
            repl::run_session(model.as_ref(), &vocab, k, input, out)?;
        }
        Command::Report { queries } => {
            write!(out, "{}", commands::report(&wd, query_part(queries)?)?)?;
        }
        Command::Run => commands::run(&cfg, &wd, &mut log)?,
        Command::Synth { out: path } => {
            let text = synth::generate(&cfg.synth_params()?)?;
            write_atomic(path, text.as_bytes())
                .with_context(|| format!("writing synthetic corpus {}", path.display()))?;
            writeln!(out, "wrote {}", path.display())?;
        }
    }
    Ok(())
}
