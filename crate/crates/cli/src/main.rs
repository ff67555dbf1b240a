use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use kgfm::config::{file_overrides, RunConfig};
use kgfm::pipeline;
use kgfm::registry::SystemRegistry;
use kgfm::synth::{write_corpus, SynthConfig};

/// Knowledge-graph initialized factorization machines: prepare data, train,
/// recommend, evaluate and inspect feature-aligned latent factors.
#[derive(Parser)]
#[command(name = "kgfm", version)]
struct Cli {
    /// Log progress (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dataset statistics after feature selection and filtering.
    Stats {
        #[command(flatten)]
        common: Common,
    },
    /// Ingest, filter, split and build TF-IDF profiles.
    Prepare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Feature-aligned initialization plus BPR training.
    Train {
        #[command(flatten)]
        stage: Stage,
        #[arg(long)]
        out: PathBuf,
    },
    /// Top-N lists for every user.
    Recommend {
        #[command(flatten)]
        stage: ModelStage,
        #[arg(long)]
        out: PathBuf,
    },
    /// Precision@N and nDCG@N on the held-out split.
    Evaluate {
        #[command(flatten)]
        stage: ModelStage,
        #[arg(long)]
        out: PathBuf,
    },
    /// Semantic Accuracy of the trained item vectors.
    Sa {
        #[command(flatten)]
        stage: ModelStage,
        #[arg(long)]
        out: PathBuf,
    },
    /// Removal-and-retrain robustness of the trained item vectors.
    Robustness {
        #[command(flatten)]
        stage: ModelStage,
        #[arg(long)]
        out: PathBuf,
    },
    /// Strongest features of an item, and why it was recommended to a user.
    Explain {
        #[command(flatten)]
        stage: ModelStage,
        #[arg(long)]
        item: String,
        #[arg(long)]
        user: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare two `key = value` reports.
    Compare { left: PathBuf, right: PathBuf },
    /// List the available recommender systems.
    Systems,
    /// Write a seeded synthetic corpus (interactions.tsv, triples.tsv).
    Generate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 60)]
        users: usize,
        #[arg(long, default_value_t = 40)]
        items: usize,
        #[arg(long, default_value_t = 4)]
        clusters: usize,
    },
}

#[derive(Args)]
struct Stage {
    /// Directory written by `prepare`.
    #[arg(long)]
    prepared: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ModelStage {
    /// Directory written by `prepare`.
    #[arg(long)]
    prepared: PathBuf,
    /// Model written by `train`; without it the model is trained in-process.
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Default)]
struct Common {
    /// Config file of `[section]` and `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    interactions: Option<String>,
    #[arg(long)]
    triples: Option<String>,
    /// Triples format: tsv or ntriples.
    #[arg(long)]
    format: Option<String>,
    /// `item_id \t iri` lines linking catalog ids to triple subjects.
    #[arg(long)]
    mapping: Option<String>,
    /// Feature family: cs, os or fs.
    #[arg(long)]
    setting: Option<String>,
    /// Maximum percentage of items allowed to lack a feature.
    #[arg(long)]
    threshold: Option<String>,
    #[arg(long)]
    iterations: Option<String>,
    #[arg(long)]
    knn: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// random or temporal.
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    relevance_threshold: Option<String>,
    /// batch or per-item.
    #[arg(long)]
    rob_mode: Option<String>,
    /// per-item or fixed:K.
    #[arg(long)]
    sa_mode: Option<String>,
    #[arg(long)]
    freeze_user_factors: bool,
    #[arg(long)]
    system: Option<String>,
    /// List length N.
    #[arg(long)]
    cutoff: Option<String>,
    /// Any other setting as `section.key=value`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    /// Config file entries first, then flags, so flags win.
    fn overrides(&self) -> Result<Vec<(String, String)>> {
        let mut out = match &self.config {
            Some(path) => file_overrides(path)?,
            None => Vec::new(),
        };
        let flags = [
            ("data.interactions", &self.interactions),
            ("data.triples", &self.triples),
            ("data.format", &self.format),
            ("data.mapping", &self.mapping),
            ("features.setting", &self.setting),
            ("features.threshold", &self.threshold),
            ("train.iterations", &self.iterations),
            ("recommend.knn", &self.knn),
            ("run.seed", &self.seed),
            ("split.mode", &self.split),
            ("split.relevance_threshold", &self.relevance_threshold),
            ("interpret.rob_mode", &self.rob_mode),
            ("interpret.sa_mode", &self.sa_mode),
            ("recommend.system", &self.system),
            ("recommend.cutoff", &self.cutoff),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                out.push((key.to_owned(), v.clone()));
            }
        }
        if self.freeze_user_factors {
            out.push(("train.freeze_user_factors".into(), "true".into()));
        }
        for entry in &self.set {
            let (k, v) = entry
                .split_once('=')
                .with_context(|| format!("--set expects KEY=VALUE, got `{entry}`"))?;
            out.push((k.trim().to_owned(), v.trim().to_owned()));
        }
        Ok(out)
    }

    fn fresh_config(&self) -> Result<RunConfig> {
        Ok(pipeline::apply_overrides(
            &RunConfig::default(),
            &[],
            &self.overrides()?,
        )?)
    }
}

fn run(cli: Cli) -> Result<String> {
    let text = match cli.command {
        Command::Stats { common } => pipeline::stats(&common.fresh_config()?)?,
        Command::Prepare { common, out } => pipeline::prepare(&common.fresh_config()?, &out)?,
        Command::Train { stage, out } => pipeline::train(&stage.prepared, &stage.common.overrides()?, &out)?,
        Command::Recommend { stage, out } => pipeline::recommend(
            &stage.prepared,
            stage.model.as_deref(),
            &stage.common.overrides()?,
            &out,
        )?,
        Command::Evaluate { stage, out } => pipeline::evaluate(
            &stage.prepared,
            stage.model.as_deref(),
            &stage.common.overrides()?,
            &out,
        )?,
        Command::Sa { stage, out } => pipeline::semantic_accuracy(
            &stage.prepared,
            stage.model.as_deref(),
            &stage.common.overrides()?,
            &out,
        )?,
        Command::Robustness { stage, out } => pipeline::robustness(
            &stage.prepared,
            stage.model.as_deref(),
            &stage.common.overrides()?,
            &out,
        )?,
        Command::Explain { stage, item, user, out } => pipeline::explain(
            &stage.prepared,
            stage.model.as_deref(),
            &stage.common.overrides()?,
            &item,
            user.as_deref(),
            out.as_deref(),
        )?,
        Command::Compare { left, right } => pipeline::compare(&left, &right)?,
        Command::Systems => SystemRegistry::builtin()
            .describe()
            .map(|(name, what)| format!("{name:<10} {what}\n"))
            .collect(),
        Command::Generate {
            out,
            seed,
            users,
            items,
            clusters,
        } => {
            let cfg = SynthConfig {
                users,
                items,
                clusters,
                seed,
                ..SynthConfig::default()
            };
            write_corpus(&cfg, &out)?;
            format!("wrote {}\n", Path::new(&out).display())
        }
    };
    Ok(text)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
