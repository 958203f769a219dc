use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use readpred::pipeline::{self, AnalysisConfig};
use readpred::toy::{self, ToyOptions};

/// Word predictability from language models and eye-movement analysis.
#[derive(Parser)]
#[command(name = "readpred", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Key-value config file; flags override its entries.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Extra `key=value` config overrides, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train an interpolated Kneser-Ney n-gram model.
    TrainNgram(TrainNgram),
    /// Train an LDA topic model by collapsed Gibbs sampling.
    TrainLda(TrainLda),
    /// Train an Elman recurrent language model.
    TrainRnn(TrainRnn),
    /// Score stimuli and write raw and aligned predictor tables.
    Score(Score),
    /// Compute SFD, GD and TVT from fixation events.
    Measures(Measures),
    /// Fit the model ladders and write the report bundle.
    Analyze(Analyze),
    /// Generate the synthetic toy dataset and train its models.
    Toy(Toy),
}

#[derive(Args)]
struct CorpusArgs {
    /// Training corpus: one sentence per line, blank lines between documents.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Vocabulary TSV written alongside the model.
    #[arg(long)]
    vocabulary: Option<PathBuf>,
    #[arg(long)]
    min_count: Option<u64>,
    #[arg(long)]
    lowercase: Option<bool>,
    #[arg(long)]
    strip_punctuation: Option<bool>,
}

#[derive(Args)]
struct TrainNgram {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Model output path.
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[arg(long)]
    order: Option<usize>,
    /// Comma-separated discounts, lowest order first.
    #[arg(long)]
    discounts: Option<String>,
    /// Also write the model in ARPA text format.
    #[arg(long)]
    arpa: Option<PathBuf>,
}

#[derive(Args)]
struct TrainLda {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[arg(long)]
    topics: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    sweeps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the top words of every topic to this TSV.
    #[arg(long)]
    top_words: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    top_k: usize,
}

#[derive(Args)]
struct TrainRnn {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    bptt: Option<usize>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct Score {
    #[arg(long)]
    stimuli: Option<PathBuf>,
    #[arg(long)]
    norms: Option<PathBuf>,
    #[arg(long)]
    vocabulary: Option<PathBuf>,
    #[arg(long)]
    ngram_model: Option<PathBuf>,
    #[arg(long)]
    lda_model: Option<PathBuf>,
    #[arg(long)]
    rnn_model: Option<PathBuf>,
    /// Aligned predictor table output.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Raw per-token score table output.
    #[arg(long)]
    raw_out: Option<PathBuf>,
    #[arg(long)]
    fold_in_sweeps: Option<usize>,
    #[arg(long)]
    fold_in_samples: Option<usize>,
    #[arg(long)]
    include_target: Option<bool>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct Measures {
    #[arg(long)]
    fixations: Option<PathBuf>,
    #[arg(long)]
    stimuli: Option<PathBuf>,
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Count a first-pass fixation only before any later word is fixated.
    #[arg(long)]
    progressive_first_pass: Option<bool>,
}

#[derive(Args)]
struct Analyze {
    #[arg(long)]
    predictors: Option<PathBuf>,
    #[arg(long)]
    stimuli: Option<PathBuf>,
    /// Precomputed word measures; fixations are used when absent.
    #[arg(long)]
    measures_table: Option<PathBuf>,
    #[arg(long)]
    fixations: Option<PathBuf>,
    /// Report directory; also settable through READPRED_OUT_DIR.
    #[arg(short, long)]
    out_dir: Option<PathBuf>,
    /// Comma-separated subset of SFD, GD, TVT.
    #[arg(long)]
    measures: Option<String>,
    /// Comma-separated subset of ccp, ngram, topic, rnn.
    #[arg(long)]
    sources: Option<String>,
    /// Comma-separated baseline covariates.
    #[arg(long)]
    baseline: Option<String>,
    #[arg(long)]
    basis_k: Option<usize>,
    #[arg(long)]
    curve_points: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct Toy {
    /// Output directory for the dataset.
    #[arg(short, long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    sentences: usize,
    #[arg(long, default_value_t = 5)]
    subjects: usize,
}

/// Collects `(key, value)` overrides from optional flags.
#[derive(Default)]
struct Overrides(Vec<(&'static str, String)>);

impl Overrides {
    fn add<T: ToString>(&mut self, key: &'static str, v: &Option<T>) -> &mut Self {
        if let Some(v) = v {
            self.0.push((key, v.to_string()));
        }
        self
    }

    fn path(&mut self, key: &'static str, v: &Option<PathBuf>) -> &mut Self {
        if let Some(v) = v {
            self.0.push((key, v.display().to_string()));
        }
        self
    }

    fn corpus(&mut self, c: &CorpusArgs) -> &mut Self {
        self.path("corpus", &c.corpus)
            .path("vocabulary", &c.vocabulary)
            .add("min_count", &c.min_count)
            .add("lowercase", &c.lowercase)
            .add("strip_punctuation", &c.strip_punctuation)
    }
}

fn load_config(common: &Common, overrides: &Overrides) -> Result<AnalysisConfig> {
    let mut cfg = match &common.config {
        Some(p) => AnalysisConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => AnalysisConfig::default(),
    };
    cfg.apply_env();
    let cwd = Path::new(".");
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .with_context(|| format!("--set expects KEY=VALUE, got {kv:?}"))?;
        cfg.set(k.trim(), v.trim(), cwd)?;
    }
    for (k, v) in &overrides.0 {
        cfg.set(k, v, cwd)?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let common = &cli.common;
    let mut o = Overrides::default();
    match cli.command {
        Command::TrainNgram(a) => {
            o.corpus(&a.corpus)
                .path("ngram_model", &a.out)
                .add("ngram_order", &a.order)
                .add("ngram_discounts", &a.discounts);
            let cfg = load_config(common, &o)?;
            let model = pipeline::train_ngram_step(&cfg)?;
            if let Some(p) = &a.arpa {
                let f = File::create(p).with_context(|| format!("creating {}", p.display()))?;
                model.write_arpa(BufWriter::new(f))?;
            }
            log::info!("order {} model, discounts {:?}", model.order(), model.discounts());
        }
        Command::TrainLda(a) => {
            o.corpus(&a.corpus)
                .path("lda_model", &a.out)
                .add("lda_topics", &a.topics)
                .add("lda_alpha", &a.alpha)
                .add("lda_beta", &a.beta)
                .add("lda_sweeps", &a.sweeps)
                .add("seed", &a.seed);
            let cfg = load_config(common, &o)?;
            let model = pipeline::train_lda_step(&cfg)?;
            if let Some(p) = &a.top_words {
                let f = File::create(p).with_context(|| format!("creating {}", p.display()))?;
                model.write_top_words(BufWriter::new(f), a.top_k)?;
            }
        }
        Command::TrainRnn(a) => {
            o.corpus(&a.corpus)
                .path("rnn_model", &a.out)
                .add("rnn_hidden", &a.hidden)
                .add("rnn_epochs", &a.epochs)
                .add("rnn_learning_rate", &a.learning_rate)
                .add("rnn_bptt", &a.bptt)
                .add("rnn_temperature", &a.temperature)
                .add("rnn_classes", &a.classes)
                .add("seed", &a.seed);
            let cfg = load_config(common, &o)?;
            let (_, epochs) = pipeline::train_rnn_step(&cfg)?;
            for e in epochs {
                log::info!(
                    "epoch {} lr {} train loss {:.4}",
                    e.epoch,
                    e.learning_rate,
                    e.train_loss
                );
            }
        }
        Command::Score(a) => {
            o.path("stimuli", &a.stimuli)
                .path("norms", &a.norms)
                .path("vocabulary", &a.vocabulary)
                .path("ngram_model", &a.ngram_model)
                .path("lda_model", &a.lda_model)
                .path("rnn_model", &a.rnn_model)
                .path("predictors", &a.out)
                .path("raw_scores", &a.raw_out)
                .add("fold_in_sweeps", &a.fold_in_sweeps)
                .add("fold_in_samples", &a.fold_in_samples)
                .add("include_target", &a.include_target)
                .add("seed", &a.seed);
            let cfg = load_config(common, &o)?;
            let (_, rows) = pipeline::score_step(&cfg)?;
            let complete = rows.iter().filter(|r| r.complete).count();
            log::info!("{} predictor rows, {complete} complete", rows.len());
        }
        Command::Measures(a) => {
            o.path("fixations", &a.fixations)
                .path("stimuli", &a.stimuli)
                .path("measures_table", &a.out)
                .add("progressive_first_pass", &a.progressive_first_pass);
            let cfg = load_config(common, &o)?;
            let rows = pipeline::measures_step(&cfg)?;
            log::info!("{} word measure rows", rows.len());
        }
        Command::Analyze(a) => {
            o.path("predictors", &a.predictors)
                .path("stimuli", &a.stimuli)
                .path("measures_table", &a.measures_table)
                .path("fixations", &a.fixations)
                .path("output_dir", &a.out_dir)
                .add("measures", &a.measures)
                .add("sources", &a.sources)
                .add("baseline", &a.baseline)
                .add("basis_k", &a.basis_k)
                .add("curve_points", &a.curve_points)
                .add("seed", &a.seed);
            let cfg = load_config(common, &o)?;
            pipeline::analyze_step(&cfg)?;
            log::info!("reports written to {}", cfg.output_dir.display());
        }
        Command::Toy(a) => {
            let opts = ToyOptions {
                seed: a.seed,
                stimulus_sentences: a.sentences,
                subjects: a.subjects,
                ..ToyOptions::default()
            };
            let cfg = toy::generate(&a.out, &opts)?;
            println!("{}", cfg.display());
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    run(Cli::parse())
}
