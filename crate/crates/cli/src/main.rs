use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use hmm_fraud::classifier::{grid_search, pr_curve, GridSpec, MtryRule, RandomForest};
use hmm_fraud::features::{
    enrich_dataset, read_enriched_csv, write_enriched_csv, EmissionChoice, ModelRegistry,
    RegistryConfig,
};
use hmm_fraud::hmm::FitConfig;
use hmm_fraud::pipeline::{
    read_transactions, run_experiment, temporal_split, write_transactions, DataSource,
    ExperimentConfig, FeatureEncoder, FeatureSet,
};
use hmm_fraud::sequencer::Transaction;
use hmm_fraud::synth::{generate, GenConfig};

/// Multi-perspective HMM features for card fraud detection.
#[derive(Parser)]
#[command(name = "hmm-fraud", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic transaction CSV.
    Gen {
        #[command(flatten)]
        gen: GenArgs,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the eight perspective HMMs on the training split of a CSV.
    TrainHmm {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        split: SplitArgs,
        #[command(flatten)]
        hmm: HmmArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Registry JSON to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute aggregate and HMM features; writes enriched_{train,valid,test}.csv.
    Enrich {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        registry: PathBuf,
        #[command(flatten)]
        split: SplitArgs,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Grid-search a random forest on enriched training and validation CSVs.
    Fit {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        valid: PathBuf,
        #[arg(long, default_value = "raw+aggCH+HMM")]
        feature_set: FeatureSet,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Forest JSON to write; the encoder goes next to it as `<stem>.encoder.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score an enriched CSV with a fitted forest and report PR-AUC.
    Eval {
        #[arg(long)]
        forest: PathBuf,
        /// Defaults to the sidecar written by `fit`.
        #[arg(long)]
        encoder: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        /// Optional PR-curve CSV (threshold,recall,precision).
        #[arg(long)]
        curve: Option<PathBuf>,
    },
    /// Full experiment: split, HMMs, enrichment, grid search and ablation report.
    Run {
        /// Transaction CSV; a synthetic stream is generated when absent.
        #[arg(long)]
        input: Option<PathBuf>,
        #[command(flatten)]
        gen: GenArgs,
        #[command(flatten)]
        split: SplitArgs,
        #[command(flatten)]
        hmm: HmmArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, value_delimiter = ',', default_value = "raw,raw+aggCH,raw+aggCH+aggTM,raw+aggCH+HMM,raw+aggCH+aggTM+HMM")]
        feature_sets: Vec<FeatureSet>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 1000)]
    n_cards: usize,
    #[arg(long, default_value_t = 200)]
    n_terminals: usize,
    #[arg(long, default_value_t = 30)]
    n_days: usize,
    #[arg(long, default_value_t = 0.01)]
    fraud_rate: f64,
    #[arg(long, default_value_t = 1.0)]
    txns_per_day: f64,
}

impl GenArgs {
    fn config(&self, seed: u64) -> GenConfig {
        GenConfig {
            n_cards: self.n_cards,
            n_terminals: self.n_terminals,
            n_days: self.n_days,
            target_fraud_rate: self.fraud_rate,
            mean_txns_per_card_per_day: self.txns_per_day,
            seed,
            ..GenConfig::default()
        }
    }
}

#[derive(Args)]
struct SplitArgs {
    /// Train, validation and test fractions, split by time.
    #[arg(long, value_delimiter = ',', num_args = 3, default_value = "0.6,0.2,0.2")]
    split: Vec<f64>,
}

impl SplitArgs {
    fn fractions(&self) -> [f64; 3] {
        [self.split[0], self.split[1], self.split[2]]
    }
}

#[derive(Args)]
struct HmmArgs {
    #[arg(long, default_value_t = 3)]
    window_size: usize,
    #[arg(long, default_value_t = 5)]
    n_states: usize,
    /// gaussian or categorical
    #[arg(long, default_value = "gaussian", value_parser = parse_emission)]
    emission: EmissionChoice,
    #[arg(long, default_value_t = 30)]
    n_bins: usize,
    #[arg(long, default_value_t = 100)]
    max_iterations: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 5)]
    restarts: usize,
}

impl HmmArgs {
    fn config(&self, seed: u64) -> RegistryConfig {
        RegistryConfig {
            n_states: self.n_states,
            window_size: self.window_size,
            emission: self.emission,
            n_bins: self.n_bins,
            fit: FitConfig {
                max_iterations: self.max_iterations,
                convergence_tol: self.tol,
                n_restarts: self.restarts,
                seed,
                ..FitConfig::default()
            },
        }
    }
}

#[derive(Args)]
struct GridArgs {
    #[arg(long, value_delimiter = ',', default_value = "100,300")]
    n_trees: Vec<usize>,
    /// Depth limits; `none` grows unrestricted trees.
    #[arg(long, value_delimiter = ',', default_value = "8,16,none", value_parser = parse_depth)]
    max_depth: Vec<Option<usize>>,
    /// `sqrt`, `third` or a fixed count.
    #[arg(long, value_delimiter = ',', default_value = "sqrt,third", value_parser = parse_mtry)]
    mtry: Vec<MtryRule>,
    #[arg(long, value_delimiter = ',', default_value = "1,5")]
    min_samples_leaf: Vec<usize>,
    #[arg(long)]
    no_bootstrap: bool,
}

impl GridArgs {
    fn spec(&self, seed: u64) -> GridSpec {
        GridSpec {
            n_trees: self.n_trees.clone(),
            max_depth: self.max_depth.clone(),
            mtry: self.mtry.clone(),
            min_samples_leaf: self.min_samples_leaf.clone(),
            bootstrap: !self.no_bootstrap,
            seed,
        }
    }
}

fn parse_emission(s: &str) -> Result<EmissionChoice, String> {
    match s {
        "gaussian" => Ok(EmissionChoice::Gaussian),
        "categorical" => Ok(EmissionChoice::Categorical),
        _ => Err(format!("expected gaussian or categorical, got {s:?}")),
    }
}

fn parse_depth(s: &str) -> Result<Option<usize>, String> {
    if s.eq_ignore_ascii_case("none") {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|e| format!("{e}"))
}

fn parse_mtry(s: &str) -> Result<MtryRule, String> {
    match s {
        "sqrt" => Ok(MtryRule::Sqrt),
        "third" => Ok(MtryRule::Third),
        n => n.parse().map(MtryRule::Fixed).map_err(|e| format!("{e}")),
    }
}

fn read_csv(path: &Path) -> Result<Vec<Transaction>> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut txns = read_transactions(file).with_context(|| format!("reading {}", path.display()))?;
    txns.sort_by_key(Transaction::order_key);
    Ok(txns)
}

fn read_enriched(path: &Path) -> Result<Vec<hmm_fraud::features::EnrichedTransaction>> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_enriched_csv(file).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn encoder_sidecar(forest: &Path) -> PathBuf {
    let stem = forest.file_stem().unwrap_or_default().to_string_lossy();
    forest.with_file_name(format!("{stem}.encoder.json"))
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn execute(command: Command) -> Result<()> {
    let mut stdout = io::stdout().lock();
    match command {
        Command::Gen { gen, seed, out } => {
            let txns = generate(&gen.config(seed))?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            write_transactions(fs::File::create(&out)?, &txns)?;
            let frauds = txns.iter().filter(|t| t.is_fraud).count();
            writeln!(stdout, "wrote {} transactions ({frauds} fraudulent) to {}", txns.len(), out.display())?;
        }
        Command::TrainHmm { input, split, hmm, seed, out } => {
            let txns = read_csv(&input)?;
            let parts = temporal_split(&txns, split.fractions())?;
            let (registry, diagnostics) = ModelRegistry::train(&parts.train, &hmm.config(seed))?;
            write(&out, &registry.to_json()?)?;
            for d in &diagnostics {
                writeln!(
                    stdout,
                    "{:<26} seqs={:<6} iters={:<4} loglik={:.4}",
                    d.perspective, d.n_sequences, d.iterations, d.final_log_likelihood
                )?;
            }
        }
        Command::Enrich { input, registry, split, out_dir } => {
            let txns = read_csv(&input)?;
            let registry = ModelRegistry::from_json(&fs::read_to_string(&registry)?)?;
            let parts = temporal_split(&txns, split.fractions())?;
            let enriched = enrich_dataset(&txns, &registry)?;
            let (a, b) = (parts.train.len(), parts.train.len() + parts.valid.len());
            fs::create_dir_all(&out_dir)?;
            for (name, rows) in [("train", &enriched[..a]), ("valid", &enriched[a..b]), ("test", &enriched[b..])] {
                let path = out_dir.join(format!("enriched_{name}.csv"));
                write_enriched_csv(fs::File::create(&path)?, rows)?;
                writeln!(stdout, "{}: {} rows", path.display(), rows.len())?;
            }
            for w in &parts.warnings {
                eprintln!("warning: {w}");
            }
        }
        Command::Fit { train, valid, feature_set, grid, seed, out } => {
            let train = read_enriched(&train)?;
            let valid = read_enriched(&valid)?;
            let raw: Vec<Transaction> = train.iter().map(|r| r.tx.clone()).collect();
            let encoder = FeatureEncoder::fit(&raw, feature_set);
            let outcome = grid_search(&encoder.dataset(&train)?, &encoder.dataset(&valid)?, &grid.spec(seed))?;
            write(&out, &outcome.best_forest.to_json()?)?;
            write(&encoder_sidecar(&out), &encoder.to_json()?)?;
            for r in &outcome.report {
                writeln!(stdout, "{} {:.6}", serde_json::to_string(&r.params)?, r.validation_auc)?;
            }
            writeln!(stdout, "best: {}", serde_json::to_string(&outcome.best)?)?;
        }
        Command::Eval { forest, encoder, data, curve } => {
            let encoder_path = encoder.unwrap_or_else(|| encoder_sidecar(&forest));
            let model = RandomForest::from_json(&fs::read_to_string(&forest)?)?;
            let encoder = FeatureEncoder::from_json(
                &fs::read_to_string(&encoder_path)
                    .with_context(|| format!("reading encoder {}", encoder_path.display()))?,
            )?;
            let data = encoder.dataset(&read_enriched(&data)?)?;
            if data.feature_names() != model.feature_names() {
                bail!("encoder feature set {} does not match the forest's features", encoder.feature_set);
            }
            let scores = model.predict_dataset(&data)?;
            let pr = pr_curve(&scores, data.labels())?;
            if let Some(path) = curve {
                let mut text = String::from("threshold,recall,precision\n");
                for p in &pr.points {
                    text.push_str(&format!("{:?},{:?},{:?}\n", p.threshold, p.recall, p.precision));
                }
                write(&path, &text)?;
            }
            writeln!(stdout, "{}", serde_json::json!({ "n": scores.len(), "pr_auc": pr.auc }))?;
        }
        Command::Run { input, gen, split, hmm, grid, feature_sets, seed, out_dir } => {
            let source = match input {
                Some(path) => DataSource::Csv(path),
                None => DataSource::Synthetic(gen.config(seed)),
            };
            let config = ExperimentConfig {
                fractions: split.fractions(),
                hmm: hmm.config(seed),
                grid: grid.spec(seed),
                feature_sets,
                output_dir: Some(out_dir.clone()),
                ..ExperimentConfig::new(source, seed)
            };
            fs::create_dir_all(&out_dir)?;
            write(&out_dir.join("config.json"), &serde_json::to_string_pretty(&config)?)?;
            let outcome = run_experiment(&config)?;
            for w in &outcome.report.warnings {
                eprintln!("warning: {w}");
            }
            write!(stdout, "{}", outcome.report.table())?;
            writeln!(stdout, "report written to {}", out_dir.join("report.json").display())?;
        }
    }
    Ok(())
}
