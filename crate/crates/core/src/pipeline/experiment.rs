use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::encode::{FeatureEncoder, FeatureSet};
use super::io::read_transactions;
use super::split::{temporal_split, validate_fractions, SplitSummary};
use crate::classifier::{grid_search, pr_curve, ForestParams, GridResult, GridSpec, PrCurve, RandomForest};
use crate::error::{Error, Result};
use crate::features::{
    derive_seed, enrich_dataset, write_enriched_csv, HmmDiagnostics, ModelRegistry, RegistryConfig,
};
use crate::sequencer::{Perspective, Transaction};
use crate::synth::{generate, GenConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Csv(PathBuf),
    Synthetic(GenConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub source: DataSource,
    pub fractions: [f64; 3],
    /// Window size, hidden-state count, emission family and EM settings.
    pub hmm: RegistryConfig,
    pub grid: GridSpec,
    pub feature_sets: Vec<FeatureSet>,
    pub output_dir: Option<PathBuf>,
    /// Seeds the generator, every HMM fit and every forest.
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn new(source: DataSource, seed: u64) -> Self {
        Self {
            source,
            fractions: [0.6, 0.2, 0.2],
            hmm: RegistryConfig::default(),
            grid: GridSpec::default(),
            feature_sets: FeatureSet::ALL.to_vec(),
            output_dir: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_fractions(self.fractions)?;
        if self.hmm.window_size == 0 {
            return Err(Error::config("window_size must be at least 1"));
        }
        if self.hmm.n_states == 0 {
            return Err(Error::config("n_states must be at least 1"));
        }
        if self.feature_sets.is_empty() {
            return Err(Error::config("no feature sets requested"));
        }
        self.hmm.fit.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSetResult {
    pub feature_set: FeatureSet,
    pub n_features: usize,
    pub best_params: ForestParams,
    pub validation_pr_auc: f64,
    pub test_pr_auc: f64,
    /// `test_pr_auc / baseline − 1` against raw+aggCH, when it was run.
    pub relative_delta_vs_baseline: Option<f64>,
    pub grid: Vec<GridResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub crate_version: String,
    pub seed: u64,
    pub n_transactions: usize,
    pub split_boundaries: [Option<i64>; 2],
}

/// Everything in here is a function of the config, so two runs with the
/// same seed serialize to identical bytes. Wall-clock timings are reported
/// separately in [`ExperimentOutcome::timings`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub metadata: ReportMetadata,
    pub splits: Vec<SplitSummary>,
    pub warnings: Vec<String>,
    pub hmm_diagnostics: Vec<HmmDiagnostics>,
    pub results: Vec<FeatureSetResult>,
}

impl ExperimentReport {
    pub fn result(&self, set: FeatureSet) -> Option<&FeatureSetResult> {
        self.results.iter().find(|r| r.feature_set == set)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Plain-text ablation table.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<22} {:>5} {:>10} {:>10} {:>10}",
            "feature set", "d", "valid AUC", "test AUC", "vs base"
        );
        for r in &self.results {
            let delta = r
                .relative_delta_vs_baseline
                .map_or_else(|| "-".to_string(), |d| format!("{:+.1}%", 100.0 * d));
            let _ = writeln!(
                s,
                "{:<22} {:>5} {:>10.4} {:>10.4} {:>10}",
                r.feature_set.name(),
                r.n_features,
                r.validation_pr_auc,
                r.test_pr_auc,
                delta
            );
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub report: ExperimentReport,
    pub registry: ModelRegistry,
    pub forests: Vec<(FeatureSet, RandomForest, FeatureEncoder, PrCurve)>,
    /// (stage, seconds)
    pub timings: Vec<(String, f64)>,
}

fn load(config: &ExperimentConfig) -> Result<Vec<Transaction>> {
    let mut txns = match &config.source {
        DataSource::Csv(path) => read_transactions(fs::File::open(path)?)?,
        DataSource::Synthetic(gen) => generate(&GenConfig {
            seed: config.seed,
            ..gen.clone()
        })?,
    };
    txns.sort_by_key(Transaction::order_key);
    Ok(txns)
}

/// Runs the full experiment: split, HMM training on the training segment,
/// enrichment, per-feature-set grid search on validation and test scoring.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let mut timings = Vec::new();
    let mut clock = Instant::now();
    let mut lap = |name: &str, timings: &mut Vec<(String, f64)>| {
        timings.push((name.to_owned(), clock.elapsed().as_secs_f64()));
        clock = Instant::now();
    };

    let txns = load(config)?;
    let split = temporal_split(&txns, config.fractions)?;
    if !split.train.iter().any(|t| t.is_fraud) {
        return Err(Error::config(
            "training split holds no fraud, so the compromised-history models cannot be fitted; \
             use more data or a higher fraud rate",
        ));
    }
    for (name, part) in [("validation", &split.valid), ("test", &split.test)] {
        if !part.iter().any(|t| t.is_fraud) {
            return Err(Error::config(format!(
                "{name} split holds no fraud; PR-AUC is undefined"
            )));
        }
    }
    lap("load+split", &mut timings);

    let hmm_cfg = RegistryConfig {
        fit: crate::hmm::FitConfig {
            seed: derive_seed(config.seed, 1),
            ..config.hmm.fit.clone()
        },
        ..config.hmm.clone()
    };
    let (registry, hmm_diagnostics) = ModelRegistry::train(&split.train, &hmm_cfg)?;
    lap("hmm", &mut timings);

    // Enriching the whole chronological stream gives validation and test
    // rows their earlier history; every feature only looks backwards.
    let enriched = enrich_dataset(&txns, &registry)?;
    let (n_train, n_valid) = (split.train.len(), split.valid.len());
    let train_rows = &enriched[..n_train];
    let valid_rows = &enriched[n_train..n_train + n_valid];
    let test_rows = &enriched[n_train + n_valid..];
    lap("enrich", &mut timings);

    let base_encoder = FeatureEncoder::fit(&split.train, FeatureSet::Raw);
    let grid = GridSpec {
        seed: derive_seed(config.seed, 2),
        ..config.grid.clone()
    };
    let mut results = Vec::new();
    let mut forests = Vec::new();
    for &set in &config.feature_sets {
        let encoder = base_encoder.with_feature_set(set);
        let train = encoder.dataset(train_rows)?;
        let valid = encoder.dataset(valid_rows)?;
        let test = encoder.dataset(test_rows)?;
        let outcome = grid_search(&train, &valid, &grid)?;
        let scores = outcome.best_forest.predict_dataset(&test)?;
        let curve = pr_curve(&scores, test.labels())?;
        let validation_pr_auc = outcome
            .report
            .iter()
            .find(|r| r.params == outcome.best)
            .expect("best is a grid point")
            .validation_auc;
        results.push(FeatureSetResult {
            feature_set: set,
            n_features: train.n_features(),
            best_params: outcome.best.clone(),
            validation_pr_auc,
            test_pr_auc: curve.auc,
            relative_delta_vs_baseline: None,
            grid: outcome.report,
        });
        forests.push((set, outcome.best_forest, encoder, curve));
        lap(&format!("forest {set}"), &mut timings);
    }
    if let Some(base) = results
        .iter()
        .find(|r| r.feature_set == FeatureSet::RawAggCh)
        .map(|r| r.test_pr_auc)
    {
        for r in &mut results {
            r.relative_delta_vs_baseline = Some(r.test_pr_auc / base - 1.0);
        }
    }

    let report = ExperimentReport {
        metadata: ReportMetadata {
            crate_version: env!("CARGO_PKG_VERSION").to_owned(),
            seed: config.seed,
            n_transactions: txns.len(),
            split_boundaries: split.boundaries,
        },
        splits: split.summaries(),
        warnings: split.warnings.clone(),
        hmm_diagnostics,
        results,
    };
    let outcome = ExperimentOutcome {
        report,
        registry,
        forests,
        timings,
    };
    if let Some(dir) = &config.output_dir {
        write_outputs(dir, &outcome, &enriched, [n_train, n_valid])?;
    }
    Ok(outcome)
}

fn write_outputs(
    dir: &Path,
    outcome: &ExperimentOutcome,
    enriched: &[crate::features::EnrichedTransaction],
    sizes: [usize; 2],
) -> Result<()> {
    fs::create_dir_all(dir.join("models"))?;
    fs::write(dir.join("report.json"), outcome.report.to_json()?)?;
    fs::write(dir.join("report.txt"), outcome.report.table())?;
    let timings: Vec<serde_json::Value> = outcome
        .timings
        .iter()
        .map(|(stage, secs)| serde_json::json!({ "stage": stage, "seconds": secs }))
        .collect();
    fs::write(dir.join("timings.json"), serde_json::to_string_pretty(&timings)?)?;
    fs::write(dir.join("models/registry.json"), outcome.registry.to_json()?)?;
    for p in Perspective::ALL {
        fs::write(
            dir.join(format!("models/hmm_{}.json", p.name())),
            outcome.registry.model(p).to_json()?,
        )?;
    }
    for (set, forest, encoder, curve) in &outcome.forests {
        let stem = set.name().replace('+', "_");
        fs::write(dir.join(format!("models/forest_{stem}.json")), forest.to_json()?)?;
        fs::write(dir.join(format!("models/encoder_{stem}.json")), encoder.to_json()?)?;
        let mut csv = String::from("threshold,recall,precision\n");
        for p in &curve.points {
            let _ = writeln!(csv, "{:?},{:?},{:?}", p.threshold, p.recall, p.precision);
        }
        fs::write(dir.join(format!("pr_curve_{stem}.csv")), csv)?;
    }
    let [n_train, n_valid] = sizes;
    for (name, rows) in [
        ("train", &enriched[..n_train]),
        ("valid", &enriched[n_train..n_train + n_valid]),
        ("test", &enriched[n_train + n_valid..]),
    ] {
        write_enriched_csv(fs::File::create(dir.join(format!("enriched_{name}.csv")))?, rows)?;
    }
    Ok(())
}
