use std::collections::{BTreeMap, BTreeSet};

use hmm_fraud::classifier::GridSpec;
use hmm_fraud::features::RegistryConfig;
use hmm_fraud::hmm::FitConfig;
use hmm_fraud::pipeline::{
    read_transactions, run_experiment, write_transactions, DataSource, ExperimentConfig,
    FeatureSet,
};
use hmm_fraud::sequencer::{build_training_corpora, Perspective, SignalKind, Transaction};
use hmm_fraud::synth::{generate, GenConfig};
use hmm_fraud::Error;

fn small_gen(n_cards: usize, n_days: usize) -> GenConfig {
    GenConfig {
        n_cards,
        n_terminals: 40,
        n_days,
        target_fraud_rate: 0.03,
        ..GenConfig::default()
    }
}

fn quick_config(gen: GenConfig, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        hmm: RegistryConfig {
            n_states: 3,
            fit: FitConfig {
                n_restarts: 2,
                max_iterations: 20,
                ..FitConfig::default()
            },
            ..RegistryConfig::default()
        },
        grid: GridSpec {
            n_trees: vec![10, 20],
            max_depth: vec![Some(6), None],
            ..GridSpec::default()
        },
        ..ExperimentConfig::new(DataSource::Synthetic(gen), seed)
    }
}

#[test]
fn reference_config_hits_the_target_fraud_rate() {
    let txns = generate(&GenConfig::default()).unwrap();
    let rate = txns.iter().filter(|t| t.is_fraud).count() as f64 / txns.len() as f64;
    assert!((0.008..=0.012).contains(&rate), "rate {rate}");
}

#[test]
fn corpus_sizes_match_direct_recount() {
    let txns = generate(&GenConfig {
        n_cards: 100,
        n_terminals: 20,
        n_days: 10,
        target_fraud_rate: 0.03,
        ..GenConfig::default()
    })
    .unwrap();
    let corpora = build_training_corpora(&txns);
    for p in Perspective::ALL {
        // recount: group ids by actor, label by any fraud, count lengths
        let mut per_actor: BTreeMap<&str, (usize, bool)> = BTreeMap::new();
        for t in &txns {
            let e = per_actor.entry(t.actor_id(p.actor)).or_default();
            e.0 += 1;
            e.1 |= t.is_fraud;
        }
        let compromised = p.history == hmm_fraud::sequencer::HistoryLabel::Compromised;
        let mut lengths: Vec<usize> = per_actor
            .values()
            .filter(|(_, f)| *f == compromised)
            .map(|(n, _)| if p.signal == SignalKind::Amount { *n } else { n - 1 })
            .filter(|&n| n > 0)
            .collect();
        let mut got: Vec<usize> = corpora[&p].iter().map(|s| s.len()).collect();
        lengths.sort_unstable();
        got.sort_unstable();
        assert_eq!(got, lengths, "{p}");
    }
}

#[test]
fn transaction_csv_round_trips() {
    let txns = generate(&small_gen(50, 3)).unwrap();
    let mut buf = Vec::new();
    write_transactions(&mut buf, &txns).unwrap();
    assert_eq!(read_transactions(&buf[..]).unwrap(), txns);
}

#[test]
fn smoke_run_reports_every_feature_set() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig {
        output_dir: Some(dir.path().to_path_buf()),
        ..quick_config(small_gen(200, 7), 42)
    };
    let outcome = run_experiment(&config).unwrap();
    let report = &outcome.report;
    assert_eq!(report.results.len(), 5);
    let sets: BTreeSet<FeatureSet> = report.results.iter().map(|r| r.feature_set).collect();
    assert_eq!(sets.len(), 5);
    let hmm = report.result(FeatureSet::RawAggChHmm).unwrap();
    let base = report.result(FeatureSet::RawAggCh).unwrap();
    let delta = hmm.relative_delta_vs_baseline.unwrap();
    assert!((delta - (hmm.test_pr_auc / base.test_pr_auc - 1.0)).abs() < 1e-15);
    assert_eq!(report.hmm_diagnostics.len(), 8);
    assert_eq!(report.splits.iter().map(|s| s.n_transactions).sum::<usize>(), report.metadata.n_transactions);
    for name in [
        "report.json",
        "report.txt",
        "timings.json",
        "models/registry.json",
        "models/hmm_ch_genuine_amount.json",
        "models/forest_raw_aggCH_HMM.json",
        "models/encoder_raw_aggCH_HMM.json",
        "pr_curve_raw.csv",
        "enriched_train.csv",
        "enriched_test.csv",
    ] {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }
}

#[test]
fn reports_are_identical_across_thread_counts() {
    let config = quick_config(small_gen(150, 7), 5);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_experiment(&config).unwrap().report.to_json().unwrap())
    };
    let a = run(1);
    assert_eq!(a, run(4));
    assert_eq!(a, run(1));
}

#[test]
fn training_split_without_fraud_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tx.csv");
    let txns: Vec<Transaction> = generate(&small_gen(60, 4))
        .unwrap()
        .into_iter()
        .map(|t| Transaction { is_fraud: false, ..t })
        .collect();
    write_transactions(std::fs::File::create(&path).unwrap(), &txns).unwrap();
    let config = ExperimentConfig {
        source: DataSource::Csv(path),
        ..quick_config(GenConfig::default(), 1)
    };
    let err = run_experiment(&config).unwrap_err();
    assert!(matches!(err, Error::Config(ref m) if m.contains("training split")), "{err}");
}
