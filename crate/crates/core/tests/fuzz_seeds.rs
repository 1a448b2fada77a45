//! Replays the checked-in fuzz corpus through the same round-trip
//! properties the fuzz targets assert, so they run on stable toolchains.

use std::fs;
use std::path::PathBuf;

use hmm_fraud::classifier::RandomForest;
use hmm_fraud::features::{read_enriched_csv, write_enriched_csv, ModelRegistry};
use hmm_fraud::hmm::ScoringModel;
use hmm_fraud::pipeline::{read_transactions, write_transactions, FeatureEncoder, FeatureSet};

fn seeds(target: &str) -> Vec<Vec<u8>> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut paths: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .collect();
    paths.sort();
    assert!(!paths.is_empty(), "no seeds for {target}");
    paths.into_iter().map(|p| fs::read(p).unwrap()).collect()
}

fn text(seed: &[u8]) -> &str {
    std::str::from_utf8(seed).unwrap()
}

#[test]
fn transaction_seeds_round_trip() {
    for seed in seeds("transactions_csv") {
        let txns = read_transactions(seed.as_slice()).unwrap();
        let mut buf = Vec::new();
        write_transactions(&mut buf, &txns).unwrap();
        assert_eq!(read_transactions(buf.as_slice()).unwrap(), txns);
    }
}

#[test]
fn enriched_seeds_round_trip() {
    for seed in seeds("enriched_csv") {
        let rows = read_enriched_csv(seed.as_slice()).unwrap();
        assert!(!rows.is_empty());
        let mut buf = Vec::new();
        write_enriched_csv(&mut buf, &rows).unwrap();
        assert_eq!(read_enriched_csv(buf.as_slice()).unwrap(), rows);
    }
}

macro_rules! json_round_trip {
    ($name:ident, $target:literal, $ty:ty) => {
        #[test]
        fn $name() {
            for seed in seeds($target) {
                let parsed = <$ty>::from_json(text(&seed)).unwrap();
                let again = <$ty>::from_json(&parsed.to_json().unwrap()).unwrap();
                assert_eq!(again, parsed);
            }
        }
    };
}

json_round_trip!(scoring_model_seeds_round_trip, "scoring_model_json", ScoringModel);
json_round_trip!(registry_seeds_round_trip, "registry_json", ModelRegistry);
json_round_trip!(forest_seeds_round_trip, "forest_json", RandomForest);
json_round_trip!(encoder_seeds_round_trip, "encoder_json", FeatureEncoder);

#[test]
fn feature_set_seeds_round_trip() {
    for seed in seeds("feature_set_name") {
        let set: FeatureSet = text(&seed).parse().unwrap();
        assert_eq!(set.to_string().parse::<FeatureSet>().unwrap(), set);
    }
}

#[test]
fn corrupted_seeds_are_rejected_without_panicking() {
    for target in ["transactions_csv", "enriched_csv", "registry_json", "forest_json", "encoder_json", "scoring_model_json"] {
        for seed in seeds(target) {
            for cut in (0..seed.len()).step_by(7) {
                let head = &seed[..cut];
                let s = String::from_utf8_lossy(head);
                let _ = read_transactions(head);
                let _ = read_enriched_csv(head);
                let _ = ScoringModel::from_json(&s);
                let _ = ModelRegistry::from_json(&s);
                let _ = RandomForest::from_json(&s);
                let _ = FeatureEncoder::from_json(&s);
            }
        }
    }
}
