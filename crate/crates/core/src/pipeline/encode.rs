//! Feature-set selection and raw-column encoding for the forest.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classifier::Dataset;
use crate::error::{Error, Result};
use crate::features::EnrichedTransaction;
use crate::sequencer::{Perspective, Transaction};

/// Feature groups compared in the ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FeatureSet {
    #[serde(rename = "raw")]
    Raw,
    #[serde(rename = "raw+aggCH")]
    RawAggCh,
    #[serde(rename = "raw+aggCH+aggTM")]
    RawAggChAggTm,
    #[serde(rename = "raw+aggCH+HMM")]
    RawAggChHmm,
    #[serde(rename = "raw+aggCH+aggTM+HMM")]
    RawAggChAggTmHmm,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 5] = [
        FeatureSet::Raw,
        FeatureSet::RawAggCh,
        FeatureSet::RawAggChAggTm,
        FeatureSet::RawAggChHmm,
        FeatureSet::RawAggChAggTmHmm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureSet::Raw => "raw",
            FeatureSet::RawAggCh => "raw+aggCH",
            FeatureSet::RawAggChAggTm => "raw+aggCH+aggTM",
            FeatureSet::RawAggChHmm => "raw+aggCH+HMM",
            FeatureSet::RawAggChAggTmHmm => "raw+aggCH+aggTM+HMM",
        }
    }

    fn has_agg_ch(self) -> bool {
        self != FeatureSet::Raw
    }

    fn has_agg_tm(self) -> bool {
        matches!(self, FeatureSet::RawAggChAggTm | FeatureSet::RawAggChAggTmHmm)
    }

    fn has_hmm(self) -> bool {
        matches!(self, FeatureSet::RawAggChHmm | FeatureSet::RawAggChAggTmHmm)
    }

    pub fn feature_names(self) -> Vec<String> {
        let mut names: Vec<String> = RAW_FEATURES.iter().map(|s| s.to_string()).collect();
        if self.has_agg_ch() {
            names.extend(["aggch1", "aggch2", "aggch3", "aggch4"].map(String::from));
        }
        if self.has_agg_tm() {
            names.extend(["aggtm1", "aggtm2", "aggtm3", "aggtm4"].map(String::from));
        }
        if self.has_hmm() {
            names.extend(Perspective::ALL.iter().map(|p| format!("hmm_{}", p.name())));
            names.extend(["hist_len_ch", "hist_len_tm"].map(String::from));
        }
        names
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureSet::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::config(format!("unknown feature set {s:?}")))
    }
}

pub const RAW_FEATURES: [&str; 5] = ["log_amount", "hour_of_day", "day_of_week", "country", "card_type"];

/// Integer codes for categorical raw columns, learned on the training
/// split. Unseen categories map to the reserved code `vocabulary.len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEncoder {
    pub feature_set: FeatureSet,
    pub countries: BTreeMap<String, u32>,
    pub card_types: BTreeMap<String, u32>,
}

fn vocabulary<'a>(values: impl Iterator<Item = &'a str>) -> BTreeMap<String, u32> {
    let mut v: Vec<&str> = values.collect();
    v.sort_unstable();
    v.dedup();
    v.into_iter()
        .enumerate()
        .map(|(i, s)| (s.to_owned(), i as u32))
        .collect()
}

fn code(vocab: &BTreeMap<String, u32>, key: &str) -> f64 {
    vocab.get(key).copied().unwrap_or(vocab.len() as u32) as f64
}

impl FeatureEncoder {
    pub fn fit(train: &[Transaction], feature_set: FeatureSet) -> Self {
        Self {
            feature_set,
            countries: vocabulary(train.iter().map(|t| t.country.as_str())),
            card_types: vocabulary(train.iter().map(|t| t.card_type.as_str())),
        }
    }

    pub fn with_feature_set(&self, feature_set: FeatureSet) -> Self {
        Self {
            feature_set,
            ..self.clone()
        }
    }

    pub fn row(&self, r: &EnrichedTransaction) -> Vec<f64> {
        let set = self.feature_set;
        let t = &r.tx;
        let day = t.timestamp.div_euclid(86_400);
        let mut x = vec![
            t.amount.ln_1p(),
            (t.timestamp.rem_euclid(86_400) / 3600) as f64,
            // 1970-01-01 was a Thursday; 0 = Monday
            ((day + 3).rem_euclid(7)) as f64,
            code(&self.countries, &t.country),
            code(&self.card_types, &t.card_type),
        ];
        let a = &r.aggregates;
        if set.has_agg_ch() {
            x.extend([a.aggch1 as f64, a.aggch2, a.aggch3 as f64, a.aggch4]);
        }
        if set.has_agg_tm() {
            x.extend([a.aggtm1 as f64, a.aggtm2, a.aggtm3 as f64, a.aggtm4]);
        }
        if set.has_hmm() {
            x.extend(r.hmm.values);
            x.extend([r.hmm.hist_len_ch as f64, r.hmm.hist_len_tm as f64]);
        }
        x
    }

    pub fn dataset(&self, rows: &[EnrichedTransaction]) -> Result<Dataset> {
        let names = self.feature_set.feature_names();
        let values = rows.iter().flat_map(|r| self.row(r)).collect();
        Dataset::from_flat(names, values, rows.iter().map(|r| r.label).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
