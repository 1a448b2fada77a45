//! Scoring wrapper and the JSON model document.

use serde::{Deserialize, Serialize};

use super::model::{EmissionKind, EmissionParams, HiddenMarkovModel, ObsSlice};
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Transform applied to raw amounts and time-deltas before modeling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalTransform {
    Log1p,
}

impl SignalTransform {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            SignalTransform::Log1p => x.ln_1p(),
        }
    }
}

/// Quantile binning of transformed values into symbols. A value maps to the
/// number of edges that are `<=` it.
#[derive(Debug, Clone, PartialEq)]
pub struct Discretizer {
    edges: Vec<f64>,
}

impl Discretizer {
    /// Fits up to `n_bins` quantile bins to `values`. Duplicate edges and
    /// edges equal to the minimum are dropped so that every bin is occupied
    /// by at least one training value.
    pub fn fit(values: &[f64], n_bins: usize) -> Result<Self> {
        if n_bins < 2 {
            return Err(Error::config("need at least 2 bins"));
        }
        if values.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::domain("non-finite value while fitting bins"));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let mut edges: Vec<f64> = Vec::with_capacity(n_bins - 1);
        for i in 1..n_bins {
            let e = sorted[(i * n / n_bins).min(n - 1)];
            if e > sorted[0] && edges.last().is_none_or(|&last| e > last) {
                edges.push(e);
            }
        }
        if edges.is_empty() {
            // constant data: split just above the value so the alphabet has two symbols
            edges.push(sorted[0] + 1.0);
        }
        Ok(Self { edges })
    }

    pub fn from_edges(edges: Vec<f64>) -> Result<Self> {
        if edges.is_empty() {
            return Err(Error::invalid_model("bin edges must not be empty"));
        }
        if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid_model(
                "bin edges must be finite and strictly increasing",
            ));
        }
        Ok(Self { edges })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn n_symbols(&self) -> usize {
        self.edges.len() + 1
    }

    pub fn symbol(&self, x: f64) -> usize {
        self.edges.partition_point(|&e| e <= x)
    }
}

/// A fitted HMM together with the transform and optional binning that turn
/// raw signal values into its observation space.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoringModel {
    pub hmm: HiddenMarkovModel,
    pub transform: SignalTransform,
    pub bins: Option<Discretizer>,
}

impl ScoringModel {
    pub fn new(
        hmm: HiddenMarkovModel,
        transform: SignalTransform,
        bins: Option<Discretizer>,
    ) -> Result<Self> {
        match (hmm.emissions(), &bins) {
            (EmissionParams::Gaussian { .. }, None) => {}
            (EmissionParams::Categorical { n_symbols, .. }, Some(d)) if *n_symbols == d.n_symbols() => {}
            (EmissionParams::Categorical { .. }, Some(_)) => {
                return Err(Error::invalid_model(
                    "bin edges disagree with the emission alphabet size",
                ))
            }
            (EmissionParams::Categorical { .. }, None) => {
                return Err(Error::invalid_model("categorical model needs bin edges"))
            }
            (EmissionParams::Gaussian { .. }, Some(_)) => {
                return Err(Error::invalid_model("gaussian model must not carry bin edges"))
            }
        }
        Ok(Self {
            hmm,
            transform,
            bins,
        })
    }

    /// Log-likelihood of a window of already-transformed signal values.
    pub fn log_likelihood(&self, window: &[f64]) -> Result<f64> {
        match &self.bins {
            None => self.hmm.log_likelihood(ObsSlice::Continuous(window)),
            Some(d) => {
                let symbols: Vec<usize> = window.iter().map(|&x| d.symbol(x)).collect();
                self.hmm.log_likelihood(ObsSlice::Symbols(&symbols))
            }
        }
    }

    pub fn to_document(&self) -> ModelDocument {
        let hmm = &self.hmm;
        let emissions = match hmm.emissions() {
            EmissionParams::Gaussian { means, variances } => EmissionDocument::Gaussian {
                means: means.clone(),
                variances: variances.clone(),
            },
            EmissionParams::Categorical { n_symbols, probs } => EmissionDocument::Categorical {
                n_symbols: *n_symbols,
                probabilities: probs.chunks(*n_symbols).map(|r| r.to_vec()).collect(),
            },
        };
        ModelDocument {
            format_version: MODEL_FORMAT_VERSION,
            kind: hmm.emission_kind().into(),
            n_states: hmm.n_states(),
            initial: hmm.initial().to_vec(),
            transition: hmm.transition(),
            emissions,
            signal_transform: self.transform,
            bin_edges: self.bins.as_ref().map(|d| d.edges().to_vec()),
        }
    }

    pub fn from_document(doc: ModelDocument) -> Result<Self> {
        if doc.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::invalid_model(format!(
                "unsupported format_version {}",
                doc.format_version
            )));
        }
        if doc.initial.len() != doc.n_states {
            return Err(Error::invalid_model("n_states disagrees with initial"));
        }
        let emissions = match (doc.kind, doc.emissions) {
            (KindTag::Gaussian, EmissionDocument::Gaussian { means, variances }) => {
                EmissionParams::Gaussian { means, variances }
            }
            (
                KindTag::Categorical,
                EmissionDocument::Categorical {
                    n_symbols,
                    probabilities,
                },
            ) => {
                if probabilities.iter().any(|r| r.len() != n_symbols) {
                    return Err(Error::invalid_model("emission rows must have n_symbols entries"));
                }
                EmissionParams::Categorical {
                    n_symbols,
                    probs: probabilities.into_iter().flatten().collect(),
                }
            }
            _ => return Err(Error::invalid_model("kind disagrees with emissions")),
        };
        let hmm = HiddenMarkovModel::new(doc.initial, doc.transition, emissions)?;
        let bins = doc.bin_edges.map(Discretizer::from_edges).transpose()?;
        Self::new(hmm, doc.signal_transform, bins)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_document(serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindTag {
    Gaussian,
    Categorical,
}

impl From<EmissionKind> for KindTag {
    fn from(k: EmissionKind) -> Self {
        match k {
            EmissionKind::Gaussian => KindTag::Gaussian,
            EmissionKind::Categorical => KindTag::Categorical,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EmissionDocument {
    Gaussian {
        means: Vec<f64>,
        variances: Vec<f64>,
    },
    Categorical {
        n_symbols: usize,
        probabilities: Vec<Vec<f64>>,
    },
}

/// On-disk form of a [`ScoringModel`]. Probabilities are stored in linear
/// space; floats are written in shortest round-trip form, so a reload
/// reproduces every bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub format_version: u32,
    pub kind: KindTag,
    pub n_states: usize,
    pub initial: Vec<f64>,
    pub transition: Vec<Vec<f64>>,
    pub emissions: EmissionDocument,
    pub signal_transform: SignalTransform,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bin_edges: Option<Vec<f64>>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discretizer_occupies_every_bin() {
        let values: Vec<f64> = (0..300).map(|i| (i % 37) as f64 * 0.5).collect();
        let d = Discretizer::fit(&values, 30).unwrap();
        let mut seen = vec![false; d.n_symbols()];
        for &v in &values {
            seen[d.symbol(v)] = true;
        }
        assert!(seen.iter().all(|&s| s));
        assert_eq!(d.symbol(-1.0), 0);
        assert_eq!(d.symbol(1e9), d.n_symbols() - 1);
    }

    #[test]
    fn discretizer_constant_input() {
        let d = Discretizer::fit(&[3.0; 10], 30).unwrap();
        assert_eq!(d.n_symbols(), 2);
        assert_eq!(d.symbol(3.0), 0);
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let hmm = HiddenMarkovModel::new(
            vec![0.3, 0.7],
            vec![vec![1.0 / 3.0, 2.0 / 3.0], vec![0.1, 0.9]],
            EmissionParams::Gaussian {
                means: vec![std::f64::consts::PI, -1e-300],
                variances: vec![1e-6, 2.5],
            },
        )
        .unwrap();
        let m = ScoringModel::new(hmm, SignalTransform::Log1p, None).unwrap();
        let back = ScoringModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(m, back);
        let w = [0.3, 3.1, 2.0];
        assert_eq!(
            m.log_likelihood(&w).unwrap().to_bits(),
            back.log_likelihood(&w).unwrap().to_bits()
        );
    }

    #[test]
    fn loader_revalidates() {
        let bad = r#"{"format_version":1,"kind":"gaussian","n_states":1,"initial":[0.5],
            "transition":[[1.0]],"emissions":{"means":[0.0],"variances":[1.0]},
            "signal_transform":"log1p"}"#;
        assert!(matches!(ScoringModel::from_json(bad), Err(Error::InvalidModel(_))));
        let wrong_version = bad.replace("\"format_version\":1", "\"format_version\":2");
        assert!(ScoringModel::from_json(&wrong_version).is_err());
        let mismatched = r#"{"format_version":1,"kind":"categorical","n_states":1,"initial":[1.0],
            "transition":[[1.0]],"emissions":{"means":[0.0],"variances":[1.0]},
            "signal_transform":"log1p"}"#;
        assert!(ScoringModel::from_json(mismatched).is_err());
    }

    #[test]
    fn categorical_document_round_trip() {
        let hmm = HiddenMarkovModel::new(
            vec![1.0],
            vec![vec![1.0]],
            EmissionParams::Categorical {
                n_symbols: 3,
                probs: vec![0.2, 0.3, 0.5],
            },
        )
        .unwrap();
        let bins = Discretizer::from_edges(vec![1.0, 2.0]).unwrap();
        let m = ScoringModel::new(hmm, SignalTransform::Log1p, Some(bins)).unwrap();
        let back = ScoringModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(m, back);
        let ll = back.log_likelihood(&[0.5, 1.5, 9.0]).unwrap();
        assert!((ll - (0.2f64 * 0.3 * 0.5).ln()).abs() < 1e-12);
    }
}
