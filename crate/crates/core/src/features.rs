//! HMM likelihood features and 24h aggregate features per transaction.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::{
    fit_baum_welch_report, Discretizer, FitConfig, ModelDocument, ObservationSequence,
    ScoringModel, SignalTransform,
};
use crate::sequencer::{
    build_training_corpora, group_by_actor, signal_values, window_range, ActorHistory, ActorKind,
    Perspective, SignalKind, Transaction,
};

/// Length of the aggregation horizon in seconds.
pub const AGGREGATION_WINDOW_SECS: i64 = 86_400;

pub const DEFAULT_WINDOW_SIZE: usize = 3;

/// Feature value used when a window has zero likelihood under a model
/// (only reachable with categorical emissions).
pub const IMPOSSIBLE_WINDOW_SCORE: f64 = -1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct HmmFeatureSet {
    /// Length-normalized log-likelihoods in [`Perspective::ALL`] order.
    pub values: [f64; 8],
    pub hist_len_ch: usize,
    pub hist_len_tm: usize,
}

/// Count and amount aggregates over the trailing 24 hours, current transaction
/// included.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AggregateFeatureSet {
    /// Card-holder transactions.
    pub aggch1: u32,
    pub aggch2: f64,
    /// Card-holder transactions in the current transaction's country.
    pub aggch3: u32,
    pub aggch4: f64,
    /// Terminal transactions.
    pub aggtm1: u32,
    pub aggtm2: f64,
    /// Terminal transactions with the current transaction's card type.
    pub aggtm3: u32,
    pub aggtm4: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnrichedTransaction {
    pub tx: Transaction,
    pub aggregates: AggregateFeatureSet,
    pub hmm: HmmFeatureSet,
    pub label: bool,
}

/// Emission family used when training the registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EmissionChoice {
    #[default]
    Gaussian,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegistryConfig {
    pub n_states: usize,
    pub window_size: usize,
    pub emission: EmissionChoice,
    /// Alphabet size for categorical emissions.
    pub n_bins: usize,
    pub fit: FitConfig,
}

impl Default for RegistryConfig {
    fn default() -> Self {
        Self {
            n_states: 5,
            window_size: DEFAULT_WINDOW_SIZE,
            emission: EmissionChoice::Gaussian,
            n_bins: 30,
            fit: FitConfig::default(),
        }
    }
}

/// Training summary of one perspective model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmDiagnostics {
    pub perspective: String,
    pub n_sequences: usize,
    pub n_observations: usize,
    pub best_restart: usize,
    pub iterations: usize,
    pub converged: bool,
    pub final_log_likelihood: f64,
    pub restart_log_likelihoods: Vec<f64>,
}

/// The eight perspective models plus the scoring window size.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelRegistry {
    models: Vec<ScoringModel>,
    window_size: usize,
}

impl ModelRegistry {
    pub fn new(models: BTreeMap<Perspective, ScoringModel>, window_size: usize) -> Result<Self> {
        if window_size == 0 {
            return Err(Error::config("window size must be at least 1"));
        }
        if let Some(missing) = Perspective::ALL.iter().find(|p| !models.contains_key(p)) {
            return Err(Error::config(format!("registry is missing the {missing} model")));
        }
        if models.len() != Perspective::ALL.len() {
            return Err(Error::config("registry must hold exactly 8 models"));
        }
        for m in models.values() {
            if m.transform != SignalTransform::Log1p {
                return Err(Error::config("perspective models must use the log1p transform"));
            }
        }
        Ok(Self {
            models: models.into_values().collect(),
            window_size,
        })
    }

    /// Fits all eight models on `train`. Perspectives are fitted in parallel
    /// with independent seeds derived from `config.fit.seed`.
    pub fn train(train: &[Transaction], config: &RegistryConfig) -> Result<(Self, Vec<HmmDiagnostics>)> {
        let corpora = build_training_corpora(train);
        if let Some((p, _)) = corpora.iter().find(|(_, c)| c.is_empty()) {
            return Err(Error::EmptyPerspectiveCorpus(*p));
        }
        let fitted: Vec<Result<(Perspective, ScoringModel, HmmDiagnostics)>> = corpora
            .into_par_iter()
            .map(|(p, corpus)| {
                let fit_cfg = FitConfig {
                    seed: derive_seed(config.fit.seed, p.index() as u64),
                    ..config.fit.clone()
                };
                let (corpus, bins) = match config.emission {
                    EmissionChoice::Gaussian => (corpus, None),
                    EmissionChoice::Categorical => {
                        let pooled: Vec<f64> = corpus.iter().flat_map(continuous).copied().collect();
                        let bins = Discretizer::fit(&pooled, config.n_bins)?;
                        let symbols = corpus
                            .iter()
                            .map(|s| {
                                ObservationSequence::Symbols(
                                    continuous(s).iter().map(|&x| bins.symbol(x)).collect(),
                                )
                            })
                            .collect();
                        (symbols, Some(bins))
                    }
                };
                let fit_cfg = FitConfig {
                    n_symbols: bins.as_ref().map(Discretizer::n_symbols),
                    ..fit_cfg
                };
                let report = fit_baum_welch_report(&corpus, config.n_states, &fit_cfg)?;
                let best = &report.restarts[report.best_restart];
                let diag = HmmDiagnostics {
                    perspective: p.name().to_owned(),
                    n_sequences: corpus.len(),
                    n_observations: corpus.iter().map(ObservationSequence::len).sum(),
                    best_restart: report.best_restart,
                    iterations: best.iterations(),
                    converged: best.converged,
                    final_log_likelihood: report.log_likelihood,
                    restart_log_likelihoods: report
                        .restarts
                        .iter()
                        .map(|r| r.final_log_likelihood())
                        .collect(),
                };
                let model = ScoringModel::new(report.model, SignalTransform::Log1p, bins)?;
                Ok((p, model, diag))
            })
            .collect();
        let mut models = BTreeMap::new();
        let mut diags = Vec::with_capacity(8);
        for r in fitted {
            let (p, m, d) = r?;
            models.insert(p, m);
            diags.push(d);
        }
        Ok((Self::new(models, config.window_size)?, diags))
    }

    pub fn window_size(&self) -> usize {
        self.window_size
    }

    pub fn model(&self, p: Perspective) -> &ScoringModel {
        &self.models[p.index()]
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = RegistryDocument {
            format_version: 1,
            window_size: self.window_size,
            models: Perspective::ALL
                .iter()
                .map(|&p| PerspectiveModel {
                    perspective: p.name().to_owned(),
                    model: self.model(p).to_document(),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: RegistryDocument = serde_json::from_str(text)?;
        if doc.format_version != 1 {
            return Err(Error::invalid_model(format!(
                "unsupported registry format_version {}",
                doc.format_version
            )));
        }
        let mut models = BTreeMap::new();
        for entry in doc.models {
            let p = Perspective::from_name(&entry.perspective).ok_or_else(|| {
                Error::invalid_model(format!("unknown perspective {}", entry.perspective))
            })?;
            if models
                .insert(p, ScoringModel::from_document(entry.model)?)
                .is_some()
            {
                return Err(Error::invalid_model(format!("duplicate perspective {p}")));
            }
        }
        Self::new(models, doc.window_size)
    }
}

fn continuous(s: &ObservationSequence) -> &[f64] {
    match s {
        ObservationSequence::Continuous(v) => v,
        ObservationSequence::Symbols(_) => unreachable!("corpora hold transformed values"),
    }
}

/// SplitMix64 step; maps (master seed, stream) to a well-mixed child seed.
pub(crate) fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master
        .wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegistryDocument {
    format_version: u32,
    window_size: usize,
    models: Vec<PerspectiveModel>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PerspectiveModel {
    perspective: String,
    model: ModelDocument,
}

fn normalized_score(model: &ScoringModel, window: &[f64]) -> Result<f64> {
    if window.is_empty() {
        return Ok(0.0);
    }
    let ll = model.log_likelihood(window)?;
    Ok(if ll.is_finite() {
        ll / window.len() as f64
    } else {
        IMPOSSIBLE_WINDOW_SCORE
    })
}

fn history_for<'a>(kind: ActorKind, ch: &'a ActorHistory, tm: &'a ActorHistory) -> &'a ActorHistory {
    match kind {
        ActorKind::CardHolder => ch,
        ActorKind::Terminal => tm,
    }
}

/// Scores the windows ending at `tx` against all eight models.
pub fn hmm_features(
    tx: u64,
    ch_history: &ActorHistory,
    tm_history: &ActorHistory,
    registry: &ModelRegistry,
) -> Result<HmmFeatureSet> {
    let w = registry.window_size();
    let mut values = [0.0; 8];
    let mut positions = [0usize; 2];
    for (slot, kind) in [ActorKind::CardHolder, ActorKind::Terminal].into_iter().enumerate() {
        let history = history_for(kind, ch_history, tm_history);
        let pos = history.position(tx).ok_or(Error::UnknownTransaction(tx))?;
        positions[slot] = pos;
        for signal in [SignalKind::Amount, SignalKind::TimeDelta] {
            let full = signal_values(&history.transactions[..=pos], signal);
            let window = &full[window_range(pos, signal, w)];
            for p in Perspective::ALL
                .iter()
                .filter(|p| p.actor == kind && p.signal == signal)
            {
                values[p.index()] = normalized_score(registry.model(*p), window)?;
            }
        }
    }
    Ok(HmmFeatureSet {
        values,
        hist_len_ch: (positions[0] + 1).min(w),
        hist_len_tm: (positions[1] + 1).min(w),
    })
}

/// Aggregates for one transaction by scanning its two histories.
pub fn aggregate_features(
    tx: u64,
    ch_history: &ActorHistory,
    tm_history: &ActorHistory,
) -> Result<AggregateFeatureSet> {
    let ch_pos = ch_history.position(tx).ok_or(Error::UnknownTransaction(tx))?;
    let tm_pos = tm_history.position(tx).ok_or(Error::UnknownTransaction(tx))?;
    let current = &ch_history.transactions[ch_pos];

    let trailing = |h: &ActorHistory, pos: usize| {
        let t = h.transactions[pos].timestamp;
        let start = h.transactions[..pos]
            .partition_point(|x| x.timestamp <= t - AGGREGATION_WINDOW_SECS);
        h.transactions[start..=pos].to_vec()
    };
    let ch_win = trailing(ch_history, ch_pos);
    let tm_win = trailing(tm_history, tm_pos);
    let count_sum = |xs: &mut dyn Iterator<Item = &Transaction>| {
        xs.fold((0u32, 0.0), |(c, s), t| (c + 1, s + t.amount))
    };

    let (aggch1, aggch2) = count_sum(&mut ch_win.iter());
    let (aggch3, aggch4) = count_sum(&mut ch_win.iter().filter(|t| t.country == current.country));
    let (aggtm1, aggtm2) = count_sum(&mut tm_win.iter());
    let (aggtm3, aggtm4) =
        count_sum(&mut tm_win.iter().filter(|t| t.card_type == current.card_type));
    Ok(AggregateFeatureSet {
        aggch1,
        aggch2,
        aggch3,
        aggch4,
        aggtm1,
        aggtm2,
        aggtm3,
        aggtm4,
    })
}

/// Trailing-window count and sum at each position of a chronological run,
/// by a two-pointer sweep over prefix sums.
fn rolling_count_sum(timestamps: &[i64], amounts: &[f64]) -> Vec<(u32, f64)> {
    let mut prefix = Vec::with_capacity(amounts.len() + 1);
    prefix.push(0.0);
    for a in amounts {
        prefix.push(prefix.last().unwrap() + a);
    }
    let mut start = 0;
    (0..timestamps.len())
        .map(|i| {
            while timestamps[start] <= timestamps[i] - AGGREGATION_WINDOW_SECS {
                start += 1;
            }
            ((i + 1 - start) as u32, prefix[i + 1] - prefix[start])
        })
        .collect()
}

/// Rolling aggregates restricted to transactions sharing a category with
/// the current one; `key` selects the category.
fn rolling_by_key(history: &ActorHistory, key: impl Fn(&Transaction) -> &str) -> Vec<(u32, f64)> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, t) in history.transactions.iter().enumerate() {
        groups.entry(key(t)).or_default().push(i);
    }
    let mut out = vec![(0, 0.0); history.len()];
    for idx in groups.values() {
        let ts: Vec<i64> = idx.iter().map(|&i| history.transactions[i].timestamp).collect();
        let am: Vec<f64> = idx.iter().map(|&i| history.transactions[i].amount).collect();
        for (&i, v) in idx.iter().zip(rolling_count_sum(&ts, &am)) {
            out[i] = v;
        }
    }
    out
}

/// Per-position features of one actor history: (all, filtered) aggregates,
/// the four perspective scores of this actor and the capped history length.
struct ActorFeatures {
    tx_ids: Vec<u64>,
    all: Vec<(u32, f64)>,
    filtered: Vec<(u32, f64)>,
    scores: Vec<[f64; 4]>,
    hist_len: Vec<usize>,
}

fn actor_features(history: &ActorHistory, registry: &ModelRegistry) -> Result<ActorFeatures> {
    let ts: Vec<i64> = history.transactions.iter().map(|t| t.timestamp).collect();
    let am: Vec<f64> = history.transactions.iter().map(|t| t.amount).collect();
    let all = rolling_count_sum(&ts, &am);
    let filtered = match history.kind {
        ActorKind::CardHolder => rolling_by_key(history, |t| &t.country),
        ActorKind::Terminal => rolling_by_key(history, |t| &t.card_type),
    };
    let w = registry.window_size();
    let perspectives: Vec<Perspective> = Perspective::ALL
        .into_iter()
        .filter(|p| p.actor == history.kind)
        .collect();
    let signals = [
        signal_values(&history.transactions, SignalKind::Amount),
        signal_values(&history.transactions, SignalKind::TimeDelta),
    ];
    let mut scores = Vec::with_capacity(history.len());
    for pos in 0..history.len() {
        let mut row = [0.0; 4];
        for (slot, p) in perspectives.iter().enumerate() {
            let full = &signals[p.signal as usize];
            row[slot] = normalized_score(registry.model(*p), &full[window_range(pos, p.signal, w)])?;
        }
        scores.push(row);
    }
    Ok(ActorFeatures {
        tx_ids: history.transactions.iter().map(|t| t.tx_id).collect(),
        all,
        filtered,
        scores,
        hist_len: (0..history.len()).map(|p| (p + 1).min(w)).collect(),
    })
}

/// Enriches every transaction, preserving input order. Each feature only
/// looks at transactions at or before the current one in its actor history.
pub fn enrich_dataset(
    txns: &[Transaction],
    registry: &ModelRegistry,
) -> Result<Vec<EnrichedTransaction>> {
    let ch = group_by_actor(txns, ActorKind::CardHolder);
    let tm = group_by_actor(txns, ActorKind::Terminal);
    let ch_feats: Vec<ActorFeatures> = ch
        .par_iter()
        .map(|h| actor_features(h, registry))
        .collect::<Result<_>>()?;
    let tm_feats: Vec<ActorFeatures> = tm
        .par_iter()
        .map(|h| actor_features(h, registry))
        .collect::<Result<_>>()?;

    let index = |feats: &[ActorFeatures]| -> HashMap<u64, (usize, usize)> {
        let mut m = HashMap::with_capacity(txns.len());
        for (a, f) in feats.iter().enumerate() {
            for (pos, id) in f.tx_ids.iter().enumerate() {
                m.insert(*id, (a, pos));
            }
        }
        m
    };
    let ch_index = index(&ch_feats);
    let tm_index = index(&tm_feats);
    if ch_index.len() != txns.len() {
        return Err(Error::domain("transaction ids are not unique"));
    }

    Ok(txns
        .iter()
        .map(|t| {
            let (ca, cp) = ch_index[&t.tx_id];
            let (ta, tp) = tm_index[&t.tx_id];
            let c = &ch_feats[ca];
            let m = &tm_feats[ta];
            let mut values = [0.0; 8];
            values[..4].copy_from_slice(&c.scores[cp]);
            values[4..].copy_from_slice(&m.scores[tp]);
            EnrichedTransaction {
                tx: t.clone(),
                aggregates: AggregateFeatureSet {
                    aggch1: c.all[cp].0,
                    aggch2: c.all[cp].1,
                    aggch3: c.filtered[cp].0,
                    aggch4: c.filtered[cp].1,
                    aggtm1: m.all[tp].0,
                    aggtm2: m.all[tp].1,
                    aggtm3: m.filtered[tp].0,
                    aggtm4: m.filtered[tp].1,
                },
                hmm: HmmFeatureSet {
                    values,
                    hist_len_ch: c.hist_len[cp],
                    hist_len_tm: m.hist_len[tp],
                },
                label: t.is_fraud,
            }
        })
        .collect())
}

/// Column names of the enriched CSV, in order.
pub fn enriched_header() -> Vec<String> {
    let mut h: Vec<String> = [
        "tx_id",
        "timestamp",
        "card_id",
        "terminal_id",
        "amount",
        "country",
        "card_type",
        "aggch1",
        "aggch2",
        "aggch3",
        "aggch4",
        "aggtm1",
        "aggtm2",
        "aggtm3",
        "aggtm4",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend((1..=8).map(|i| format!("hmm_{i}")));
    h.extend(["hist_len_ch", "hist_len_tm", "label"].map(String::from));
    h
}

/// Writes rows as CSV. Floats use Rust's shortest round-trip formatting,
/// which preserves every bit of the value.
pub fn write_enriched_csv<W: Write>(writer: W, rows: &[EnrichedTransaction]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(enriched_header())?;
    for r in rows {
        let a = &r.aggregates;
        let mut rec: Vec<String> = vec![
            r.tx.tx_id.to_string(),
            r.tx.timestamp.to_string(),
            r.tx.card_id.clone(),
            r.tx.terminal_id.clone(),
            fmt_f64(r.tx.amount),
            r.tx.country.clone(),
            r.tx.card_type.clone(),
            a.aggch1.to_string(),
            fmt_f64(a.aggch2),
            a.aggch3.to_string(),
            fmt_f64(a.aggch4),
            a.aggtm1.to_string(),
            fmt_f64(a.aggtm2),
            a.aggtm3.to_string(),
            fmt_f64(a.aggtm4),
        ];
        rec.extend(r.hmm.values.iter().map(|v| fmt_f64(*v)));
        rec.push(r.hmm.hist_len_ch.to_string());
        rec.push(r.hmm.hist_len_tm.to_string());
        rec.push(u8::from(r.label).to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

/// Parses an enriched CSV written by [`write_enriched_csv`].
pub fn read_enriched_csv<R: Read>(reader: R) -> Result<Vec<EnrichedTransaction>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    if header != enriched_header() {
        return Err(Error::Parse {
            line: 1,
            msg: "unexpected enriched CSV header".into(),
        });
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let err = |msg: String| Error::Parse { line, msg };
        let num = |i: usize| -> Result<f64> {
            let v: f64 = rec[i]
                .parse()
                .map_err(|_| err(format!("column {} is not a number", header[i])))?;
            if v.is_nan() {
                return Err(err(format!("column {} is NaN", header[i])));
            }
            Ok(v)
        };
        let int = |i: usize| -> Result<u64> {
            rec[i]
                .parse()
                .map_err(|_| err(format!("column {} is not an unsigned integer", header[i])))
        };
        let count = |i: usize| -> Result<u32> {
            rec[i]
                .parse()
                .map_err(|_| err(format!("column {} is not a count", header[i])))
        };
        let label = match &rec[25] {
            "0" => false,
            "1" => true,
            other => return Err(err(format!("label must be 0 or 1, got {other:?}"))),
        };
        let timestamp: i64 = rec[1]
            .parse()
            .map_err(|_| err("timestamp is not an integer".into()))?;
        let mut values = [0.0; 8];
        for (k, v) in values.iter_mut().enumerate() {
            *v = num(15 + k)?;
        }
        out.push(EnrichedTransaction {
            tx: Transaction {
                tx_id: int(0)?,
                timestamp,
                card_id: rec[2].to_owned(),
                terminal_id: rec[3].to_owned(),
                amount: num(4)?,
                country: rec[5].to_owned(),
                card_type: rec[6].to_owned(),
                is_fraud: label,
            },
            aggregates: AggregateFeatureSet {
                aggch1: count(7)?,
                aggch2: num(8)?,
                aggch3: count(9)?,
                aggch4: num(10)?,
                aggtm1: count(11)?,
                aggtm2: num(12)?,
                aggtm3: count(13)?,
                aggtm4: num(14)?,
            },
            hmm: HmmFeatureSet {
                values,
                hist_len_ch: int(23)? as usize,
                hist_len_tm: int(24)? as usize,
            },
            label,
        });
    }
    Ok(out)
}
