//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use hmm_fraud::features::AggregateFeatureSet;
use hmm_fraud::hmm::{EmissionParams, HiddenMarkovModel, ObservationSequence};
use hmm_fraud::sequencer::Transaction;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean) * (x - mean) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// `ln Σ_paths p(path) p(obs | path)`, enumerating all K^T state paths in
/// linear space.
pub fn brute_force_log_likelihood(
    initial: &[f64],
    transition: &[Vec<f64>],
    emission: impl Fn(usize, usize) -> f64,
    t_len: usize,
) -> f64 {
    let k = initial.len();
    let mut total = 0.0;
    let mut path = vec![0usize; t_len];
    for code in 0..k.pow(t_len as u32) {
        let mut c = code;
        for z in path.iter_mut() {
            *z = c % k;
            c /= k;
        }
        let mut p = initial[path[0]] * emission(path[0], 0);
        for t in 1..t_len {
            p *= transition[path[t - 1]][path[t]] * emission(path[t], t);
        }
        total += p;
    }
    total.ln()
}

pub fn brute_force_model_ll(model: &HiddenMarkovModel, seq: &ObservationSequence) -> f64 {
    let transition = model.transition();
    match (model.emissions(), seq) {
        (EmissionParams::Gaussian { means, variances }, ObservationSequence::Continuous(xs)) => {
            brute_force_log_likelihood(
                model.initial(),
                &transition,
                |s, t| normal_pdf(xs[t], means[s], variances[s]),
                xs.len(),
            )
        }
        (EmissionParams::Categorical { n_symbols, probs }, ObservationSequence::Symbols(ys)) => {
            brute_force_log_likelihood(
                model.initial(),
                &transition,
                |s, t| probs[s * n_symbols + ys[t]],
                ys.len(),
            )
        }
        _ => panic!("mode mismatch"),
    }
}

pub fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| 0.05 + rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

pub fn random_model(rng: &mut ChaCha8Rng, k: usize, categorical: bool) -> HiddenMarkovModel {
    let initial = random_simplex(rng, k);
    let transition = (0..k).map(|_| random_simplex(rng, k)).collect();
    let emissions = if categorical {
        let m = rng.random_range(2..6);
        EmissionParams::Categorical {
            n_symbols: m,
            probs: (0..k).flat_map(|_| random_simplex(rng, m)).collect(),
        }
    } else {
        EmissionParams::Gaussian {
            means: (0..k).map(|_| rng.random_range(-3.0..3.0)).collect(),
            variances: (0..k).map(|_| rng.random_range(0.2..3.0)).collect(),
        }
    };
    HiddenMarkovModel::new(initial, transition, emissions).unwrap()
}

pub fn random_sequence(rng: &mut ChaCha8Rng, model: &HiddenMarkovModel, t_len: usize) -> ObservationSequence {
    match model.emissions() {
        EmissionParams::Gaussian { .. } => {
            ObservationSequence::Continuous((0..t_len).map(|_| rng.random_range(-4.0..4.0)).collect())
        }
        EmissionParams::Categorical { n_symbols, .. } => {
            ObservationSequence::Symbols((0..t_len).map(|_| rng.random_range(0..*n_symbols)).collect())
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Card and terminal aggregates recomputed by scanning the full list for every field.
pub fn brute_force_aggregates(txns: &[Transaction], cur: &Transaction) -> AggregateFeatureSet {
    let in_window = |t: &Transaction| {
        t.order_key() <= cur.order_key() && t.timestamp > cur.timestamp - 86_400
    };
    let tally = |pred: &dyn Fn(&Transaction) -> bool| {
        txns.iter()
            .filter(|t| in_window(t) && pred(t))
            .fold((0u32, 0.0), |(n, s), t| (n + 1, s + t.amount))
    };
    let (aggch1, aggch2) = tally(&|t| t.card_id == cur.card_id);
    let (aggch3, aggch4) = tally(&|t| t.card_id == cur.card_id && t.country == cur.country);
    let (aggtm1, aggtm2) = tally(&|t| t.terminal_id == cur.terminal_id);
    let (aggtm3, aggtm4) = tally(&|t| t.terminal_id == cur.terminal_id && t.card_type == cur.card_type);
    AggregateFeatureSet {
        aggch1,
        aggch2,
        aggch3,
        aggch4,
        aggtm1,
        aggtm2,
        aggtm3,
        aggtm4,
    }
}

/// PR-AUC by sweeping every distinct score as a threshold and recounting
/// the predicted-positive set from scratch.
pub fn threshold_sweep_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let total_pos = labels.iter().filter(|&&y| y).count() as f64;
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut auc = 0.0;
    let mut prev_recall = 0.0;
    for tau in thresholds {
        let (mut tp, mut fp) = (0.0, 0.0);
        for (s, y) in scores.iter().zip(labels) {
            if *s >= tau {
                if *y {
                    tp += 1.0
                } else {
                    fp += 1.0
                }
            }
        }
        let recall = tp / total_pos;
        let precision = tp / (tp + fp);
        auc += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    auc
}

/// Transactions of one actor up to and including `cur`, chronological.
pub fn prefix_of<'a>(
    txns: &'a [Transaction],
    cur: &Transaction,
    same_actor: impl Fn(&Transaction) -> bool,
) -> Vec<&'a Transaction> {
    let mut v: Vec<&Transaction> = txns
        .iter()
        .filter(|t| same_actor(t) && t.order_key() <= cur.order_key())
        .collect();
    v.sort_by_key(|t| t.order_key());
    v
}
