//! Baum-Welch estimation with seeded multi-restart.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::forward::{backward, forward, log_sum_exp};
use super::model::{EmissionKind, EmissionParams, HiddenMarkovModel, ObsSlice, ObservationSequence};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Upper bound on M-steps per restart.
    pub max_iterations: usize,
    /// Stop once the relative log-likelihood gain drops below this.
    pub convergence_tol: f64,
    pub n_restarts: usize,
    pub seed: u64,
    pub variance_floor: f64,
    /// Alphabet size for categorical corpora. Inferred from the largest
    /// symbol when absent.
    pub n_symbols: Option<usize>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            convergence_tol: 1e-6,
            n_restarts: 5,
            seed: 0,
            variance_floor: 1e-6,
            n_symbols: None,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::config("max_iterations must be positive"));
        }
        if !(self.convergence_tol > 0.0 && self.convergence_tol.is_finite()) {
            return Err(Error::config("convergence_tol must be positive"));
        }
        if self.n_restarts == 0 {
            return Err(Error::config("n_restarts must be at least 1"));
        }
        if !(self.variance_floor > 0.0 && self.variance_floor.is_finite()) {
            return Err(Error::config("variance_floor must be positive"));
        }
        Ok(())
    }
}

/// Log-likelihood trajectory of one restart. Entry `i` is the corpus
/// log-likelihood of the parameters after `i` M-steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartTrace {
    pub log_likelihoods: Vec<f64>,
    pub converged: bool,
}

impl RestartTrace {
    pub fn iterations(&self) -> usize {
        self.log_likelihoods.len().saturating_sub(1)
    }

    pub fn final_log_likelihood(&self) -> f64 {
        *self.log_likelihoods.last().expect("at least one E-step")
    }
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub model: HiddenMarkovModel,
    pub log_likelihood: f64,
    pub best_restart: usize,
    pub restarts: Vec<RestartTrace>,
}

/// Fits a `n_states` model to `corpus` and returns the best restart.
pub fn fit_baum_welch(
    corpus: &[ObservationSequence],
    n_states: usize,
    config: &FitConfig,
) -> Result<HiddenMarkovModel> {
    fit_baum_welch_report(corpus, n_states, config).map(|r| r.model)
}

/// Same as [`fit_baum_welch`] but keeps every restart's trajectory.
pub fn fit_baum_welch_report(
    corpus: &[ObservationSequence],
    n_states: usize,
    config: &FitConfig,
) -> Result<FitReport> {
    config.validate()?;
    if n_states == 0 {
        return Err(Error::config("n_states must be at least 1"));
    }
    let kind = check_corpus(corpus, config)?;

    let runs: Vec<Result<(HiddenMarkovModel, RestartTrace)>> = (0..config.n_restarts)
        .into_par_iter()
        .map(|restart| {
            let mut rng = restart_rng(config.seed, restart);
            let init = initialize(corpus, n_states, &kind, config, &mut rng)?;
            run_em(init, corpus, config)
        })
        .collect();

    let mut best: Option<(usize, HiddenMarkovModel, f64)> = None;
    let mut traces = Vec::with_capacity(runs.len());
    for (i, run) in runs.into_iter().enumerate() {
        let (model, trace) = run?;
        let ll = trace.final_log_likelihood();
        // strict comparison keeps the earliest restart on ties
        if best.as_ref().is_none_or(|(_, _, b)| ll > *b) {
            best = Some((i, model, ll));
        }
        traces.push(trace);
    }
    let (best_restart, model, log_likelihood) = best.expect("n_restarts >= 1");
    Ok(FitReport {
        model,
        log_likelihood,
        best_restart,
        restarts: traces,
    })
}

/// Independent stream per restart so restarts can run in any order.
fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    rng
}

enum CorpusKind {
    Gaussian,
    Categorical(usize),
}

fn check_corpus(corpus: &[ObservationSequence], config: &FitConfig) -> Result<CorpusKind> {
    let first = corpus.first().ok_or(Error::EmptyCorpus)?;
    let kind = match first {
        ObservationSequence::Continuous(_) => EmissionKind::Gaussian,
        ObservationSequence::Symbols(_) => EmissionKind::Categorical,
    };
    let mut max_symbol = 0usize;
    for seq in corpus {
        if seq.is_empty() {
            return Err(Error::EmptySequence);
        }
        match (kind, seq) {
            (EmissionKind::Gaussian, ObservationSequence::Continuous(xs)) => {
                if xs.iter().any(|x| !x.is_finite()) {
                    return Err(Error::domain("non-finite observation in corpus"));
                }
            }
            (EmissionKind::Categorical, ObservationSequence::Symbols(xs)) => {
                max_symbol = max_symbol.max(*xs.iter().max().expect("non-empty"));
            }
            _ => return Err(Error::domain("corpus mixes continuous and symbol sequences")),
        }
    }
    Ok(match kind {
        EmissionKind::Gaussian => CorpusKind::Gaussian,
        EmissionKind::Categorical => {
            let m = match config.n_symbols {
                Some(m) if max_symbol >= m => {
                    return Err(Error::domain(format!(
                        "symbol {max_symbol} out of range for {m} symbols"
                    )))
                }
                Some(m) => m,
                None => (max_symbol + 1).max(2),
            };
            CorpusKind::Categorical(m)
        }
    })
}

fn jittered_distribution(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| 1.0 + 0.5 * rng.random::<f64>()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// Linear-interpolated empirical quantile of sorted data.
fn quantile(sorted: &[f64], level: f64) -> f64 {
    let pos = level.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

fn initialize(
    corpus: &[ObservationSequence],
    k: usize,
    kind: &CorpusKind,
    config: &FitConfig,
    rng: &mut ChaCha8Rng,
) -> Result<HiddenMarkovModel> {
    let initial = jittered_distribution(k, rng);
    let transition: Vec<f64> = (0..k).flat_map(|_| jittered_distribution(k, rng)).collect();
    let emissions = match kind {
        CorpusKind::Gaussian => {
            let mut values: Vec<f64> = corpus
                .iter()
                .flat_map(|s| match s {
                    ObservationSequence::Continuous(xs) => xs.iter().copied(),
                    ObservationSequence::Symbols(_) => unreachable!(),
                })
                .collect();
            values.sort_by(f64::total_cmp);
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            let means = (0..k)
                .map(|s| quantile(&values, (s as f64 + rng.random::<f64>()) / k as f64))
                .collect();
            EmissionParams::Gaussian {
                means,
                variances: vec![var.max(config.variance_floor); k],
            }
        }
        CorpusKind::Categorical(m) => {
            let mut freq = vec![1.0; *m];
            for seq in corpus {
                if let ObservationSequence::Symbols(xs) = seq {
                    for &x in xs {
                        freq[x] += 1.0;
                    }
                }
            }
            let mut probs = Vec::with_capacity(k * m);
            for _ in 0..k {
                let row: Vec<f64> = freq
                    .iter()
                    .map(|f| f * (0.5 + rng.random::<f64>()))
                    .collect();
                let total: f64 = row.iter().sum();
                probs.extend(row.into_iter().map(|x| x / total));
            }
            EmissionParams::Categorical {
                n_symbols: *m,
                probs,
            }
        }
    };
    HiddenMarkovModel::from_flat(initial, transition, emissions)
}

/// Expected sufficient statistics from one E-step.
struct Expectations {
    log_likelihood: f64,
    initial: Vec<f64>,
    transition: Vec<f64>,
    /// Posterior state occupancies per sequence, row-major `T × K`.
    gammas: Vec<Vec<f64>>,
}

fn e_step(model: &HiddenMarkovModel, corpus: &[ObservationSequence]) -> Result<Expectations> {
    let k = model.n_states();
    let log_a = model.log_transition_flat();
    let a = model.transition_flat();
    let mut out = Expectations {
        log_likelihood: 0.0,
        initial: vec![0.0; k],
        transition: vec![0.0; k * k],
        gammas: Vec::with_capacity(corpus.len()),
    };
    for seq in corpus {
        let obs = seq.as_slice();
        let t_len = obs.len();
        let log_b = model.log_emission_table(obs);
        let alpha = forward(model, &log_b, t_len);
        let beta = backward(model, &log_b, t_len);
        let ll = log_sum_exp(&alpha[(t_len - 1) * k..]);
        if !ll.is_finite() {
            return Err(Error::domain(
                "sequence has zero likelihood under the current parameters",
            ));
        }
        out.log_likelihood += ll;

        let gamma: Vec<f64> = alpha
            .iter()
            .zip(&beta)
            .map(|(a, b)| (a + b - ll).exp())
            .collect();
        for (acc, g) in out.initial.iter_mut().zip(&gamma) {
            *acc += g;
        }
        // xi_t(i, j) = exp(alpha_t(i) - ll + m) · a_ij · exp(b_j + beta_j - m),
        // factored so each step needs 2K exponentials instead of K²
        let mut left = vec![0.0; k];
        let mut right = vec![0.0; k];
        for t in 0..t_len.saturating_sub(1) {
            let next = (t + 1) * k;
            for (to, r) in right.iter_mut().enumerate() {
                *r = log_b[next + to] + beta[next + to];
            }
            let m = right.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if m == f64::NEG_INFINITY {
                continue;
            }
            for r in right.iter_mut() {
                *r = (*r - m).exp();
            }
            for from in 0..k {
                left[from] = (alpha[t * k + from] - ll + m).exp();
            }
            if left.iter().all(|x| x.is_finite()) {
                for from in 0..k {
                    for to in 0..k {
                        out.transition[from * k + to] += left[from] * a[from * k + to] * right[to];
                    }
                }
            } else {
                for from in 0..k {
                    let af = alpha[t * k + from];
                    if af == f64::NEG_INFINITY {
                        continue;
                    }
                    for to in 0..k {
                        let idx = next + to;
                        out.transition[from * k + to] +=
                            (af + log_a[from * k + to] + log_b[idx] + beta[idx] - ll).exp();
                    }
                }
            }
        }
        out.gammas.push(gamma);
    }
    Ok(out)
}

fn normalize_or_keep(counts: &[f64], previous: &[f64]) -> Vec<f64> {
    let total: f64 = counts.iter().sum();
    if total > 0.0 && total.is_finite() {
        counts.iter().map(|c| c / total).collect()
    } else {
        previous.to_vec()
    }
}

fn m_step(
    model: &HiddenMarkovModel,
    corpus: &[ObservationSequence],
    stats: &Expectations,
    config: &FitConfig,
) -> Result<HiddenMarkovModel> {
    let k = model.n_states();
    let initial = normalize_or_keep(&stats.initial, model.initial());
    let mut transition = Vec::with_capacity(k * k);
    for from in 0..k {
        transition.extend(normalize_or_keep(
            &stats.transition[from * k..(from + 1) * k],
            model.transition_row(from),
        ));
    }

    let emissions = match model.emissions() {
        EmissionParams::Gaussian { means, variances } => {
            let mut weight = vec![0.0; k];
            let mut weighted_sum = vec![0.0; k];
            for (seq, gamma) in corpus.iter().zip(&stats.gammas) {
                let ObsSlice::Continuous(xs) = seq.as_slice() else {
                    unreachable!()
                };
                for (t, x) in xs.iter().enumerate() {
                    for s in 0..k {
                        let g = gamma[t * k + s];
                        weight[s] += g;
                        weighted_sum[s] += g * x;
                    }
                }
            }
            let new_means: Vec<f64> = (0..k)
                .map(|s| {
                    if weight[s] > 0.0 {
                        weighted_sum[s] / weight[s]
                    } else {
                        means[s]
                    }
                })
                .collect();
            let mut sq = vec![0.0; k];
            for (seq, gamma) in corpus.iter().zip(&stats.gammas) {
                let ObsSlice::Continuous(xs) = seq.as_slice() else {
                    unreachable!()
                };
                for (t, x) in xs.iter().enumerate() {
                    for s in 0..k {
                        let d = x - new_means[s];
                        sq[s] += gamma[t * k + s] * d * d;
                    }
                }
            }
            let new_vars = (0..k)
                .map(|s| {
                    if weight[s] > 0.0 {
                        (sq[s] / weight[s]).max(config.variance_floor)
                    } else {
                        variances[s]
                    }
                })
                .collect();
            EmissionParams::Gaussian {
                means: new_means,
                variances: new_vars,
            }
        }
        EmissionParams::Categorical { n_symbols, probs } => {
            let m = *n_symbols;
            let mut counts = vec![0.0; k * m];
            for (seq, gamma) in corpus.iter().zip(&stats.gammas) {
                let ObsSlice::Symbols(xs) = seq.as_slice() else {
                    unreachable!()
                };
                for (t, &x) in xs.iter().enumerate() {
                    for s in 0..k {
                        counts[s * m + x] += gamma[t * k + s];
                    }
                }
            }
            let mut new_probs = Vec::with_capacity(k * m);
            for s in 0..k {
                new_probs.extend(normalize_or_keep(
                    &counts[s * m..(s + 1) * m],
                    &probs[s * m..(s + 1) * m],
                ));
            }
            EmissionParams::Categorical {
                n_symbols: m,
                probs: new_probs,
            }
        }
    };
    HiddenMarkovModel::from_flat(initial, transition, emissions)
}

fn run_em(
    mut model: HiddenMarkovModel,
    corpus: &[ObservationSequence],
    config: &FitConfig,
) -> Result<(HiddenMarkovModel, RestartTrace)> {
    let mut trace = RestartTrace {
        log_likelihoods: Vec::new(),
        converged: false,
    };
    loop {
        let stats = e_step(&model, corpus)?;
        let ll = stats.log_likelihood;
        if let Some(&prev) = trace.log_likelihoods.last() {
            let gain = (ll - prev) / prev.abs().max(f64::MIN_POSITIVE);
            if gain < config.convergence_tol {
                trace.converged = true;
            }
        }
        trace.log_likelihoods.push(ll);
        if trace.converged || trace.iterations() >= config.max_iterations {
            break;
        }
        model = m_step(&model, corpus, &stats, config)?;
    }
    Ok((model, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cont(xs: &[f64]) -> ObservationSequence {
        ObservationSequence::Continuous(xs.to_vec())
    }

    #[test]
    fn single_state_recovers_pooled_moments() {
        let corpus = vec![cont(&[1.0, 2.0, 3.0]), cont(&[4.0, 5.0])];
        let m = fit_baum_welch(&corpus, 1, &FitConfig::default()).unwrap();
        let EmissionParams::Gaussian { means, variances } = m.emissions() else {
            panic!("expected gaussian");
        };
        assert!((means[0] - 3.0).abs() < 1e-9);
        assert!((variances[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn constant_corpus_hits_variance_floor() {
        let corpus = vec![cont(&[7.5; 4]), cont(&[7.5; 2])];
        let cfg = FitConfig::default();
        let m = fit_baum_welch(&corpus, 1, &cfg).unwrap();
        let EmissionParams::Gaussian { means, variances } = m.emissions() else {
            panic!("expected gaussian");
        };
        assert!((means[0] - 7.5).abs() < 1e-12);
        assert_eq!(variances[0], cfg.variance_floor);
    }

    #[test]
    fn empty_corpus_and_bad_symbols() {
        assert!(matches!(
            fit_baum_welch(&[], 2, &FitConfig::default()),
            Err(Error::EmptyCorpus)
        ));
        let corpus = vec![ObservationSequence::Symbols(vec![0, 1, 4])];
        let cfg = FitConfig {
            n_symbols: Some(3),
            ..FitConfig::default()
        };
        assert!(matches!(
            fit_baum_welch(&corpus, 2, &cfg),
            Err(Error::Domain(_))
        ));
        let corpus = vec![cont(&[1.0]), ObservationSequence::Symbols(vec![0])];
        assert!(fit_baum_welch(&corpus, 2, &FitConfig::default()).is_err());
        assert!(matches!(
            fit_baum_welch(&[cont(&[])], 2, &FitConfig::default()),
            Err(Error::EmptySequence)
        ));
    }

    #[test]
    fn categorical_fit_is_stochastic_and_monotone() {
        let corpus: Vec<_> = (0..20)
            .map(|i| ObservationSequence::Symbols((0..15).map(|t| (i * t + t / 3) % 4).collect()))
            .collect();
        let report = fit_baum_welch_report(&corpus, 3, &FitConfig::default()).unwrap();
        for trace in &report.restarts {
            for w in trace.log_likelihoods.windows(2) {
                assert!(w[1] >= w[0] - 1e-8, "{} -> {}", w[0], w[1]);
            }
        }
        assert_eq!(report.model.emission_kind(), EmissionKind::Categorical);
    }

    #[test]
    fn restarts_differ_and_fit_is_deterministic() {
        let corpus: Vec<_> = (0..10)
            .map(|i| cont(&[(i % 3) as f64, 4.0 + (i % 2) as f64, 0.5, 5.5, 1.0]))
            .collect();
        let cfg = FitConfig {
            seed: 99,
            ..FitConfig::default()
        };
        let a = fit_baum_welch_report(&corpus, 2, &cfg).unwrap();
        let b = fit_baum_welch_report(&corpus, 2, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.restarts, b.restarts);
        assert_ne!(a.restarts[0].log_likelihoods[0], a.restarts[1].log_likelihoods[0]);
    }
}
