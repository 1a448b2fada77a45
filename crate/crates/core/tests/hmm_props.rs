mod common;

use common::{brute_force_model_ll, normal_pdf, random_model, random_sequence, rng};
use hmm_fraud::hmm::{
    fit_baum_welch, fit_baum_welch_report, Discretizer, EmissionParams, FitConfig,
    HiddenMarkovModel, ObservationSequence, ScoringModel, SignalTransform,
};
use proptest::prelude::*;

#[test]
fn two_state_example_matches_path_sum() {
    let model = HiddenMarkovModel::new(
        vec![0.5, 0.5],
        vec![vec![0.9, 0.1], vec![0.2, 0.8]],
        EmissionParams::Gaussian {
            means: vec![0.0, 3.0],
            variances: vec![1.0, 1.0],
        },
    )
    .unwrap();
    let xs = [0.1, 2.9, 3.2];
    // written out: all 8 paths
    let a = [[0.9, 0.1], [0.2, 0.8]];
    let mu = [0.0, 3.0];
    let mut total = 0.0;
    for z0 in 0..2 {
        for z1 in 0..2 {
            for z2 in 0..2 {
                total += 0.5
                    * normal_pdf(xs[0], mu[z0], 1.0)
                    * a[z0][z1]
                    * normal_pdf(xs[1], mu[z1], 1.0)
                    * a[z1][z2]
                    * normal_pdf(xs[2], mu[z2], 1.0);
            }
        }
    }
    let ll = model.log_likelihood(&xs[..]).unwrap();
    assert!((ll - total.ln()).abs() < 1e-12, "{ll} vs {}", total.ln());
}

#[test]
fn forward_matches_path_enumeration_on_random_models() {
    let mut r = rng(11);
    for case in 0..200 {
        let k = 2 + case % 2;
        let categorical = case % 4 >= 2;
        let model = random_model(&mut r, k, categorical);
        let t_len = 1 + case % 5;
        let seq = random_sequence(&mut r, &model, t_len);
        let ll = model.log_likelihood(&seq).unwrap();
        let oracle = brute_force_model_ll(&model, &seq);
        assert!((ll - oracle).abs() < 1e-9, "case {case}: {ll} vs {oracle}");
    }
}

#[test]
fn zero_probabilities_are_tolerated() {
    let model = HiddenMarkovModel::new(
        vec![1.0, 0.0],
        vec![vec![0.0, 1.0], vec![1.0, 0.0]],
        EmissionParams::Categorical {
            n_symbols: 2,
            probs: vec![1.0, 0.0, 0.0, 1.0],
        },
    )
    .unwrap();
    let ok = ObservationSequence::Symbols(vec![0, 1, 0]);
    assert_eq!(model.log_likelihood(&ok).unwrap(), 0.0);
    let impossible = ObservationSequence::Symbols(vec![0, 0]);
    assert_eq!(model.log_likelihood(&impossible).unwrap(), f64::NEG_INFINITY);
}

/// A sampled corpus plus the alphabet size when it is categorical.
fn random_corpus(seed: u64, categorical: bool) -> (Vec<ObservationSequence>, Option<usize>) {
    let mut r = rng(seed);
    let truth = random_model(&mut r, 2 + (seed % 2) as usize, categorical);
    let corpus = (0..4 + seed % 5)
        .map(|i| truth.sample(5 + (i as usize * 7) % 20, seed * 100 + i))
        .collect();
    let n_symbols = match truth.emissions() {
        EmissionParams::Categorical { n_symbols, .. } => Some(*n_symbols),
        EmissionParams::Gaussian { .. } => None,
    };
    (corpus, n_symbols)
}

#[test]
fn em_log_likelihood_never_decreases() {
    for seed in 0..50 {
        let categorical = seed % 3 == 0;
        let (corpus, n_symbols) = random_corpus(seed, categorical);
        let config = FitConfig {
            n_restarts: 3,
            max_iterations: 60,
            seed,
            n_symbols,
            ..FitConfig::default()
        };
        let report = fit_baum_welch_report(&corpus, 3, &config).unwrap();
        for trace in &report.restarts {
            for w in trace.log_likelihoods.windows(2) {
                assert!(w[1] >= w[0] - 1e-8, "corpus {seed}: {} -> {}", w[0], w[1]);
            }
        }
        let best = report
            .restarts
            .iter()
            .map(|t| t.final_log_likelihood())
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(report.log_likelihood, best);
    }
}

#[test]
fn single_state_fit_is_pooled_mle() {
    let corpus = vec![
        ObservationSequence::Continuous(vec![1.0, 2.0, 3.0]),
        ObservationSequence::Continuous(vec![4.0, 5.0]),
    ];
    let model = fit_baum_welch(&corpus, 1, &FitConfig::default()).unwrap();
    let EmissionParams::Gaussian { means, variances } = model.emissions() else {
        panic!()
    };
    assert!((means[0] - 3.0).abs() < 1e-9);
    assert!((variances[0] - 2.0).abs() < 1e-9);
}

fn matched_mean_error(model: &HiddenMarkovModel, truth: [f64; 2]) -> f64 {
    let EmissionParams::Gaussian { means, .. } = model.emissions() else {
        panic!()
    };
    let direct = (means[0] - truth[0]).abs().max((means[1] - truth[1]).abs());
    let swapped = (means[1] - truth[0]).abs().max((means[0] - truth[1]).abs());
    direct.min(swapped)
}

#[test]
fn sample_then_refit_recovers_means() {
    let truth = HiddenMarkovModel::new(
        vec![0.5, 0.5],
        vec![vec![0.9, 0.1], vec![0.2, 0.8]],
        EmissionParams::Gaussian {
            means: vec![0.0, 5.0],
            variances: vec![1.0, 1.0],
        },
    )
    .unwrap();
    let mut good = 0;
    for seed in 0..10u64 {
        let corpus: Vec<_> = (0..500).map(|i| truth.sample(50, seed * 1000 + i)).collect();
        let config = FitConfig {
            seed,
            ..FitConfig::default()
        };
        let model = fit_baum_welch(&corpus, 2, &config).unwrap();
        if matched_mean_error(&model, [0.0, 5.0]) < 0.3 {
            good += 1;
        }
    }
    assert!(good >= 9, "{good}/10 seeds recovered the means");
}

#[test]
fn fit_is_bitwise_deterministic() {
    let (corpus, _) = random_corpus(7, false);
    let config = FitConfig {
        seed: 3,
        ..FitConfig::default()
    };
    let a = fit_baum_welch(&corpus, 3, &config).unwrap();
    let b = fit_baum_welch(&corpus, 3, &config).unwrap();
    assert_eq!(a, b);
}

#[test]
fn serialized_models_score_identically() {
    let mut r = rng(5);
    for categorical in [false, true] {
        let hmm = random_model(&mut r, 3, categorical);
        let bins = match hmm.emissions() {
            EmissionParams::Categorical { n_symbols, .. } => Some(
                Discretizer::from_edges((1..*n_symbols).map(|i| i as f64 * 0.7).collect()).unwrap(),
            ),
            _ => None,
        };
        let model = ScoringModel::new(hmm, SignalTransform::Log1p, bins).unwrap();
        let reloaded = ScoringModel::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(reloaded, model);
        for t in 1..6 {
            let window: Vec<f64> = (0..t).map(|i| 0.37 * i as f64 + 0.1).collect();
            assert_eq!(
                model.log_likelihood(&window).unwrap().to_bits(),
                reloaded.log_likelihood(&window).unwrap().to_bits()
            );
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn categorical_likelihood_is_a_probability(seed in 0u64..10_000, t_len in 1usize..6) {
        let mut r = rng(seed);
        let model = random_model(&mut r, 3, true);
        let seq = random_sequence(&mut r, &model, t_len);
        let ll = model.log_likelihood(&seq).unwrap();
        prop_assert!(ll <= 1e-12);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&ll.exp()));
    }

    #[test]
    fn fitted_models_are_stochastic(seed in 0u64..1_000) {
        let (corpus, n_symbols) = random_corpus(seed, seed % 2 == 0);
        let config = FitConfig { n_restarts: 2, max_iterations: 20, seed, n_symbols, ..FitConfig::default() };
        let m = fit_baum_welch(&corpus, 2, &config).unwrap();
        prop_assert!((m.initial().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for row in m.transition() {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        if let EmissionParams::Gaussian { variances, .. } = m.emissions() {
            prop_assert!(variances.iter().all(|&v| v >= 1e-6));
        }
    }
}
