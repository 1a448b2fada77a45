//! Forward/backward recursions in log space.

use super::model::{HiddenMarkovModel, ObsSlice};
use crate::error::{Error, Result};

/// `ln Σ exp(xs)`; an empty or all-`-inf` input yields `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn max_of(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Forward lattice. `alpha[t * K + k]` is `ln p(x_0..=x_t, z_t = k)`.
///
/// Each step is a log-sum-exp over predecessors with the maximum factored
/// out, which lets the linear transition matrix be used directly.
pub(crate) fn forward(model: &HiddenMarkovModel, log_b: &[f64], t_len: usize) -> Vec<f64> {
    let k = model.n_states();
    let a = model.transition_flat();
    let mut alpha = vec![f64::NEG_INFINITY; t_len * k];
    for s in 0..k {
        alpha[s] = model.log_initial()[s] + log_b[s];
    }
    let mut scaled = vec![0.0; k];
    for t in 1..t_len {
        let (prev, cur) = alpha.split_at_mut(t * k);
        let prev = &prev[(t - 1) * k..];
        let m = max_of(prev);
        if m == f64::NEG_INFINITY {
            break;
        }
        for (e, p) in scaled.iter_mut().zip(prev) {
            *e = (p - m).exp();
        }
        for to in 0..k {
            let sum: f64 = (0..k).map(|from| scaled[from] * a[from * k + to]).sum();
            cur[to] = m + sum.ln() + log_b[t * k + to];
        }
    }
    alpha
}

/// Backward lattice. `beta[t * K + k]` is `ln p(x_{t+1}.. | z_t = k)`.
pub(crate) fn backward(model: &HiddenMarkovModel, log_b: &[f64], t_len: usize) -> Vec<f64> {
    let k = model.n_states();
    let a = model.transition_flat();
    let mut beta = vec![0.0; t_len * k];
    let mut terms = vec![0.0; k];
    for t in (0..t_len.saturating_sub(1)).rev() {
        let (cur, next) = beta.split_at_mut((t + 1) * k);
        let cur = &mut cur[t * k..];
        let next = &next[..k];
        for to in 0..k {
            terms[to] = log_b[(t + 1) * k + to] + next[to];
        }
        let m = max_of(&terms);
        if m == f64::NEG_INFINITY {
            cur.fill(f64::NEG_INFINITY);
            continue;
        }
        for e in terms.iter_mut() {
            *e = (*e - m).exp();
        }
        for from in 0..k {
            let sum: f64 = (0..k).map(|to| a[from * k + to] * terms[to]).sum();
            cur[from] = m + sum.ln();
        }
    }
    beta
}

impl HiddenMarkovModel {
    /// `ln p(seq | model)` by the forward algorithm.
    pub fn log_likelihood<'a>(&self, seq: impl Into<ObsSlice<'a>>) -> Result<f64> {
        let seq = seq.into();
        if seq.is_empty() {
            return Err(Error::EmptySequence);
        }
        self.check_observations(seq)?;
        let t_len = seq.len();
        let log_b = self.log_emission_table(seq);
        let alpha = forward(self, &log_b, t_len);
        let k = self.n_states();
        Ok(log_sum_exp(&alpha[(t_len - 1) * k..]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmm::model::{EmissionParams, ObservationSequence};

    #[test]
    fn log_sum_exp_edge_cases() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
        assert!((log_sum_exp(&[0.0, 0.0]) - 2f64.ln()).abs() < 1e-15);
        assert!((log_sum_exp(&[-1000.0, -1000.0]) - (-1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, 3.0]), 3.0);
    }

    #[test]
    fn single_state_single_observation_is_normal_log_density() {
        let m = HiddenMarkovModel::new(
            vec![1.0],
            vec![vec![1.0]],
            EmissionParams::Gaussian {
                means: vec![0.0],
                variances: vec![1.0],
            },
        )
        .unwrap();
        let ll = m.log_likelihood(&[0.0][..]).unwrap();
        assert!((ll - (-0.918_938_533_204_672_7)).abs() < 1e-12);
    }

    #[test]
    fn single_state_sums_emission_densities() {
        let m = HiddenMarkovModel::new(
            vec![1.0],
            vec![vec![1.0]],
            EmissionParams::Gaussian {
                means: vec![2.0],
                variances: vec![0.5],
            },
        )
        .unwrap();
        let xs = [1.0, 2.5, 4.0, -1.0];
        let expected: f64 = xs
            .iter()
            .map(|x| -0.5 * (2.0 * std::f64::consts::PI * 0.5).ln() - (x - 2.0f64).powi(2) / 1.0)
            .sum();
        let ll = m.log_likelihood(&xs[..]).unwrap();
        assert!((ll - expected).abs() < 1e-12);
    }

    #[test]
    fn empty_sequence_is_an_error() {
        let m = HiddenMarkovModel::new(
            vec![1.0],
            vec![vec![1.0]],
            EmissionParams::Categorical {
                n_symbols: 2,
                probs: vec![0.5, 0.5],
            },
        )
        .unwrap();
        assert!(matches!(
            m.log_likelihood(&ObservationSequence::Symbols(vec![])),
            Err(Error::EmptySequence)
        ));
        assert!(matches!(
            m.log_likelihood(&[0usize, 5][..]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn impossible_sequence_is_negative_infinity() {
        let m = HiddenMarkovModel::new(
            vec![1.0],
            vec![vec![1.0]],
            EmissionParams::Categorical {
                n_symbols: 2,
                probs: vec![1.0, 0.0],
            },
        )
        .unwrap();
        assert_eq!(m.log_likelihood(&[0usize, 1][..]).unwrap(), f64::NEG_INFINITY);
    }
}
