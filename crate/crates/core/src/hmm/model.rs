use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Tolerance on probability-vector sums accepted by the validators.
pub const STOCHASTIC_TOL: f64 = 1e-9;

/// Per-state emission distributions.
#[derive(Debug, Clone, PartialEq)]
pub enum EmissionParams {
    Gaussian {
        means: Vec<f64>,
        variances: Vec<f64>,
    },
    /// `probs` is a row-major `n_states × n_symbols` matrix.
    Categorical { n_symbols: usize, probs: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmissionKind {
    Gaussian,
    Categorical,
}

impl EmissionParams {
    pub fn kind(&self) -> EmissionKind {
        match self {
            EmissionParams::Gaussian { .. } => EmissionKind::Gaussian,
            EmissionParams::Categorical { .. } => EmissionKind::Categorical,
        }
    }
}

/// An observation sequence in the unit the model was trained on: transformed
/// real values for Gaussian emissions, symbol indices for categorical ones.
#[derive(Debug, Clone, PartialEq)]
pub enum ObservationSequence {
    Continuous(Vec<f64>),
    Symbols(Vec<usize>),
}

/// Borrowed view of an [`ObservationSequence`], used to score windows
/// without copying.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObsSlice<'a> {
    Continuous(&'a [f64]),
    Symbols(&'a [usize]),
}

impl ObservationSequence {
    pub fn len(&self) -> usize {
        match self {
            ObservationSequence::Continuous(v) => v.len(),
            ObservationSequence::Symbols(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_slice(&self) -> ObsSlice<'_> {
        match self {
            ObservationSequence::Continuous(v) => ObsSlice::Continuous(v),
            ObservationSequence::Symbols(v) => ObsSlice::Symbols(v),
        }
    }
}

impl<'a> ObsSlice<'a> {
    pub fn len(&self) -> usize {
        match self {
            ObsSlice::Continuous(v) => v.len(),
            ObsSlice::Symbols(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl<'a> From<&'a ObservationSequence> for ObsSlice<'a> {
    fn from(seq: &'a ObservationSequence) -> Self {
        seq.as_slice()
    }
}

impl<'a> From<&'a [f64]> for ObsSlice<'a> {
    fn from(v: &'a [f64]) -> Self {
        ObsSlice::Continuous(v)
    }
}

impl<'a> From<&'a [usize]> for ObsSlice<'a> {
    fn from(v: &'a [usize]) -> Self {
        ObsSlice::Symbols(v)
    }
}

/// A K-state hidden Markov model.
///
/// Probabilities are held in linear space as the source of truth and the
/// log-space tables used by the dynamic programs are derived from them with
/// `ln`. A model written to disk and reloaded therefore scores bit-identically.
/// Exact zeros become negative infinity.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenMarkovModel {
    n_states: usize,
    initial: Vec<f64>,
    transition: Vec<f64>,
    emissions: EmissionParams,
    log_initial: Vec<f64>,
    log_transition: Vec<f64>,
    // Gaussian: -0.5 ln(2π σ²) per state. Categorical: ln of `probs`.
    log_emission_cache: Vec<f64>,
}

impl HiddenMarkovModel {
    /// Builds a model from linear-space parameters, validating every
    /// stochasticity invariant. `transition` is given as K rows of length K.
    pub fn new(
        initial: Vec<f64>,
        transition: Vec<Vec<f64>>,
        emissions: EmissionParams,
    ) -> Result<Self> {
        let k = initial.len();
        if transition.len() != k || transition.iter().any(|row| row.len() != k) {
            return Err(Error::invalid_model(format!(
                "transition matrix must be {k}x{k}"
            )));
        }
        let flat = transition.into_iter().flatten().collect();
        Self::from_flat(initial, flat, emissions)
    }

    pub(crate) fn from_flat(
        initial: Vec<f64>,
        transition: Vec<f64>,
        emissions: EmissionParams,
    ) -> Result<Self> {
        let k = initial.len();
        if k == 0 {
            return Err(Error::invalid_model("n_states must be at least 1"));
        }
        if transition.len() != k * k {
            return Err(Error::invalid_model(format!(
                "transition matrix must be {k}x{k}"
            )));
        }
        check_distribution("initial", &initial)?;
        for (i, row) in transition.chunks(k).enumerate() {
            check_distribution(&format!("transition row {i}"), row)?;
        }
        match &emissions {
            EmissionParams::Gaussian { means, variances } => {
                if means.len() != k || variances.len() != k {
                    return Err(Error::invalid_model(format!(
                        "gaussian emissions need {k} means and variances"
                    )));
                }
                if means.iter().any(|m| !m.is_finite()) {
                    return Err(Error::invalid_model("non-finite emission mean"));
                }
                if variances.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return Err(Error::invalid_model(
                        "emission variances must be finite and positive",
                    ));
                }
            }
            EmissionParams::Categorical { n_symbols, probs } => {
                if *n_symbols < 2 {
                    return Err(Error::invalid_model("categorical emissions need at least 2 symbols"));
                }
                if probs.len() != k * n_symbols {
                    return Err(Error::invalid_model(format!(
                        "categorical emissions must be {k}x{n_symbols}"
                    )));
                }
                for (i, row) in probs.chunks(*n_symbols).enumerate() {
                    check_distribution(&format!("emission row {i}"), row)?;
                }
            }
        }

        let log_initial = initial.iter().map(|p| p.ln()).collect();
        let log_transition = transition.iter().map(|p| p.ln()).collect();
        let log_emission_cache = match &emissions {
            EmissionParams::Gaussian { variances, .. } => variances
                .iter()
                .map(|v| -0.5 * (2.0 * PI * v).ln())
                .collect(),
            EmissionParams::Categorical { probs, .. } => probs.iter().map(|p| p.ln()).collect(),
        };
        Ok(Self {
            n_states: k,
            initial,
            transition,
            emissions,
            log_initial,
            log_transition,
            log_emission_cache,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn transition_row(&self, from: usize) -> &[f64] {
        &self.transition[from * self.n_states..(from + 1) * self.n_states]
    }

    pub(crate) fn transition_flat(&self) -> &[f64] {
        &self.transition
    }

    pub fn transition(&self) -> Vec<Vec<f64>> {
        self.transition
            .chunks(self.n_states)
            .map(|r| r.to_vec())
            .collect()
    }

    pub fn log_initial(&self) -> &[f64] {
        &self.log_initial
    }

    pub fn log_transition(&self, from: usize, to: usize) -> f64 {
        self.log_transition[from * self.n_states + to]
    }

    pub(crate) fn log_transition_flat(&self) -> &[f64] {
        &self.log_transition
    }

    pub fn emissions(&self) -> &EmissionParams {
        &self.emissions
    }

    pub fn emission_kind(&self) -> EmissionKind {
        self.emissions.kind()
    }

    /// Checks that `seq` matches the emission family and its domain.
    pub fn check_observations(&self, seq: ObsSlice<'_>) -> Result<()> {
        match (&self.emissions, seq) {
            (EmissionParams::Gaussian { .. }, ObsSlice::Continuous(xs)) => {
                if let Some(x) = xs.iter().find(|x| !x.is_finite()) {
                    return Err(Error::domain(format!("non-finite observation {x}")));
                }
                Ok(())
            }
            (EmissionParams::Categorical { n_symbols, .. }, ObsSlice::Symbols(xs)) => {
                if let Some(s) = xs.iter().find(|&&s| s >= *n_symbols) {
                    return Err(Error::domain(format!(
                        "symbol {s} out of range for {n_symbols} symbols"
                    )));
                }
                Ok(())
            }
            (EmissionParams::Gaussian { .. }, ObsSlice::Symbols(_)) => Err(Error::domain(
                "symbol sequence given to a gaussian-emission model",
            )),
            (EmissionParams::Categorical { .. }, ObsSlice::Continuous(_)) => Err(Error::domain(
                "continuous sequence given to a categorical-emission model",
            )),
        }
    }

    /// Log emission density of observation `t` under `state`. Callers have
    /// already validated the sequence.
    #[inline]
    pub(crate) fn log_emission(&self, state: usize, seq: ObsSlice<'_>, t: usize) -> f64 {
        match (&self.emissions, seq) {
            (EmissionParams::Gaussian { means, variances }, ObsSlice::Continuous(xs)) => {
                let d = xs[t] - means[state];
                self.log_emission_cache[state] - d * d / (2.0 * variances[state])
            }
            (EmissionParams::Categorical { n_symbols, .. }, ObsSlice::Symbols(xs)) => {
                self.log_emission_cache[state * n_symbols + xs[t]]
            }
            _ => unreachable!("observation kind checked by caller"),
        }
    }

    /// Fills a row-major `T × K` table of log emission densities.
    pub(crate) fn log_emission_table(&self, seq: ObsSlice<'_>) -> Vec<f64> {
        let k = self.n_states;
        let mut table = vec![0.0; seq.len() * k];
        for t in 0..seq.len() {
            for s in 0..k {
                table[t * k + s] = self.log_emission(s, seq, t);
            }
        }
        table
    }
}

fn check_distribution(name: &str, p: &[f64]) -> Result<()> {
    if p.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::invalid_model(format!(
            "{name} has a negative or non-finite probability"
        )));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::invalid_model(format!(
            "{name} sums to {sum}, expected 1"
        )));
    }
    Ok(())
}
