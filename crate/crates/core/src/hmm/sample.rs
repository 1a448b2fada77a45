use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::model::{EmissionParams, HiddenMarkovModel, ObservationSequence};

fn draw(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // round-off: fall back to the last state with mass
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

impl HiddenMarkovModel {
    /// Draws a sequence of `length` observations. Deterministic per `seed`.
    pub fn sample(&self, length: usize, seed: u64) -> ObservationSequence {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut states = Vec::with_capacity(length);
        if length > 0 {
            let mut z = draw(self.initial(), &mut rng);
            states.push(z);
            for _ in 1..length {
                z = draw(self.transition_row(z), &mut rng);
                states.push(z);
            }
        }
        match self.emissions() {
            EmissionParams::Gaussian { means, variances } => ObservationSequence::Continuous(
                states
                    .iter()
                    .map(|&z| {
                        Normal::new(means[z], variances[z].sqrt())
                            .expect("validated variance")
                            .sample(&mut rng)
                    })
                    .collect(),
            ),
            EmissionParams::Categorical { n_symbols, probs } => ObservationSequence::Symbols(
                states
                    .iter()
                    .map(|&z| draw(&probs[z * n_symbols..(z + 1) * n_symbols], &mut rng))
                    .collect(),
            ),
        }
    }
}
