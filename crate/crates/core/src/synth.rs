//! Seeded synthetic transaction streams.
//!
//! Genuine behaviour: every card has a lognormal amount habit, an activity
//! rate, a few favourite terminals and occasional shopping sessions of
//! closely spaced purchases. Fraud campaigns hit compromised cards with one
//! to three small "test" payments below the card's 10th amount percentile,
//! then two to five large payments above its 95th percentile, in quick
//! succession and mostly at compromised terminals.
//!
//! Every random draw comes from a ChaCha stream keyed by (seed, entity), so
//! cards and campaigns can be generated in any order with identical output.

use rand::seq::index::sample;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sequencer::Transaction;

const DAY: i64 = 86_400;
/// z-scores of the 10th and 95th percentiles of a standard normal.
const Z10: f64 = -1.281_551_565_545;
const Z95: f64 = 1.644_853_626_951;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub n_cards: usize,
    pub n_terminals: usize,
    pub n_days: usize,
    pub mean_txns_per_card_per_day: f64,
    /// Share of cards eligible for fraud campaigns.
    pub fraud_card_fraction: f64,
    /// Share of terminals where campaigns concentrate.
    pub fraud_terminal_fraction: f64,
    /// Fraudulent share of all generated transactions.
    pub target_fraud_rate: f64,
    pub seed: u64,
    pub countries: Vec<String>,
    pub card_types: Vec<String>,
    /// Epoch second at which the stream starts.
    pub start_timestamp: i64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            n_cards: 1_000,
            n_terminals: 200,
            n_days: 30,
            mean_txns_per_card_per_day: 1.0,
            fraud_card_fraction: 0.1,
            fraud_terminal_fraction: 0.05,
            target_fraud_rate: 0.01,
            seed: 42,
            countries: ["BE", "NL", "FR", "DE", "LU", "GB"].map(String::from).to_vec(),
            card_types: ["visa", "mastercard", "maestro", "amex"].map(String::from).to_vec(),
            // 2015-03-01T00:00:00Z
            start_timestamp: 1_425_168_000,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let fraction = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        fraction("fraud_card_fraction", self.fraud_card_fraction)?;
        fraction("fraud_terminal_fraction", self.fraud_terminal_fraction)?;
        if !(0.0..1.0).contains(&self.target_fraud_rate) {
            return Err(Error::config("target_fraud_rate must lie in [0, 1)"));
        }
        if !(self.mean_txns_per_card_per_day > 0.0 && self.mean_txns_per_card_per_day.is_finite()) {
            return Err(Error::config("mean_txns_per_card_per_day must be positive"));
        }
        if self.countries.is_empty() || self.card_types.is_empty() {
            return Err(Error::config("countries and card_types must be non-empty"));
        }
        if self.start_timestamp < 0 {
            return Err(Error::config("start_timestamp must be non-negative"));
        }
        if self.n_cards > 0 && self.n_days > 0 && self.n_terminals == 0 {
            return Err(Error::config("transactions need at least one terminal"));
        }
        if self.target_fraud_rate > 0.0 && self.n_compromised_cards() == 0 && self.n_cards > 0 {
            return Err(Error::config(
                "target_fraud_rate > 0 but fraud_card_fraction leaves no compromised card",
            ));
        }
        Ok(())
    }

    fn n_compromised_cards(&self) -> usize {
        (self.fraud_card_fraction * self.n_cards as f64).round() as usize
    }

    fn n_compromised_terminals(&self) -> usize {
        (self.fraud_terminal_fraction * self.n_terminals as f64).round() as usize
    }
}

/// Stream ids separating the entity kinds sharing the master seed.
const STREAM_CARD: u64 = 0;
const STREAM_CAMPAIGN: u64 = 1 << 40;
const STREAM_GLOBAL: u64 = 2 << 40;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

struct CardProfile {
    log_mean: f64,
    log_sd: f64,
    rate_per_day: f64,
    home_country: usize,
    card_type: usize,
    favourites: Vec<usize>,
}

impl CardProfile {
    fn percentile(&self, z: f64) -> f64 {
        (self.log_mean + z * self.log_sd).exp()
    }
}

/// Intermediate event before global id assignment.
struct Event {
    timestamp: i64,
    terminal: usize,
    amount: f64,
    country: usize,
    fraud: bool,
}

fn cents(x: f64) -> f64 {
    ((x * 100.0).round() / 100.0).max(0.01)
}

fn profile(config: &GenConfig, card: usize) -> CardProfile {
    let mut rng = rng_for(config.seed, STREAM_CARD + card as u64);
    let log_mean = Normal::new(3.3, 0.7).unwrap().sample(&mut rng);
    let log_sd = rng.random_range(0.3..0.8);
    // lognormal(0, 0.4) has mean exp(0.08)
    let activity = LogNormal::new(0.0, 0.4).unwrap().sample(&mut rng) / 0.08f64.exp();
    let n_countries = config.countries.len();
    let home_country = if rng.random_bool(0.85) {
        0
    } else {
        rng.random_range(0..n_countries)
    };
    let card_type = rng.random_range(0..config.card_types.len());
    let n_fav = config.n_terminals.min(rng.random_range(2..=5));
    let favourites = sample(&mut rng, config.n_terminals, n_fav).into_vec();
    CardProfile {
        log_mean,
        log_sd,
        rate_per_day: config.mean_txns_per_card_per_day * activity,
        home_country,
        card_type,
        favourites,
    }
}

fn genuine_events(config: &GenConfig, card: usize, p: &CardProfile) -> Vec<Event> {
    // independent stream from the profile draws
    let mut rng = rng_for(config.seed ^ 0x5EED_CA7D, STREAM_CARD + card as u64);
    let start = config.start_timestamp;
    let end = start + config.n_days as i64 * DAY;
    let amount = LogNormal::new(p.log_mean, p.log_sd).unwrap();
    // a third of purchases come in short sessions; the spacing between
    // sessions keeps the overall rate at rate_per_day
    let session_prob = 0.3;
    let between = Exp::new(p.rate_per_day * (1.0 - session_prob) / DAY as f64).unwrap();
    let within = Exp::new(1.0 / 600.0).unwrap();
    let mut out = Vec::new();
    let mut t = start as f64 + between.sample(&mut rng);
    while (t as i64) < end {
        let terminal = if rng.random_bool(0.8) {
            p.favourites[rng.random_range(0..p.favourites.len())]
        } else {
            rng.random_range(0..config.n_terminals)
        };
        let country = if rng.random_bool(0.95) {
            p.home_country
        } else {
            rng.random_range(0..config.countries.len())
        };
        out.push(Event {
            timestamp: t as i64,
            terminal,
            amount: cents(amount.sample(&mut rng)),
            country,
            fraud: false,
        });
        let gap = if rng.random_bool(session_prob) {
            30.0 + within.sample(&mut rng)
        } else {
            between.sample(&mut rng)
        };
        t += gap.max(1.0);
    }
    out
}

fn campaign_events(
    config: &GenConfig,
    index: usize,
    p: &CardProfile,
    compromised_terminals: &[usize],
) -> Vec<Event> {
    let mut rng = rng_for(config.seed, STREAM_CAMPAIGN + index as u64);
    let start = config.start_timestamp;
    let horizon = config.n_days as i64 * DAY;
    let (lo, hi) = if config.n_days >= 2 {
        (DAY, horizon - 6 * 3600)
    } else {
        (0, horizon / 2)
    };
    let mut t = (start + rng.random_range(lo..hi.max(lo + 1))) as f64;
    let n_test = rng.random_range(1..=3);
    let n_high = rng.random_range(2..=5);
    let country = if rng.random_bool(0.5) {
        p.home_country
    } else {
        rng.random_range(0..config.countries.len())
    };
    let q10 = p.percentile(Z10);
    let q95 = p.percentile(Z95);
    let test_gap = Exp::new(1.0 / 300.0).unwrap();
    let pause = Exp::new(1.0 / 1800.0).unwrap();
    let high_gap = Exp::new(1.0 / 180.0).unwrap();
    let mut out = Vec::with_capacity(n_test + n_high);
    for i in 0..n_test + n_high {
        let terminal = if !compromised_terminals.is_empty() && rng.random_bool(0.9) {
            compromised_terminals[rng.random_range(0..compromised_terminals.len())]
        } else {
            rng.random_range(0..config.n_terminals)
        };
        let amount = if i < n_test {
            // floor to cents so rounding never lifts it above the percentile
            ((q10 * rng.random_range(0.1..0.8) * 100.0).floor() / 100.0).max(0.01)
        } else {
            cents(q95 * rng.random_range(1.5..4.0))
        };
        out.push(Event {
            timestamp: t as i64,
            terminal,
            amount,
            country,
            fraud: true,
        });
        t += if i + 1 == n_test {
            60.0 + pause.sample(&mut rng)
        } else if i + 1 < n_test {
            30.0 + test_gap.sample(&mut rng)
        } else {
            20.0 + high_gap.sample(&mut rng)
        };
    }
    out
}

/// Generates a transaction list sorted by (timestamp, tx_id), with tx_ids
/// assigned in that order starting at 1.
pub fn generate(config: &GenConfig) -> Result<Vec<Transaction>> {
    config.validate()?;
    if config.n_days == 0 || config.n_cards == 0 {
        return Ok(Vec::new());
    }
    let profiles: Vec<CardProfile> = (0..config.n_cards)
        .into_par_iter()
        .map(|c| profile(config, c))
        .collect();
    let mut per_card: Vec<Vec<Event>> = profiles
        .par_iter()
        .enumerate()
        .map(|(c, p)| genuine_events(config, c, p))
        .collect();
    let n_genuine: usize = per_card.iter().map(Vec::len).sum();

    if config.target_fraud_rate > 0.0 {
        let mut global = rng_for(config.seed, STREAM_GLOBAL);
        let compromised_cards =
            sample(&mut global, config.n_cards, config.n_compromised_cards()).into_vec();
        let compromised_terminals =
            sample(&mut global, config.n_terminals, config.n_compromised_terminals()).into_vec();
        let rate = config.target_fraud_rate;
        let needed = (rate * n_genuine as f64 / (1.0 - rate)).round() as usize;
        let mut n_fraud = 0;
        let mut index = 0;
        while n_fraud < needed {
            let card = compromised_cards[index % compromised_cards.len()];
            let events = campaign_events(config, index, &profiles[card], &compromised_terminals);
            n_fraud += events.len();
            per_card[card].extend(events);
            index += 1;
        }
    }

    // strictly increasing timestamps within each card
    let mut rows: Vec<(i64, usize, usize, Event)> = Vec::new();
    for (card, mut events) in per_card.into_iter().enumerate() {
        events.sort_by_key(|e| (e.timestamp, e.fraud));
        let mut last = i64::MIN;
        for (k, mut e) in events.into_iter().enumerate() {
            if e.timestamp <= last {
                e.timestamp = last + 1;
            }
            last = e.timestamp;
            rows.push((e.timestamp, card, k, e));
        }
    }
    rows.sort_by_key(|(t, card, k, _)| (*t, *card, *k));

    Ok(rows
        .into_iter()
        .enumerate()
        .map(|(i, (_, card, _, e))| {
            let p = &profiles[card];
            Transaction {
                tx_id: i as u64 + 1,
                timestamp: e.timestamp,
                card_id: format!("C{card:06}"),
                terminal_id: format!("T{:05}", e.terminal),
                amount: e.amount,
                country: config.countries[e.country].clone(),
                card_type: config.card_types[p.card_type].clone(),
                is_fraud: e.fraud,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn small() -> GenConfig {
        GenConfig {
            n_cards: 150,
            n_terminals: 40,
            n_days: 20,
            target_fraud_rate: 0.02,
            seed: 7,
            ..GenConfig::default()
        }
    }

    #[test]
    fn zero_days_is_empty() {
        let cfg = GenConfig {
            n_days: 0,
            ..GenConfig::default()
        };
        assert!(generate(&cfg).unwrap().is_empty());
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a, b);
        let c = generate(&GenConfig { seed: 8, ..small() }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn infeasible_config() {
        let cfg = GenConfig {
            fraud_card_fraction: 0.0,
            ..small()
        };
        assert!(matches!(generate(&cfg), Err(Error::Config(_))));
        let cfg = GenConfig {
            target_fraud_rate: 1.0,
            ..small()
        };
        assert!(generate(&cfg).is_err());
    }

    #[test]
    fn structural_invariants() {
        let txns = generate(&small()).unwrap();
        assert!(txns.windows(2).all(|w| w[0].order_key() < w[1].order_key()));
        let mut last: HashMap<&str, i64> = HashMap::new();
        let mut fraud_cards = std::collections::HashSet::new();
        for t in &txns {
            assert!(t.amount > 0.0);
            if let Some(prev) = last.insert(&t.card_id, t.timestamp) {
                assert!(t.timestamp > prev, "card {} not strictly increasing", t.card_id);
            }
            if t.is_fraud {
                fraud_cards.insert(t.card_id.clone());
            }
        }
        let cfg = small();
        assert!(fraud_cards.len() <= cfg.n_compromised_cards());
        let rate = txns.iter().filter(|t| t.is_fraud).count() as f64 / txns.len() as f64;
        assert!((rate - 0.02).abs() < 0.2 * 0.02, "rate {rate}");
    }

    #[test]
    fn fraudulent_highs_exceed_genuine_tail() {
        let txns = generate(&small()).unwrap();
        let mut by_card: HashMap<&str, (Vec<f64>, Vec<f64>)> = HashMap::new();
        for t in &txns {
            let e = by_card.entry(&t.card_id).or_default();
            if t.is_fraud { e.1.push(t.amount) } else { e.0.push(t.amount) }
        }
        // Fraud amounts should sit in the card's upper tail far more often
        // than the 10% a genuine draw would.
        let (mut above, mut total) = (0usize, 0usize);
        for (genuine, fraud) in by_card.values_mut().filter(|(g, f)| !f.is_empty() && g.len() >= 10) {
            genuine.sort_by(f64::total_cmp);
            let p90 = genuine[(0.9 * (genuine.len() - 1) as f64).round() as usize];
            above += fraud.iter().filter(|&&a| a > p90).count();
            total += fraud.len();
        }
        assert!(total > 0);
        let share = above as f64 / total as f64;
        assert!(share > 0.4, "only {share} of fraud above the genuine p90");
    }
}
