//! Per-actor chronological histories, the eight perspective corpora and
//! scoring windows.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::{ObservationSequence, SignalTransform};

/// One payment event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transaction {
    pub tx_id: u64,
    /// Epoch seconds, UTC.
    pub timestamp: i64,
    pub card_id: String,
    pub terminal_id: String,
    pub amount: f64,
    pub country: String,
    pub card_type: String,
    #[serde(with = "bool_as_int")]
    pub is_fraud: bool,
}

mod bool_as_int {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(de::Error::custom(format!("is_fraud must be 0 or 1, got {other}"))),
        }
    }
}

impl Transaction {
    /// Chronological sort key; ties on timestamp go to the lower tx_id.
    pub fn order_key(&self) -> (i64, u64) {
        (self.timestamp, self.tx_id)
    }

    pub fn actor_id(&self, kind: ActorKind) -> &str {
        match kind {
            ActorKind::CardHolder => &self.card_id,
            ActorKind::Terminal => &self.terminal_id,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ActorKind {
    CardHolder,
    Terminal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SignalKind {
    Amount,
    TimeDelta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum HistoryLabel {
    Genuine,
    Compromised,
}

/// One of the eight (actor × history label × signal) combinations.
///
/// Field order gives the derived `Ord` the canonical feature order: card
/// holder before terminal, genuine before compromised, amount before
/// time-delta.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Perspective {
    pub actor: ActorKind,
    pub history: HistoryLabel,
    pub signal: SignalKind,
}

impl Perspective {
    pub const ALL: [Perspective; 8] = {
        use ActorKind::*;
        use HistoryLabel::*;
        use SignalKind::*;
        const fn p(actor: ActorKind, history: HistoryLabel, signal: SignalKind) -> Perspective {
            Perspective {
                actor,
                history,
                signal,
            }
        }
        [
            p(CardHolder, Genuine, Amount),
            p(CardHolder, Genuine, TimeDelta),
            p(CardHolder, Compromised, Amount),
            p(CardHolder, Compromised, TimeDelta),
            p(Terminal, Genuine, Amount),
            p(Terminal, Genuine, TimeDelta),
            p(Terminal, Compromised, Amount),
            p(Terminal, Compromised, TimeDelta),
        ]
    };

    /// Position in [`Perspective::ALL`].
    pub fn index(self) -> usize {
        (self.actor as usize) * 4 + (self.history as usize) * 2 + self.signal as usize
    }

    /// Stable snake_case name, e.g. `ch_genuine_amount`.
    pub fn name(self) -> &'static str {
        [
            "ch_genuine_amount",
            "ch_genuine_timedelta",
            "ch_compromised_amount",
            "ch_compromised_timedelta",
            "tm_genuine_amount",
            "tm_genuine_timedelta",
            "tm_compromised_amount",
            "tm_compromised_timedelta",
        ][self.index()]
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }
}

impl fmt::Display for Perspective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// All transactions of one card or one terminal, ordered by
/// [`Transaction::order_key`].
#[derive(Debug, Clone, PartialEq)]
pub struct ActorHistory {
    pub actor_id: String,
    pub kind: ActorKind,
    pub transactions: Vec<Transaction>,
}

impl ActorHistory {
    pub fn len(&self) -> usize {
        self.transactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transactions.is_empty()
    }

    pub fn position(&self, tx_id: u64) -> Option<usize> {
        self.transactions.iter().position(|t| t.tx_id == tx_id)
    }

    pub fn is_compromised(&self) -> bool {
        self.transactions.iter().any(|t| t.is_fraud)
    }
}

/// Groups transactions into one chronological history per actor. Histories
/// are returned sorted by actor id, so the result does not depend on input
/// order.
pub fn group_by_actor(txns: &[Transaction], kind: ActorKind) -> Vec<ActorHistory> {
    let mut groups: HashMap<&str, Vec<Transaction>> = HashMap::new();
    for t in txns {
        groups.entry(t.actor_id(kind)).or_default().push(t.clone());
    }
    let mut out: Vec<ActorHistory> = groups
        .into_iter()
        .map(|(id, mut transactions)| {
            transactions.sort_by_key(Transaction::order_key);
            ActorHistory {
                actor_id: id.to_owned(),
                kind,
                transactions,
            }
        })
        .collect();
    out.sort_by(|a, b| a.actor_id.cmp(&b.actor_id));
    out
}

/// Transformed signal values for a chronological run of transactions.
///
/// Amount yields one value per transaction. TimeDelta yields one value per
/// transaction after the first; value `i - 1` belongs to transaction `i`.
pub fn signal_values(txns: &[Transaction], signal: SignalKind) -> Vec<f64> {
    let transform = SignalTransform::Log1p;
    match signal {
        SignalKind::Amount => txns.iter().map(|t| transform.apply(t.amount)).collect(),
        SignalKind::TimeDelta => txns
            .windows(2)
            .map(|w| transform.apply((w[1].timestamp - w[0].timestamp) as f64))
            .collect(),
    }
}

pub fn extract_signal(history: &ActorHistory, signal: SignalKind) -> ObservationSequence {
    ObservationSequence::Continuous(signal_values(&history.transactions, signal))
}

/// Index range into the full signal of a history that forms the scoring
/// window of the transaction at `position`.
pub fn window_range(
    position: usize,
    signal: SignalKind,
    w: usize,
) -> std::ops::Range<usize> {
    let end = match signal {
        SignalKind::Amount => position + 1,
        SignalKind::TimeDelta => position,
    };
    end - w.min(end)..end
}

/// Splits histories into those without any fraud and those with at least one.
pub fn partition_perspectives(
    histories: &[ActorHistory],
) -> (Vec<ActorHistory>, Vec<ActorHistory>) {
    let (compromised, genuine): (Vec<_>, Vec<_>) = histories
        .iter()
        .cloned()
        .partition(ActorHistory::is_compromised);
    (genuine, compromised)
}

/// Builds the eight training corpora. Zero-length sequences are dropped; a
/// corpus may end up empty.
pub fn build_training_corpora(
    txns: &[Transaction],
) -> BTreeMap<Perspective, Vec<ObservationSequence>> {
    let mut corpora: BTreeMap<Perspective, Vec<ObservationSequence>> =
        Perspective::ALL.iter().map(|&p| (p, Vec::new())).collect();
    for actor in [ActorKind::CardHolder, ActorKind::Terminal] {
        let (genuine, compromised) = partition_perspectives(&group_by_actor(txns, actor));
        for (history, group) in [
            (HistoryLabel::Genuine, &genuine),
            (HistoryLabel::Compromised, &compromised),
        ] {
            for signal in [SignalKind::Amount, SignalKind::TimeDelta] {
                let corpus = corpora
                    .get_mut(&Perspective {
                        actor,
                        history,
                        signal,
                    })
                    .expect("all perspectives present");
                corpus.extend(
                    group
                        .iter()
                        .map(|h| extract_signal(h, signal))
                        .filter(|s| !s.is_empty()),
                );
            }
        }
    }
    corpora
}

/// The last `w` observations of the signal up to and including `target_tx`.
pub fn windows(
    history: &ActorHistory,
    target_tx: u64,
    signal: SignalKind,
    w: usize,
) -> Result<ObservationSequence> {
    if w == 0 {
        return Err(Error::config("window size must be at least 1"));
    }
    let pos = history
        .position(target_tx)
        .ok_or(Error::UnknownTransaction(target_tx))?;
    let full = signal_values(&history.transactions[..=pos], signal);
    let range = window_range(pos, signal, w);
    Ok(ObservationSequence::Continuous(full[range].to_vec()))
}
