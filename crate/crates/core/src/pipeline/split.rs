use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sequencer::Transaction;

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalSplit {
    pub train: Vec<Transaction>,
    pub valid: Vec<Transaction>,
    pub test: Vec<Transaction>,
    /// Timestamps closing the train and validation segments (inclusive).
    pub boundaries: [Option<i64>; 2],
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub name: String,
    pub n_transactions: usize,
    pub n_frauds: usize,
}

impl TemporalSplit {
    pub fn summaries(&self) -> Vec<SplitSummary> {
        [("train", &self.train), ("valid", &self.valid), ("test", &self.test)]
            .into_iter()
            .map(|(name, part)| SplitSummary {
                name: name.to_owned(),
                n_transactions: part.len(),
                n_frauds: part.iter().filter(|t| t.is_fraud).count(),
            })
            .collect()
    }
}

pub fn validate_fractions(fractions: [f64; 3]) -> Result<()> {
    if fractions.iter().any(|f| !(*f > 0.0 && f.is_finite())) {
        return Err(Error::config("split fractions must be positive"));
    }
    if (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::config("split fractions must sum to 1"));
    }
    Ok(())
}

/// Timestamp of the empirical `q`-quantile: the `⌈q·n⌉`-th smallest value.
fn quantile_timestamp(sorted: &[Transaction], q: f64) -> i64 {
    let n = sorted.len();
    let k = ((q * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    sorted[k - 1].timestamp
}

/// Cuts a chronologically sorted list into train/validation/test segments
/// at the time quantiles of the cumulative fractions. A transaction sharing
/// the boundary timestamp stays on the earlier side.
pub fn temporal_split(txns: &[Transaction], fractions: [f64; 3]) -> Result<TemporalSplit> {
    validate_fractions(fractions)?;
    if txns.windows(2).any(|w| w[0].order_key() > w[1].order_key()) {
        return Err(Error::config("transactions must be sorted by (timestamp, tx_id)"));
    }
    if txns.is_empty() {
        return Ok(TemporalSplit {
            train: Vec::new(),
            valid: Vec::new(),
            test: Vec::new(),
            boundaries: [None, None],
            warnings: vec!["empty dataset".into()],
        });
    }
    let b1 = quantile_timestamp(txns, fractions[0]);
    let b2 = quantile_timestamp(txns, fractions[0] + fractions[1]);
    let end_train = txns.partition_point(|t| t.timestamp <= b1);
    let end_valid = txns.partition_point(|t| t.timestamp <= b2).max(end_train);
    let split = TemporalSplit {
        train: txns[..end_train].to_vec(),
        valid: txns[end_train..end_valid].to_vec(),
        test: txns[end_valid..].to_vec(),
        boundaries: [Some(b1), Some(b2)],
        warnings: Vec::new(),
    };
    let warnings = split
        .summaries()
        .into_iter()
        .filter(|s| s.n_frauds == 0)
        .map(|s| format!("{} split has no fraudulent transactions", s.name))
        .collect();
    Ok(TemporalSplit { warnings, ..split })
}
