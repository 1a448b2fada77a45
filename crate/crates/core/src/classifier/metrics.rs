use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    /// Scores `>= threshold` are predicted positive.
    pub threshold: f64,
    pub recall: f64,
    pub precision: f64,
}

/// Precision-recall curve with step-wise area.
///
/// The first point is the conventional (recall 0, precision 1) anchor at an
/// infinite threshold; each following point closes one block of tied scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    pub auc: f64,
}

/// Sweeps thresholds over distinct scores in descending order. The area is
/// `Σ (R_k − R_{k−1}) · P_k`, without interpolation between points.
pub fn pr_curve(scores: &[f64], labels: &[bool]) -> Result<PrCurve> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch(scores.len(), labels.len()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::domain("NaN score"));
    }
    let total_pos = labels.iter().filter(|&&l| l).count();
    if total_pos == 0 {
        return Err(Error::UndefinedRecall);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![PrPoint {
        threshold: f64::INFINITY,
        recall: 0.0,
        precision: 1.0,
    }];
    let mut auc = 0.0;
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            tp += usize::from(labels[order[i]]);
            seen += 1;
            i += 1;
        }
        let recall = tp as f64 / total_pos as f64;
        let precision = tp as f64 / seen as f64;
        auc += (recall - prev_recall) * precision;
        prev_recall = recall;
        points.push(PrPoint {
            threshold: s,
            recall,
            precision,
        });
    }
    Ok(PrCurve { points, auc })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_ranking() {
        let c = pr_curve(&[0.9, 0.8, 0.3, 0.1], &[true, true, false, false]).unwrap();
        assert_eq!(c.auc, 1.0);
    }

    #[test]
    fn hand_computed_steps() {
        let c = pr_curve(&[0.9, 0.8, 0.7], &[true, false, true]).unwrap();
        assert!((c.auc - 5.0 / 6.0).abs() < 1e-12);
        assert_eq!(c.points.len(), 4);
        assert!(c.points.windows(2).all(|w| w[0].recall <= w[1].recall));
    }

    #[test]
    fn constant_scores_give_prevalence() {
        let labels = [true, false, false, true, false];
        let c = pr_curve(&[0.5; 5], &labels).unwrap();
        assert!((c.auc - 0.4).abs() < 1e-12);
        assert_eq!(c.points.len(), 2);
    }

    #[test]
    fn errors() {
        assert!(matches!(pr_curve(&[0.1, 0.2], &[false, false]), Err(Error::UndefinedRecall)));
        assert!(matches!(pr_curve(&[0.1], &[true, false]), Err(Error::LengthMismatch(1, 2))));
    }
}
