use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::forest::{fit_forest_depths, ForestParams, RandomForest};
use super::metrics::pr_curve;
use crate::error::{Error, Result};

/// Features-per-split rule, resolved against the feature count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MtryRule {
    /// `⌈√d⌉`
    Sqrt,
    /// `⌈d/3⌉`
    Third,
    Fixed(usize),
}

impl MtryRule {
    pub fn resolve(self, d: usize) -> Result<usize> {
        let m = match self {
            MtryRule::Sqrt => (d as f64).sqrt().ceil() as usize,
            MtryRule::Third => d.div_ceil(3),
            MtryRule::Fixed(m) => m,
        };
        if m == 0 || m > d {
            return Err(Error::config(format!("mtry {m} invalid for {d} features")));
        }
        Ok(m)
    }
}

/// Candidate values per hyperparameter; the grid is their cartesian product
/// enumerated with `n_trees` outermost and `min_samples_leaf` innermost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_trees: Vec<usize>,
    pub max_depth: Vec<Option<usize>>,
    pub mtry: Vec<MtryRule>,
    pub min_samples_leaf: Vec<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            n_trees: vec![100, 300],
            max_depth: vec![Some(8), Some(16), None],
            mtry: vec![MtryRule::Sqrt, MtryRule::Third],
            min_samples_leaf: vec![1, 5],
            bootstrap: true,
            seed: 0,
        }
    }
}

impl GridSpec {
    pub fn single(params: &ForestParams) -> Self {
        Self {
            n_trees: vec![params.n_trees],
            max_depth: vec![params.max_depth],
            mtry: vec![MtryRule::Fixed(params.mtry)],
            min_samples_leaf: vec![params.min_samples_leaf],
            bootstrap: params.bootstrap,
            seed: params.seed,
        }
    }

    /// Grid points in enumeration order.
    pub fn points(&self, n_features: usize) -> Result<Vec<ForestParams>> {
        let mut out = Vec::new();
        for &n_trees in &self.n_trees {
            for &max_depth in &self.max_depth {
                for &rule in &self.mtry {
                    let mtry = rule.resolve(n_features)?;
                    for &min_samples_leaf in &self.min_samples_leaf {
                        out.push(ForestParams {
                            n_trees,
                            max_depth,
                            min_samples_leaf,
                            mtry,
                            bootstrap: self.bootstrap,
                            seed: self.seed,
                        });
                    }
                }
            }
        }
        if out.is_empty() {
            return Err(Error::config("empty hyperparameter grid"));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub params: ForestParams,
    pub validation_auc: f64,
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub best: ForestParams,
    pub report: Vec<GridResult>,
    /// The winning forest, already fitted on the training set.
    pub best_forest: RandomForest,
}

/// Evaluates every grid point by validation PR-AUC. Ties go to the earlier
/// grid point.
///
/// Points that differ only in `n_trees` and `max_depth` share one fit: tree
/// `i` depends only on `(seed, i)`, so prefixes of the largest forest are
/// the smaller forests, and depth-limited trees are cuts of the deepest.
pub fn grid_search(train: &Dataset, valid: &Dataset, grid: &GridSpec) -> Result<GridOutcome> {
    if valid.n_positives() == 0 {
        return Err(Error::UndefinedRecall);
    }
    let points = grid.points(train.n_features())?;
    let mut aucs: Vec<Option<f64>> = vec![None; points.len()];
    let mut best: Option<(usize, RandomForest)> = None;

    for i in 0..points.len() {
        if aucs[i].is_some() {
            continue;
        }
        let shape = |p: &ForestParams| ForestParams {
            n_trees: 0,
            max_depth: None,
            ..p.clone()
        };
        let group: Vec<usize> = (i..points.len())
            .filter(|&j| shape(&points[j]) == shape(&points[i]))
            .collect();
        let largest = group.iter().map(|&j| points[j].n_trees).max().expect("non-empty");
        let mut depths: Vec<Option<usize>> = Vec::new();
        for &j in &group {
            if !depths.contains(&points[j].max_depth) {
                depths.push(points[j].max_depth);
            }
        }
        let fitted = fit_forest_depths(
            train,
            &ForestParams {
                n_trees: largest,
                ..points[i].clone()
            },
            &depths,
        )?;
        for &j in &group {
            let k = depths.iter().position(|d| *d == points[j].max_depth).expect("listed");
            let forest = fitted[k].truncated(points[j].n_trees)?;
            let scores = forest.predict_dataset(valid)?;
            let auc = pr_curve(&scores, valid.labels())?.auc;
            aucs[j] = Some(auc);
            if best.as_ref().is_none_or(|(b, _)| {
                let b_auc = aucs[*b].expect("evaluated");
                auc > b_auc || (auc == b_auc && j < *b)
            }) {
                best = Some((j, forest));
            }
        }
    }

    let report: Vec<GridResult> = points
        .iter()
        .zip(&aucs)
        .map(|(p, a)| GridResult {
            params: p.clone(),
            validation_auc: a.expect("every point evaluated"),
        })
        .collect();
    let (best, best_forest) = best.expect("non-empty grid");
    Ok(GridOutcome {
        best: points[best].clone(),
        best_forest,
        report,
    })
}
