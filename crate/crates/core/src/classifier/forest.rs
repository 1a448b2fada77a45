use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::tree::{grow, DecisionTree, GrowParams, Node, Presorted};
use crate::error::{Error, Result};

pub const FOREST_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Features drawn per split.
    pub mtry: usize,
    pub bootstrap: bool,
    pub seed: u64,
}

impl ForestParams {
    pub fn validate(&self, n_features: usize) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::config("n_trees must be at least 1"));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::config("min_samples_leaf must be at least 1"));
        }
        if self.mtry == 0 || self.mtry > n_features {
            return Err(Error::config(format!(
                "mtry must lie in [1, {n_features}], got {}",
                self.mtry
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    trees: Vec<DecisionTree>,
    params: ForestParams,
    feature_names: Vec<String>,
}

/// Per-tree generator: the master seed selects the key, the tree index the
/// stream, so trees can be grown in any order.
fn tree_rng(seed: u64, tree: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree as u64);
    rng
}

pub fn fit_forest(data: &Dataset, params: &ForestParams) -> Result<RandomForest> {
    let mut forests = fit_forest_depths(data, params, &[params.max_depth])?;
    Ok(forests.pop().expect("one depth requested"))
}

/// Fits one forest per entry of `depths`, otherwise sharing `params`. The
/// trees are grown once to the deepest limit and cut, which gives the same
/// forests as separate fits.
pub fn fit_forest_depths(
    data: &Dataset,
    params: &ForestParams,
    depths: &[Option<usize>],
) -> Result<Vec<RandomForest>> {
    let n = data.n_rows();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    params.validate(data.n_features())?;
    let deepest = if depths.contains(&None) {
        None
    } else {
        depths.iter().flatten().copied().max()
    };
    let columns = (0..data.n_features()).map(|j| data.column(j)).collect();
    let presorted = Presorted::new(columns, data.labels());
    let grow_params = GrowParams {
        max_depth: deepest,
        min_samples_leaf: params.min_samples_leaf,
        mtry: params.mtry,
    };
    let grown: Vec<Vec<DecisionTree>> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = tree_rng(params.seed, t);
            let mut counts = vec![0u32; n];
            if params.bootstrap {
                for _ in 0..n {
                    counts[rng.random_range(0..n)] += 1;
                }
            } else {
                counts.fill(1);
            }
            let full = grow(&presorted, &counts, grow_params, rng.random());
            depths.iter().map(|&d| full.cut(d)).collect()
        })
        .collect();
    Ok(depths
        .iter()
        .enumerate()
        .map(|(k, &max_depth)| RandomForest {
            trees: grown.iter().map(|per_depth| per_depth[k].clone()).collect(),
            params: ForestParams {
                max_depth,
                ..params.clone()
            },
            feature_names: data.feature_names().to_vec(),
        })
        .collect())
}

impl RandomForest {
    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Mean positive fraction over the trees' leaves.
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.feature_names.len() {
            return Err(Error::DimensionMismatch {
                expected: self.feature_names.len(),
                got: x.len(),
            });
        }
        let total: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        Ok(total / self.trees.len() as f64)
    }

    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<f64>> {
        data.rows().map(|r| self.predict_proba(r)).collect()
    }

    /// The forest made of the first `n_trees` trees. Because each tree has
    /// its own seed stream, this equals a fresh fit with `n_trees`.
    pub fn truncated(&self, n_trees: usize) -> Result<Self> {
        if n_trees == 0 || n_trees > self.trees.len() {
            return Err(Error::config(format!(
                "cannot truncate a {}-tree forest to {n_trees}",
                self.trees.len()
            )));
        }
        Ok(Self {
            trees: self.trees[..n_trees].to_vec(),
            params: ForestParams {
                n_trees,
                ..self.params.clone()
            },
            feature_names: self.feature_names.clone(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = ForestDocument {
            format_version: FOREST_FORMAT_VERSION,
            params: self.params.clone(),
            feature_names: self.feature_names.clone(),
            trees: self
                .trees
                .iter()
                .map(|t| TreeDocument {
                    nodes: t
                        .nodes()
                        .iter()
                        .map(|n| match *n {
                            Node::Split {
                                feature,
                                threshold,
                                left,
                                right,
                            } => NodeDocument {
                                split_feature: Some(feature),
                                threshold: Some(threshold),
                                left: Some(left),
                                right: Some(right),
                                leaf_fraction: None,
                            },
                            Node::Leaf { fraction } => NodeDocument {
                                leaf_fraction: Some(fraction),
                                ..NodeDocument::default()
                            },
                        })
                        .collect(),
                })
                .collect(),
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ForestDocument = serde_json::from_str(text)?;
        if doc.format_version != FOREST_FORMAT_VERSION {
            return Err(Error::invalid_model(format!(
                "unsupported forest format_version {}",
                doc.format_version
            )));
        }
        let d = doc.feature_names.len();
        if d == 0 {
            return Err(Error::invalid_model("forest has no features"));
        }
        doc.params
            .validate(d)
            .map_err(|e| Error::invalid_model(e.to_string()))?;
        if doc.trees.len() != doc.params.n_trees {
            return Err(Error::invalid_model("tree count disagrees with n_trees"));
        }
        let trees = doc
            .trees
            .into_iter()
            .map(|t| tree_from_document(t, d))
            .collect::<Result<_>>()?;
        Ok(Self {
            trees,
            params: doc.params,
            feature_names: doc.feature_names,
        })
    }
}

fn tree_from_document(doc: TreeDocument, n_features: usize) -> Result<DecisionTree> {
    let len = doc.nodes.len();
    if len == 0 {
        return Err(Error::invalid_model("tree without nodes"));
    }
    let mut nodes = Vec::with_capacity(len);
    for (i, n) in doc.nodes.into_iter().enumerate() {
        let node = match n {
            NodeDocument {
                split_feature: Some(feature),
                threshold: Some(threshold),
                left: Some(left),
                right: Some(right),
                leaf_fraction: None,
            } => {
                if feature >= n_features {
                    return Err(Error::invalid_model(format!("split feature {feature} out of range")));
                }
                // forward-only children rule out cycles
                if left <= i || right <= i || left >= len || right >= len {
                    return Err(Error::invalid_model(format!("node {i} has invalid children")));
                }
                if threshold.is_nan() {
                    return Err(Error::invalid_model("NaN split threshold"));
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                }
            }
            NodeDocument {
                split_feature: None,
                threshold: None,
                left: None,
                right: None,
                leaf_fraction: Some(fraction),
            } => {
                if !(0.0..=1.0).contains(&fraction) {
                    return Err(Error::invalid_model("leaf fraction outside [0, 1]"));
                }
                Node::Leaf { fraction }
            }
            _ => return Err(Error::invalid_model(format!("node {i} is neither split nor leaf"))),
        };
        nodes.push(node);
    }
    Ok(DecisionTree::from_nodes(nodes))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ForestDocument {
    format_version: u32,
    params: ForestParams,
    feature_names: Vec<String>,
    trees: Vec<TreeDocument>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TreeDocument {
    nodes: Vec<NodeDocument>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split_feature: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    left: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    right: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    leaf_fraction: Option<f64>,
}
