//! Random forest over enriched feature vectors, PR evaluation and grid
//! search on validation PR-AUC.

mod dataset;
mod forest;
mod grid;
mod metrics;
mod tree;

pub use dataset::Dataset;
pub use forest::{fit_forest, fit_forest_depths, ForestParams, RandomForest, FOREST_FORMAT_VERSION};
pub use grid::{grid_search, GridOutcome, GridResult, GridSpec, MtryRule};
pub use metrics::{pr_curve, PrCurve, PrPoint};
pub use tree::{DecisionTree, Node};
