//! End-to-end orchestration: ingestion, temporal split, HMM training,
//! enrichment, forest grid search and the ablation report.

mod encode;
mod experiment;
mod io;
mod split;

pub use encode::{FeatureEncoder, FeatureSet, RAW_FEATURES};
pub use experiment::{
    run_experiment, DataSource, ExperimentConfig, ExperimentOutcome, ExperimentReport,
    FeatureSetResult, ReportMetadata,
};
pub use io::{read_transactions, write_transactions, TRANSACTION_HEADER};
pub use split::{temporal_split, validate_fractions, SplitSummary, TemporalSplit};
