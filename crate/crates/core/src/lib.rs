//! Multi-perspective HMM feature engineering for card fraud detection.
//!
//! Transactions are grouped into card-holder and terminal histories. Eight
//! hidden Markov models are trained, one per combination of actor (card
//! holder or terminal), history label (genuine or compromised) and signal
//! (amount or time since the previous transaction). Every transaction is
//! then enriched with the length-normalized log-likelihood of its recent
//! window under each model, alongside rolling 24h aggregates, and a random
//! forest is evaluated on precision-recall AUC across feature-set
//! ablations.
//!
//! Modules:
//! - [`hmm`]: forward algorithm, Baum-Welch, sampling, model documents.
//! - [`sequencer`]: actor histories, perspective corpora, scoring windows.
//! - [`features`]: HMM and aggregate features, the enriched dataset.
//! - [`classifier`]: random forest, PR curve, grid search.
//! - [`synth`]: seeded synthetic transaction streams with planted fraud.
//! - [`pipeline`]: CSV ingestion, temporal split, end-to-end experiment.

pub mod classifier;
pub mod error;
pub mod features;
pub mod hmm;
pub mod pipeline;
pub mod sequencer;
pub mod synth;

pub use error::{Error, Result};
