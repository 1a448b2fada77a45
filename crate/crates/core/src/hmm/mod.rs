//! Hidden Markov models with Gaussian or categorical emissions.
//!
//! Likelihoods are computed with the forward algorithm in log space and
//! parameters are estimated by Baum-Welch with seeded restarts.

mod fit;
mod forward;
mod io;
mod model;
mod sample;

pub use fit::{fit_baum_welch, fit_baum_welch_report, FitConfig, FitReport, RestartTrace};
pub use forward::log_sum_exp;
pub use io::{
    Discretizer, EmissionDocument, KindTag, ModelDocument, ScoringModel, SignalTransform,
    MODEL_FORMAT_VERSION,
};
pub use model::{
    EmissionKind, EmissionParams, HiddenMarkovModel, ObsSlice, ObservationSequence,
    STOCHASTIC_TOL,
};
