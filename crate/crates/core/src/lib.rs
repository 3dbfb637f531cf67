//! Stratified prediction-powered inference for mean estimation.
//!
//! Combines a small set of human labels with abundant autorater predictions
//! to produce asymptotically valid confidence intervals for a mean. The
//! input space is split into strata by the autorater's score; each stratum
//! gets its own rectified estimate and autorater weight, and the labeled
//! budget can be allocated across strata to minimize the interval width.

pub mod error;
pub mod estimators;
pub mod fixtures;
pub mod io;
pub mod model;
pub mod report;
pub mod sampling;
pub mod simulation;
pub mod stats;
pub mod sweep;
pub mod tuning;

pub use error::{Error, Result};
pub use estimators::{
    classical_mean_ci, estimate, ppi_pp_ci, stratppi_ci, stratppi_point_estimate, LossModel, MeanLoss,
};
pub use model::{
    Allocation, EstimatorConfig, IntervalResult, LabeledPoint, LambdaPolicy, Method, StratifiedDataset,
    Stratification, StratumData,
};
pub use report::{effective_sample_size, percent_reduction, TrialOutcome, TrialReport};
pub use simulation::{run_simulation, SyntheticScenario};
pub use sweep::{run_real_data_sweep, EvaluationPool, SweepConfig};
