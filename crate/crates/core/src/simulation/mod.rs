//! Simulation study: two-block stochastic block model correlation
//! structures `I + rho A`, Gaussian sampling, and a replicate harness that
//! scores every procedure on FWER, power and false discovery proportion.

mod experiment;
mod model;

pub use experiment::{
    metrics, run_experiment, CorrelationHistogram, ExperimentConfig, ExperimentResult, MetricsRow,
    ReplicateMetrics, MAX_REPLICATE_RETRIES,
};
pub use model::{
    adjacency_spectrum, admissible_sbm_model, correlation_model, sample_gaussian, sbm_adjacency, sbm_adjacency_at,
    AdjacencyMatrix, CorrelationModel, MAX_ADJACENCY_ATTEMPTS,
};
