//! Evaluation: test metrics, repeated experiments with confidence
//! intervals, hypothesis tests and checks of the theoretical guarantees.

mod checks;
mod experiment;
mod metrics;
pub mod plot;
mod stats;
mod table;

pub use checks::{
    consistency_probe, convexhull_risk_check, prop1_check, ConsistencyReport, HullFunctions, HullReport, Prop1Report,
};
pub use experiment::{
    fit_method, fit_on, run_experiment, run_experiment_with, ExperimentConfig, ExperimentKind, Fitted, MethodConfig, MetricName, ModelKind,
    ProbeConfig, Sweep, SweepParameter,
};
pub use metrics::{evaluate, mise, KindRisks, Metrics};
pub use stats::{ci_half_width, mean, median, permutation_test};
pub use table::{Aggregate, CellError, ResultRow, ResultTable};
