//! Purely random and hold-out random forests with an exact
//! approximation / estimation error decomposition of their risk.

pub mod cart;
pub mod data;
pub mod decomp;
pub mod error;
pub mod fit;
pub mod function;
pub mod harness;
pub mod horf;
pub mod quadrature;
pub mod report;
pub mod resample;
pub mod seed;
pub mod stats;
pub mod toy;

pub use cart::{box_average_m, build_cart_partition, locate_cell, CartParams, TreePartition};
pub use data::{gen_dataset, split_holdout, Dataset};
pub use decomp::{
    estimate_approx_error, estimate_delta, estimate_estimation_error, estimate_holdout, Condition,
    RiskDecomposition,
};
pub use error::{Error, Result};
pub use fit::{fit_linear_in_k, fit_power_law, LinearFit, PowerLawFit};
pub use function::{eval_friedman1, RegressionFunction, Smooth1D};
pub use harness::{
    run_horf_study, run_toy_study, ConditionSpec, EstimatorKind, ExperimentConfig, ResultRow,
    ToyRow,
};
pub use horf::{compute_weights, horf_predict, HoldOutForest, LabelResampling};
pub use report::{emit_report, ReportFormat};
pub use resample::{draw_resample, Resample, ResampleMode};
pub use seed::{Purpose, SeedSpec};
pub use stats::Estimate;
