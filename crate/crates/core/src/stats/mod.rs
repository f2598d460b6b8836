//! Logistic model over chart type, task, LLM and visualization presence,
//! with cross-validated tuning, bootstrap and hypothesis tests.

pub mod bootstrap;
pub mod design;
pub mod hypothesis;
pub mod logistic;
pub mod special;
pub mod tune;

pub use bootstrap::{bootstrap, BootstrapOptions, BootstrapSet};
pub use design::{build_design_matrix, CellKey, ColumnLabel, DesignMatrix, DesignSpace};
pub use hypothesis::{test_coefficient, test_probability_difference, Sidedness, TestMethod, TestResult};
pub use logistic::{cell_probability, fit_logistic, FitOptions, FitResult, HyperParams, Penalty, Solver};
pub use tune::{tune_hyperparameters, CvOptions, Grid, TuningResult};

use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("unknown dimension value: {0}")]
    UnknownDimensionValue(String),
    #[error("empty design matrix")]
    EmptyDesign,
    #[error("cell {0} is not a tested combination")]
    UntestedCell(String),
    #[error("hyperparameter grid is empty")]
    EmptyGrid,
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperParams(String),
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("sample lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

/// SplitMix64 finalizer, used to derive independent seeds.
pub(crate) fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xD1B5_4A32_D192_ED03))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
