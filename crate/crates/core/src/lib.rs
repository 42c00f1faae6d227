//! Divide-and-conquer information-based optimal subdata selection (IBOSS)
//! for linear regression on data too large to hold in memory.
//!
//! The pipeline splits a row-stored dataset into blocks, selects
//! extreme-covariate subdata from each block, and fits least squares on the
//! combined subdata. Diagnostics compare the selected information matrix and
//! the slope variances against their analytic bounds.

pub mod baselines;
pub mod data;
pub mod diagnostics;
pub mod dnc;
pub mod error;
pub mod estimation;
pub mod experiment;
pub mod iboss;
pub mod io;
pub mod kv;
pub mod pipeline;
pub mod quickselect;
pub mod simgen;

pub use baselines::{full_data_dnc_fit, poisson_subsample};
pub use data::{design_matrix, validate_block, DataBlock, DatasetMeta, OlsFit, SelectionResult};
pub use diagnostics::{
    theorem1_bounds, theorem2_variance_bounds, verify_variance_sandwich, zeta_upper_bound, DiagnosticsReport, RangeStats,
};
pub use dnc::{
    run_dnc_aggregate, run_dnc_select, shuffle_assignment, AggregatedFit, BlockAssignment, DncParams, Partitioning,
};
pub use error::{Error, ErrorClass, Result};
pub use estimation::{correlation_summary, min_eigenvalue, ols_fit, CorrelationSummary};
pub use io::{read_block, split, BlockSet, Format};
pub use iboss::{iboss_select, IbossParams};
pub use quickselect::{kth_smallest, tail_thresholds, TailThresholds};
pub use simgen::{generate, generate_responses, CaseKind, CovariateCase};
