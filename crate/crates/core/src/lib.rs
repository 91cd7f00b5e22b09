//! Synthetic anomaly monitoring: each feature is regressed on all the others,
//! and a point is scored by how far it sits from its own counterfactual.
//!
//! Also carries the comparison baselines (isolation forest, LOF, kNN),
//! threshold-free metrics and the repeated bootstrap benchmark protocol.

pub mod baselines;
pub mod bench;
pub mod detector;
pub mod error;
pub mod metrics;
pub mod regression;
pub mod rng;
pub mod sam;

mod dataset;

pub use bench::{emit_table, run_bench, BenchConfig, BenchTable, Metric, TableFormat};
pub use dataset::{
    bootstrap, bootstrap_indices, csv_header, default_feature_names, generate_mulcross_like, load_csv, read_csv,
    save_csv, split, write_csv, Dataset, GeneratorConfig, SplitPair,
};
pub use detector::{Detector, DetectorSpec, FittedDetector};
pub use error::{Error, Result};
pub use sam::{
    attribute, label_scores, percentile, sam_fit, sam_label, Attribution, Denominator, SamFitOptions, SamModel,
    SamVariant, ScoreOptions, ScoreReport,
};
