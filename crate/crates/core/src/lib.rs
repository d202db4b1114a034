//! Statistical disclosure control for case surveillance microdata.
//!
//! Records flow through ingest (submission merge, report dates,
//! de-duplication, release window), recoding to public categories,
//! k-anonymity and l-diversity local suppression, independent
//! verification, and reporting. Suppression replaces cell values with
//! `NA`; rows are never removed.
//!
//! Data-parallel loops run on rayon when the `parallel` feature is enabled
//! (the default). Every entry point that parallelizes takes an [`Exec`], and
//! results are identical under either strategy.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod fips;
pub mod ingest;
pub mod par;
pub mod pipeline;
pub mod recode;
pub mod report;
pub mod schema;
pub mod suppress;
pub mod synth;
pub mod verify;

pub use dataset::{Column, Dataset, NA};
pub use error::{Error, Result};
pub use par::Exec;
pub use pipeline::{anonymize, run_pipeline, Anonymized, PipelineConfig, PipelineOutput};
pub use schema::{load_schema, FieldClass, PrivacyThresholds, Schema};
pub use suppress::{
    apply_plan, compute_classes, plan_k_suppression, plan_l_suppression, EquivalenceClass,
    SuppressionAction, SuppressionPlan, SuppressionReason,
};
pub use verify::{verify_k_anonymity, verify_l_diversity, PrivacyReport, Verdict};
