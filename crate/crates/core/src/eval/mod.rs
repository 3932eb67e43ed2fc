//! Recall@K evaluation, baseline samplers and run comparison.

mod baselines;
mod cluster;
mod compare;
mod recall;

pub use baselines::{pns_sampler, uns_sampler, PopularitySampler};
pub use cluster::adjusted_rand_index;
pub use compare::{compare_runs, method_index, random_primary, CompareInputs, Comparison, ComparisonRow, Method};
pub use recall::{recall_at_k, recall_report, top_k, user_recalls, RecallReport, DEFAULT_KS};
