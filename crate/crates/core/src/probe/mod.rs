//! Linear probing of frozen embeddings: logistic regression, metrics,
//! cross-validation protocols and report rendering.

pub mod logistic;
pub mod metrics;
pub mod protocol;
pub mod report;

pub use logistic::{fit_logistic, ProbeConfig, ProbeModel};
pub use metrics::{compute_metrics, mean_sd, ClassMetrics, MetricsReport};
pub use protocol::{
    crossval_probe, crossval_probe_groups, fold_view, fuse_syllable, run_crossval, subgroup_protocols, train_all_folds,
    CrossValReport, FoldMetrics, ProbeOptions, SubgroupMode, SubgroupReport, TestGroup,
};
pub use report::{confusion_csv, per_class_table, subgroup_table, summary_table, Format};
