//! Collinearity pruning, GEE fitting, Wald tests, QIC model selection and reporting.

pub mod design;
pub mod dist;
pub mod gee;
pub mod pearson;
pub mod prune;
pub mod report;
pub mod stepwise;
pub mod table;
pub mod wald;

pub use design::{DesignMatrix, Term, TermKind, INTERCEPT};
pub use gee::{gee_fit, qic, GeeFit, GeeOptions, WorkingCorrelation};
pub use pearson::{pearson_matrix, PearsonMatrix};
pub use wald::{group_contrast, linear_contrast, posthoc_contrasts, wald_test, wald_tests, Contrast, WaldTest, Z_95};
pub use prune::{prune_collinear, PruneDecision, PruneOptions, PruneOutcome, PruneReason};
pub use stepwise::{backward_stepwise, StepCandidate, StepRecord, StepwiseResult};
pub use table::{Grouping, SampleTable};
pub use report::{ModelReport, PosthocSection, TermRow};
