//! Critical points of `ω` and `ω_S`, their classification, and the
//! equilibrium conditions relating Nash, Stackelberg and non-Nash points.

mod classify;
mod conditions;
mod find;

pub use classify::{classify, definiteness, Classification, ClassificationSpectra, ClassifyConfig, Definiteness};
pub use conditions::{
    check_corollary1, check_necessary_prop3, check_prop2, check_realizable, check_sufficient_prop4,
    leader_cost_comparison, verify_zero_sum, ConditionConfig, ConditionReport, IndexMargin, LeaderCostEntry,
    LeaderCostReport, RealizableReport, StructureReport,
};
pub use find::{fd_field_jacobian, find_critical_points, CriticalPoint, FieldKind, FindConfig, Region};
