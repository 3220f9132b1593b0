//! Instance matching and evaluation metrics for nested segmentations.

mod matching;
mod nesting;
mod table;

pub use matching::{
    ap_from_counts, ap_indifference_delta, average_precision, instance_iou, iou_recall,
    match_instances, MatchTable, MatchedPair, Overlaps,
};
pub use nesting::{
    containment, jtpr_one_to_many, jtpr_one_to_many_from, jtpr_one_to_one, jtpr_one_to_one_from,
    ContainmentMap, Jtpr, OuterPolicy,
};
pub use table::{
    check_taus, default_taus, metric_table, Aggregation, CategoryRow, EvalImage, MetricConfig,
    MetricReport, MetricRow, Nesting,
};
