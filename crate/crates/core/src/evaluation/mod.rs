//! Measurement protocol: events, pointwise / overlap / affiliation scores,
//! Macro / Micro / Union aggregation, the prevalence-matched random baseline
//! and report tables.

mod affiliation;
mod aggregate;
mod events;
mod metrics;
mod report;

pub use affiliation::{affiliation_detail, affiliation_metrics, affiliation_zones, AffiliationDetail, Zone};
pub use aggregate::{
    aggregate, random_baseline, union_stream, AggregationMode, KpiScore, MetricKind, MetricReport,
};
pub use events::{expand_events, merge_events, Event, EventList};
pub use metrics::{match_events, overlap_event_metrics, pointwise_metrics, Confusion, OverlapCounts, Prf};
pub use report::{evaluate, summarize, write_summary_csv, EvalReport, ModeCell, SummaryRow, SUMMARY_COLUMNS};
