mod attention;
mod checkpoint;
mod context_off;
mod end_to_end;
mod floor;
mod gradients;
mod metric_oracles;
mod overfit;
mod reporting;
mod thresholds;

use crate::common::Verdict;

pub const CRITERIA: [(&str, fn() -> Verdict); 10] = [
    ("gradient correctness", gradients::run),
    ("context-off reduction", context_off::run),
    ("attention validity", attention::run),
    ("overfit smoke test", overfit::run),
    ("metric oracle equivalence", metric_oracles::run),
    ("affiliation floor", floor::run),
    ("end-to-end detection", end_to_end::run),
    ("threshold monotonicity", thresholds::run),
    ("checkpoint integrity", checkpoint::run),
    ("reporting fidelity", reporting::run),
];
