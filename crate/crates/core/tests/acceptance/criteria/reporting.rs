use ctxgat_core::evaluation::{evaluate, merge_events, random_baseline, summarize, union_stream, write_summary_csv, SUMMARY_COLUMNS};
use ctxgat_core::{AggregationMode, EvalReport, MetricKind};
use ndarray::Array2;

use crate::common::{ensure, fail, Verdict};

const T: usize = 25_143;
const F: usize = 12;

/// Label layout with the published test-period counts: 70 disjoint slots,
/// 67 shared by two KPIs (557 steps in total) and 3 shared by three KPIs
/// (629 steps). Within a slot the KPIs are anomalous over the same steps.
fn fixture() -> Array2<u8> {
    let mut lengths: Vec<(usize, usize)> = (0..67).map(|i| (2, if i < 21 { 9 } else { 8 })).collect();
    lengths.extend([(3, 210), (3, 210), (3, 209)]);
    let total: usize = lengths.iter().map(|&(_, l)| l).sum();
    let gap = (T - total) / (lengths.len() + 1);
    let mut gt = Array2::zeros((T, F));
    let (mut t, mut kpi) = (gap, 0);
    for (width, len) in lengths {
        for _ in 0..width {
            gt.slice_mut(ndarray::s![t..t + len, kpi % F]).fill(1);
            kpi += 1;
        }
        t += len + gap;
    }
    gt
}

fn count(report: &EvalReport, kind: MetricKind, mode: AggregationMode) -> Result<usize, String> {
    report
        .get(kind, mode)
        .map(|m| m.gt_count)
        .ok_or_else(|| format!("report lacks {kind}/{mode}"))
}

pub fn run() -> Verdict {
    let gt = fixture();
    let union = union_stream(gt.view());
    ensure!(merge_events(&union).len() == 70, "fixture has {} union events", merge_events(&union).len());

    let kpis: Vec<String> = (0..F).map(|i| format!("kpi_{i:02}")).collect();
    let pred = random_baseline(gt.view(), 1);
    let report = evaluate("random", pred.view(), gt.view(), &kpis, &MetricKind::ALL, &AggregationMode::ALL).map_err(fail)?;
    ensure!(report.metrics.len() == 9, "{} metric entries", report.metrics.len());
    for m in &report.metrics {
        let s = m.scores;
        ensure!(
            [s.precision, s.recall, s.f1].iter().all(|v| (0.0..=1.0).contains(v)),
            "{}/{} scores out of range",
            m.kind,
            m.mode
        );
    }

    let expected = [
        (MetricKind::Affiliation, AggregationMode::Micro, 143),
        (MetricKind::Affiliation, AggregationMode::Union, 70),
        (MetricKind::Overlap, AggregationMode::Micro, 143),
        (MetricKind::Overlap, AggregationMode::Union, 70),
        (MetricKind::Pointwise, AggregationMode::Micro, 3001),
        (MetricKind::Pointwise, AggregationMode::Union, 1186),
    ];
    for (kind, mode, want) in expected {
        let got = count(&report, kind, mode)?;
        ensure!(got == want, "{kind}/{mode} ground-truth count {got}, expected {want}");
    }

    let rows = summarize(std::slice::from_ref(&report));
    ensure!(rows.len() == 3, "{} summary rows", rows.len());
    let mut csv = Vec::new();
    write_summary_csv(&rows, &vec![String::new(); rows.len()], &mut csv).map_err(fail)?;
    let text = String::from_utf8(csv).map_err(fail)?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    ensure!(header == SUMMARY_COLUMNS, "summary header {header:?}");
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        ensure!(cells.len() == SUMMARY_COLUMNS.len(), "row has {} cells", cells.len());
        ensure!(cells[2..11].iter().all(|c| !c.is_empty()), "row {line} misses a P/R/F1 cell");
    }
    let back = EvalReport::from_json(&report.to_json().map_err(fail)?).map_err(fail)?;
    ensure!(back == report, "report JSON round trip changed the report");

    Ok("Macro/Micro/Union x P/R/F1 for 3 metrics; GT events Micro 143 / Union 70, GT timestamps Micro 3001 / Union 1186".into())
}
