//! Evaluation report artifacts and the Macro/Micro/Union summary table.

use std::collections::BTreeMap;
use std::io::Write;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::aggregate::{aggregate, AggregationMode, MetricKind, MetricReport};
use crate::error::{Error, Result};

/// All requested metrics for one detector on one labelled stream set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub config_hash: String,
    pub seed: u64,
    /// Serialized run configuration of the detector, when known.
    #[serde(default)]
    pub run_config: String,
    pub n_timestamps: usize,
    pub kpis: Vec<String>,
    pub metrics: Vec<MetricReport>,
}

/// Evaluates every `(kind, mode)` pair in the given order.
pub fn evaluate(
    model: &str,
    pred: ArrayView2<'_, u8>,
    gt: ArrayView2<'_, u8>,
    kpis: &[String],
    kinds: &[MetricKind],
    modes: &[AggregationMode],
) -> Result<EvalReport> {
    let mut metrics = Vec::with_capacity(kinds.len() * modes.len());
    for &kind in kinds {
        for &mode in modes {
            metrics.push(aggregate(pred, gt, kpis, mode, kind)?);
        }
    }
    Ok(EvalReport {
        model: model.to_string(),
        config_hash: String::new(),
        seed: 0,
        run_config: String::new(),
        n_timestamps: gt.nrows(),
        kpis: kpis.to_vec(),
        metrics,
    })
}

impl EvalReport {
    pub fn get(&self, kind: MetricKind, mode: AggregationMode) -> Option<&MetricReport> {
        self.metrics.iter().find(|m| m.kind == kind && m.mode == mode)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::invalid(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::invalid(format!("report JSON: {e}")))
    }

    /// Long format: one row per `(metric kind, aggregation mode)`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "model", "metric", "mode", "precision", "recall", "f1", "gt_count", "pred_count",
            "count_unit", "config_hash", "seed",
        ])?;
        for m in &self.metrics {
            w.write_record([
                self.model.clone(),
                m.kind.to_string(),
                m.mode.to_string(),
                fmt3(m.scores.precision),
                fmt3(m.scores.recall),
                fmt3(m.scores.f1),
                m.gt_count.to_string(),
                m.pred_count.to_string(),
                m.kind.count_unit().to_string(),
                self.config_hash.clone(),
                self.seed.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

fn fmt3(v: f64) -> String {
    format!("{v:.6}")
}

/// Scores for one aggregation mode in a summary row.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ModeCell {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub gt_count: usize,
    pub pred_count: usize,
}

/// One model × metric row: Macro / Micro / Union × P / R / F1, plus the
/// Micro and Union ground-truth and predicted counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model: String,
    pub metric: MetricKind,
    pub count_unit: String,
    pub macro_: Option<ModeCell>,
    pub micro: Option<ModeCell>,
    pub union: Option<ModeCell>,
}

pub const SUMMARY_COLUMNS: [&str; 17] = [
    "model",
    "metric",
    "macro_p",
    "macro_r",
    "macro_f1",
    "micro_p",
    "micro_r",
    "micro_f1",
    "union_p",
    "union_r",
    "union_f1",
    "count_unit",
    "micro_gt_count",
    "micro_pred_count",
    "union_gt_count",
    "union_pred_count",
    "config_hash",
];

/// Collects reports into table rows grouped by metric kind, models in input order.
pub fn summarize(reports: &[EvalReport]) -> Vec<SummaryRow> {
    let mut by_kind: BTreeMap<u8, Vec<SummaryRow>> = BTreeMap::new();
    for report in reports {
        for kind in MetricKind::ALL {
            let cell = |mode| {
                report.get(kind, mode).map(|m| ModeCell {
                    precision: m.scores.precision,
                    recall: m.scores.recall,
                    f1: m.scores.f1,
                    gt_count: m.gt_count,
                    pred_count: m.pred_count,
                })
            };
            let row = SummaryRow {
                model: report.model.clone(),
                metric: kind,
                count_unit: kind.count_unit().to_string(),
                macro_: cell(AggregationMode::Macro),
                micro: cell(AggregationMode::Micro),
                union: cell(AggregationMode::Union),
            };
            if row.macro_.is_some() || row.micro.is_some() || row.union.is_some() {
                let order = MetricKind::ALL.iter().position(|&k| k == kind).unwrap() as u8;
                by_kind.entry(order).or_default().push(row);
            }
        }
    }
    by_kind.into_values().flatten().collect()
}

/// Writes summary rows as CSV with [`SUMMARY_COLUMNS`]. Missing modes are blank.
pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], hashes: &[String], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_COLUMNS)?;
    for (i, row) in rows.iter().enumerate() {
        let prf = |c: &Option<ModeCell>| match c {
            Some(c) => [fmt3(c.precision), fmt3(c.recall), fmt3(c.f1)],
            None => [String::new(), String::new(), String::new()],
        };
        let counts = |c: &Option<ModeCell>| match c {
            Some(c) => [c.gt_count.to_string(), c.pred_count.to_string()],
            None => [String::new(), String::new()],
        };
        let mut rec = vec![row.model.clone(), row.metric.to_string()];
        rec.extend(prf(&row.macro_));
        rec.extend(prf(&row.micro));
        rec.extend(prf(&row.union));
        rec.push(row.count_unit.clone());
        rec.extend(counts(&row.micro));
        rec.extend(counts(&row.union));
        rec.push(hashes.get(i).cloned().unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
