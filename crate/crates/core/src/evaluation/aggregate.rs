//! Macro / Micro / Union aggregation across KPI streams.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::affiliation::{affiliation_detail, AffiliationDetail};
use super::events::merge_events;
use super::metrics::{overlap_event_metrics, pointwise_metrics, Confusion, OverlapCounts, Prf};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationMode {
    Macro,
    Micro,
    Union,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Pointwise,
    Overlap,
    Affiliation,
}

impl AggregationMode {
    pub const ALL: [AggregationMode; 3] = [Self::Macro, Self::Micro, Self::Union];
}

impl MetricKind {
    pub const ALL: [MetricKind; 3] = [Self::Affiliation, Self::Pointwise, Self::Overlap];

    /// What the GT / predicted counts of this metric count.
    pub fn count_unit(self) -> &'static str {
        match self {
            MetricKind::Pointwise => "timestamps",
            MetricKind::Overlap | MetricKind::Affiliation => "events",
        }
    }
}

impl fmt::Display for AggregationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Macro => "macro",
            Self::Micro => "micro",
            Self::Union => "union",
        })
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Pointwise => "pointwise",
            Self::Overlap => "overlap",
            Self::Affiliation => "affiliation",
        })
    }
}

impl FromStr for AggregationMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "macro" => Ok(Self::Macro),
            "micro" => Ok(Self::Micro),
            "union" => Ok(Self::Union),
            other => Err(Error::invalid(format!("unknown aggregation mode `{other}`"))),
        }
    }
}

impl FromStr for MetricKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pointwise" => Ok(Self::Pointwise),
            "overlap" => Ok(Self::Overlap),
            "affiliation" => Ok(Self::Affiliation),
            other => Err(Error::invalid(format!("unknown metric `{other}`"))),
        }
    }
}

/// Scores of one KPI stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiScore {
    pub kpi: String,
    pub scores: Prf,
    pub gt_count: usize,
    pub pred_count: usize,
}

/// One aggregated score with its ground-truth and predicted counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub kind: MetricKind,
    pub mode: AggregationMode,
    pub scores: Prf,
    /// Ground-truth events (event metrics) or positive timestamps (pointwise).
    pub gt_count: usize,
    pub pred_count: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub confusion: Option<Confusion>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub overlap: Option<OverlapCounts>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub per_kpi: Vec<KpiScore>,
    /// KPIs left out because the metric is undefined on them.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub skipped: Vec<String>,
}

fn column(m: &ArrayView2<'_, u8>, c: usize) -> Vec<u8> {
    m.column(c).to_vec()
}

/// OR across KPIs per timestamp.
pub fn union_stream(m: ArrayView2<'_, u8>) -> Vec<u8> {
    m.map_axis(Axis(1), |row| u8::from(row.iter().any(|&v| v != 0)))
        .to_vec()
}

fn count_for(kind: MetricKind, stream: &[u8]) -> usize {
    match kind {
        MetricKind::Pointwise => stream.iter().filter(|&&v| v != 0).count(),
        _ => merge_events(stream).len(),
    }
}

enum StreamResult {
    Pointwise(Confusion),
    Overlap(OverlapCounts),
    Affiliation(AffiliationDetail),
}

impl StreamResult {
    fn prf(&self) -> Prf {
        match self {
            StreamResult::Pointwise(c) => c.prf(),
            StreamResult::Overlap(c) => c.prf(),
            StreamResult::Affiliation(d) => d.prf(),
        }
    }
}

fn evaluate_stream(kind: MetricKind, pred: &[u8], gt: &[u8]) -> Result<StreamResult> {
    Ok(match kind {
        MetricKind::Pointwise => StreamResult::Pointwise(pointwise_metrics(pred, gt)?.1),
        MetricKind::Overlap => {
            StreamResult::Overlap(overlap_event_metrics(&merge_events(pred), &merge_events(gt)).1)
        }
        MetricKind::Affiliation => StreamResult::Affiliation(affiliation_detail(pred, gt)?),
    })
}

/// Aggregates one metric over `T × F` prediction and ground-truth matrices.
pub fn aggregate(
    pred: ArrayView2<'_, u8>,
    gt: ArrayView2<'_, u8>,
    kpi_names: &[String],
    mode: AggregationMode,
    kind: MetricKind,
) -> Result<MetricReport> {
    if pred.dim() != gt.dim() {
        return Err(Error::shape(format!(
            "predictions are {:?}, ground truth {:?}",
            pred.dim(),
            gt.dim()
        )));
    }
    if kpi_names.len() != gt.ncols() {
        return Err(Error::shape("KPI names do not match the matrix width"));
    }

    if mode == AggregationMode::Union {
        let (p, g) = (union_stream(pred), union_stream(gt));
        let result = evaluate_stream(kind, &p, &g)?;
        return Ok(report_from(kind, mode, result.prf(), &result, count_for(kind, &g), count_for(kind, &p)));
    }

    let mut per_kpi = Vec::with_capacity(kpi_names.len());
    let mut skipped = Vec::new();
    let mut pooled_conf = Confusion::default();
    let mut pooled_overlap = OverlapCounts::default();
    let mut pooled_zones = AffiliationDetail::default();
    let (mut gt_total, mut pred_total) = (0, 0);
    for (c, name) in kpi_names.iter().enumerate() {
        let (p, g) = (column(&pred, c), column(&gt, c));
        gt_total += count_for(kind, &g);
        pred_total += count_for(kind, &p);
        if kind == MetricKind::Affiliation && !g.iter().any(|&v| v != 0) {
            skipped.push(name.clone());
            continue;
        }
        let result = evaluate_stream(kind, &p, &g)?;
        match &result {
            StreamResult::Pointwise(c) => pooled_conf.add(c),
            StreamResult::Overlap(c) => pooled_overlap.add(c),
            StreamResult::Affiliation(d) => pooled_zones.extend(d),
        }
        per_kpi.push(KpiScore {
            kpi: name.clone(),
            scores: result.prf(),
            gt_count: count_for(kind, &g),
            pred_count: count_for(kind, &p),
        });
    }

    let pooled = match kind {
        MetricKind::Pointwise => StreamResult::Pointwise(pooled_conf),
        MetricKind::Overlap => StreamResult::Overlap(pooled_overlap),
        MetricKind::Affiliation => StreamResult::Affiliation(pooled_zones),
    };
    let scores = match mode {
        AggregationMode::Macro => {
            let n = per_kpi.len().max(1) as f64;
            Prf {
                precision: per_kpi.iter().map(|k| k.scores.precision).sum::<f64>() / n,
                recall: per_kpi.iter().map(|k| k.scores.recall).sum::<f64>() / n,
                f1: per_kpi.iter().map(|k| k.scores.f1).sum::<f64>() / n,
            }
        }
        _ => pooled.prf(),
    };
    let mut report = report_from(kind, mode, scores, &pooled, gt_total, pred_total);
    report.per_kpi = per_kpi;
    report.skipped = skipped;
    Ok(report)
}

fn report_from(
    kind: MetricKind,
    mode: AggregationMode,
    scores: Prf,
    result: &StreamResult,
    gt_count: usize,
    pred_count: usize,
) -> MetricReport {
    MetricReport {
        kind,
        mode,
        scores,
        gt_count,
        pred_count,
        confusion: match result {
            StreamResult::Pointwise(c) => Some(*c),
            _ => None,
        },
        overlap: match result {
            StreamResult::Overlap(c) => Some(c.clone()),
            _ => None,
        },
        per_kpi: Vec::new(),
        skipped: Vec::new(),
    }
}

/// Flags each timestamp of KPI `i` independently with probability equal to
/// that KPI's ground-truth prevalence.
pub fn random_baseline(gt: ArrayView2<'_, u8>, seed: u64) -> ndarray::Array2<u8> {
    let (t, f) = gt.dim();
    let mut out = ndarray::Array2::zeros((t, f));
    for c in 0..f {
        let positives = gt.column(c).iter().filter(|&&v| v != 0).count();
        let prevalence = if t == 0 { 0.0 } else { positives as f64 / t as f64 };
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(c as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let col: Array1<u8> = (0..t).map(|_| u8::from(rng.random_bool(prevalence))).collect();
        out.column_mut(c).assign(&col);
    }
    out
}
