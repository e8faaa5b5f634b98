//! Per-stream scores: pointwise confusion counts and overlap-matched events.

use serde::{Deserialize, Serialize};

use super::events::{Event, EventList};
use crate::error::{Error, Result};

/// Precision, recall and F1, each in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    /// F1 from precision and recall; 0 when both are 0.
    pub fn new(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f1,
        }
    }
}

pub(crate) fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn prf(&self) -> Prf {
        Prf::new(ratio(self.tp, self.tp + self.fp), ratio(self.tp, self.tp + self.fn_))
    }

    pub fn add(&mut self, other: &Confusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

/// Timestamp-level confusion counts. Both streams must have equal length.
pub fn pointwise_metrics(pred: &[u8], gt: &[u8]) -> Result<(Prf, Confusion)> {
    if pred.len() != gt.len() {
        return Err(Error::shape(format!(
            "prediction has {} timestamps, ground truth {}",
            pred.len(),
            gt.len()
        )));
    }
    let mut c = Confusion::default();
    for (&p, &g) in pred.iter().zip(gt) {
        match (p != 0, g != 0) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => {}
        }
    }
    Ok((c.prf(), c))
}

/// Event counts behind overlap-based precision and recall.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OverlapCounts {
    pub n_pred: usize,
    pub n_gt: usize,
    /// Predicted events overlapping at least one ground-truth event.
    pub matched_pred: usize,
    /// Ground-truth events overlapped by at least one predicted event.
    pub detected_gt: usize,
}

impl OverlapCounts {
    pub fn prf(&self) -> Prf {
        Prf::new(
            ratio(self.matched_pred, self.n_pred),
            ratio(self.detected_gt, self.n_gt),
        )
    }

    pub fn add(&mut self, other: &OverlapCounts) {
        self.n_pred += other.n_pred;
        self.n_gt += other.n_gt;
        self.matched_pred += other.matched_pred;
        self.detected_gt += other.detected_gt;
    }

    pub fn false_positives(&self) -> usize {
        self.n_pred - self.matched_pred
    }

    pub fn false_negatives(&self) -> usize {
        self.n_gt - self.detected_gt
    }
}

/// Matches each predicted event to the ground-truth event it overlaps most
/// (earliest on ties). Returns the match index per predicted event.
pub fn match_events(pred: &[Event], gt: &[Event]) -> Vec<Option<usize>> {
    pred.iter()
        .map(|p| {
            // gt is sorted and disjoint: scan only the candidates around p
            let first = gt.partition_point(|g| g.end < p.start);
            let mut best: Option<(usize, usize)> = None;
            for (j, g) in gt.iter().enumerate().skip(first) {
                if g.start > p.end {
                    break;
                }
                let ov = p.overlap(g);
                if ov > 0 && best.is_none_or(|(_, b)| ov > b) {
                    best = Some((j, ov));
                }
            }
            best.map(|(j, _)| j)
        })
        .collect()
}

/// Event-level precision/recall: a predicted event is a hit when it overlaps
/// any ground-truth event; a ground-truth event is detected when any
/// predicted event overlaps it.
pub fn overlap_event_metrics(pred: &EventList, gt: &EventList) -> (Prf, OverlapCounts) {
    let matches = match_events(pred, gt);
    let matched_pred = matches.iter().filter(|m| m.is_some()).count();
    let detected_gt = gt
        .iter()
        .filter(|g| {
            let first = pred.partition_point(|p| p.end < g.start);
            pred.get(first).is_some_and(|p| p.start <= g.end)
        })
        .count();
    let counts = OverlapCounts {
        n_pred: pred.len(),
        n_gt: gt.len(),
        matched_pred,
        detected_gt,
    };
    (counts.prf(), counts)
}
