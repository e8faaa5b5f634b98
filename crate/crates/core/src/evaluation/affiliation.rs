//! Zone-based affiliation precision and recall on discrete timestamp indices.
//!
//! The stream is partitioned into one zone per ground-truth event: every index
//! belongs to the event it is closest to (ties go to the earlier event). Inside
//! a zone, a predicted point scores the probability that a uniformly drawn
//! zone index lies at least as far from the event as it does; a ground-truth
//! point scores the probability that a uniform zone index lies at least as far
//! from it as the nearest prediction in the zone. Both probabilities are
//! counted exactly.

use serde::{Deserialize, Serialize};

use super::events::{merge_events, Event};
use super::metrics::Prf;
use crate::error::{Error, Result};

/// Inclusive index range owned by one ground-truth event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Zone {
    pub start: usize,
    pub end: usize,
    pub event: Event,
}

impl Zone {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Partitions `[0, len)` among sorted, disjoint events.
pub fn affiliation_zones(events: &[Event], len: usize) -> Vec<Zone> {
    let mut zones = Vec::with_capacity(events.len());
    let mut start = 0;
    for (j, e) in events.iter().enumerate() {
        let end = match events.get(j + 1) {
            Some(next) => (e.end + next.start) / 2,
            None => len - 1,
        };
        zones.push(Zone {
            start,
            end,
            event: *e,
        });
        start = end + 1;
    }
    zones
}

/// Per-zone scores, kept for pooling across streams.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AffiliationDetail {
    /// `None` for zones without predicted points.
    pub zone_precision: Vec<Option<f64>>,
    pub zone_recall: Vec<f64>,
}

impl AffiliationDetail {
    pub fn prf(&self) -> Prf {
        let precisions: Vec<f64> = self.zone_precision.iter().flatten().copied().collect();
        let p = mean(&precisions);
        let r = mean(&self.zone_recall);
        Prf::new(p, r)
    }

    pub fn extend(&mut self, other: &AffiliationDetail) {
        self.zone_precision.extend_from_slice(&other.zone_precision);
        self.zone_recall.extend_from_slice(&other.zone_recall);
    }

    pub fn n_zones(&self) -> usize {
        self.zone_recall.len()
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Number of zone indices whose distance to the zone's event is `>= d`.
fn count_far_from_event(zone: &Zone, d: usize) -> usize {
    if d == 0 {
        return zone.len();
    }
    let (zs, ze) = (zone.start as i64, zone.end as i64);
    let (s, e, d) = (zone.event.start as i64, zone.event.end as i64, d as i64);
    let left = (s - d - zs + 1).max(0);
    let right = (ze - (e + d) + 1).max(0);
    (left + right) as usize
}

/// Number of zone indices at distance `>= d` from point `y`.
fn count_far_from_point(zone: &Zone, y: usize, d: usize) -> usize {
    if d == 0 {
        return zone.len();
    }
    let lo = (y as i64 - d as i64 + 1).max(zone.start as i64);
    let hi = (y as i64 + d as i64 - 1).min(zone.end as i64);
    let near = (hi - lo + 1).max(0) as usize;
    zone.len() - near
}

/// Zone scores for one stream.
pub fn affiliation_detail(pred: &[u8], gt: &[u8]) -> Result<AffiliationDetail> {
    if pred.len() != gt.len() {
        return Err(Error::shape(format!(
            "prediction has {} timestamps, ground truth {}",
            pred.len(),
            gt.len()
        )));
    }
    let events = merge_events(gt);
    if events.is_empty() {
        return Err(Error::invalid("affiliation needs at least one ground-truth event"));
    }
    let zones = affiliation_zones(&events, gt.len());
    let mut detail = AffiliationDetail::default();
    for zone in &zones {
        let predicted: Vec<usize> = (zone.start..=zone.end).filter(|&t| pred[t] != 0).collect();
        let size = zone.len() as f64;
        if predicted.is_empty() {
            detail.zone_precision.push(None);
            detail.zone_recall.push(0.0);
            continue;
        }
        let precision = predicted
            .iter()
            .map(|&x| count_far_from_event(zone, zone.event.distance(x)) as f64 / size)
            .sum::<f64>()
            / predicted.len() as f64;
        let recall = (zone.event.start..=zone.event.end)
            .map(|y| {
                let k = predicted.partition_point(|&x| x < y);
                let after = predicted.get(k).map(|&x| x - y);
                let before = k.checked_sub(1).map(|i| y - predicted[i]);
                let d = after.into_iter().chain(before).min().expect("non-empty");
                count_far_from_point(zone, y, d) as f64 / size
            })
            .sum::<f64>()
            / zone.event.len() as f64;
        detail.zone_precision.push(Some(precision));
        detail.zone_recall.push(recall);
    }
    Ok(detail)
}

/// Affiliation precision, recall and F1 for one stream.
pub fn affiliation_metrics(pred: &[u8], gt: &[u8]) -> Result<Prf> {
    affiliation_detail(pred, gt).map(|d| d.prf())
}
