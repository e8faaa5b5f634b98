use serde::{Deserialize, Serialize};

/// Closed interval `[start, end]` of timestamp indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Event {
    pub start: usize,
    pub end: usize,
}

impl Event {
    pub fn new(start: usize, end: usize) -> Self {
        assert!(start <= end, "event end before start");
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn overlap(&self, other: &Event) -> usize {
        let lo = self.start.max(other.start);
        let hi = self.end.min(other.end);
        if lo <= hi {
            hi - lo + 1
        } else {
            0
        }
    }

    /// Distance from `t` to the nearest point of the interval (0 inside).
    pub fn distance(&self, t: usize) -> usize {
        self.start.saturating_sub(t).max(t.saturating_sub(self.end))
    }
}

/// Sorted, disjoint, maximal events of one stream.
pub type EventList = Vec<Event>;

/// Merges maximal runs of positive entries into events.
pub fn merge_events<B: Copy + Into<u8>>(labels: &[B]) -> EventList {
    let mut events = Vec::new();
    let mut open: Option<usize> = None;
    for (t, &v) in labels.iter().enumerate() {
        match (v.into() != 0, open) {
            (true, None) => open = Some(t),
            (false, Some(s)) => {
                events.push(Event::new(s, t - 1));
                open = None;
            }
            _ => {}
        }
    }
    if let Some(s) = open {
        events.push(Event::new(s, labels.len() - 1));
    }
    events
}

/// Inverse of [`merge_events`] for a stream of length `len`.
pub fn expand_events(events: &[Event], len: usize) -> Vec<u8> {
    let mut out = vec![0u8; len];
    for e in events {
        out[e.start..=e.end].fill(1);
    }
    out
}
