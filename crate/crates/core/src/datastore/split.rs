use super::frame::TimeSeriesFrame;
use crate::error::{Error, Result};

const FRACTION_TOL: f64 = 1e-9;

/// Time-ordered train/validation/test partition by fractions of the timeline.
/// Boundaries sit at `floor(cumulative_fraction * T)`; every part must hold at
/// least `min_len` rows.
pub fn split_time_ordered(
    frame: &TimeSeriesFrame,
    fractions: (f64, f64, f64),
    min_len: usize,
) -> Result<[TimeSeriesFrame; 3]> {
    let (a, b, c) = fractions;
    if a <= 0.0 || b <= 0.0 || c <= 0.0 {
        return Err(Error::invalid("split fractions must be positive"));
    }
    if (a + b + c - 1.0).abs() > FRACTION_TOL {
        return Err(Error::invalid(format!(
            "split fractions sum to {}, expected 1",
            a + b + c
        )));
    }
    let t = frame.len() as f64;
    let first = ((a * t) + FRACTION_TOL).floor() as usize;
    let second = (((a + b) * t) + FRACTION_TOL).floor() as usize;
    split_at_rows(frame, first, second.max(first), min_len)
}

/// Partition at explicit boundary timestamps: validation starts at
/// `val_start`, test at `test_start`. Both must be on the frame's grid.
pub fn split_at_timestamps(
    frame: &TimeSeriesFrame,
    val_start: i64,
    test_start: i64,
    min_len: usize,
) -> Result<[TimeSeriesFrame; 3]> {
    let locate = |ts: i64| {
        frame
            .index_of(ts)
            .ok_or_else(|| Error::invalid(format!("boundary {ts} is not a frame timestamp")))
    };
    let (first, second) = (locate(val_start)?, locate(test_start)?);
    if first >= second {
        return Err(Error::invalid("validation must start before test"));
    }
    split_at_rows(frame, first, second, min_len)
}

fn split_at_rows(
    frame: &TimeSeriesFrame,
    first: usize,
    second: usize,
    min_len: usize,
) -> Result<[TimeSeriesFrame; 3]> {
    let parts = [0..first, first..second, second..frame.len()];
    for (name, range) in ["train", "validation", "test"].iter().zip(&parts) {
        if range.len() < min_len {
            return Err(Error::invalid(format!(
                "{name} split has {} rows, needs at least {min_len}",
                range.len()
            )));
        }
    }
    Ok(parts.map(|r| frame.slice(r)))
}
