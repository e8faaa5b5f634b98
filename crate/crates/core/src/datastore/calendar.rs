use super::frame::TimeSeriesFrame;

const SECS_PER_DAY: i64 = 86_400;

/// Hour of day (0..24) and weekday (Monday = 0) in UTC.
pub fn hour_and_weekday(epoch_secs: i64) -> (usize, usize) {
    let days = epoch_secs.div_euclid(SECS_PER_DAY);
    let secs = epoch_secs.rem_euclid(SECS_PER_DAY);
    // 1970-01-01 was a Thursday.
    let weekday = (days + 3).rem_euclid(7);
    ((secs / 3600) as usize, weekday as usize)
}

/// Per-timestep calendar categories derived from frame timestamps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CalendarColumns {
    pub hour: Vec<usize>,
    pub weekday: Vec<usize>,
}

pub fn derive_calendar_context(frame: &TimeSeriesFrame) -> CalendarColumns {
    let (hour, weekday) = frame.timestamps().iter().map(|&t| hour_and_weekday(t)).unzip();
    CalendarColumns { hour, weekday }
}
