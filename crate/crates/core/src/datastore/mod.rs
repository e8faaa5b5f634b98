//! Loading, validating, splitting, normalizing and windowing KPI series.

mod calendar;
mod context;
mod csv_io;
mod frame;
mod normalize;
mod split;
mod window;

pub use calendar::{derive_calendar_context, hour_and_weekday, CalendarColumns};
pub use context::{CatFeature, ContextColumns, ContextSchema, WindowContext, HOUR, WEEKDAY};
pub use csv_io::{
    load_label_csv, load_series_csv, parse_timestamp, read_label_matrix, read_series, write_labels_csv, write_series_csv, LabelMatrix, LoadOptions,
};
pub use frame::TimeSeriesFrame;
pub use normalize::Normalizer;
pub use split::{split_at_timestamps, split_time_ordered};
pub use window::{make_windows, WindowSample, WindowSpec, Windows};
