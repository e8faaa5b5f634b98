//! CSV reading and writing for KPI series and label matrices.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::frame::TimeSeriesFrame;
use crate::error::{Error, Result};

/// How irregular timelines are handled at load time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadOptions {
    /// Sampling step in seconds. `None` infers it from the first two rows.
    pub step: Option<i64>,
    /// Insert missing rows (imputed) instead of rejecting gaps.
    pub fill_gaps: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            step: Some(300),
            fill_gaps: false,
        }
    }
}

const DEFAULT_STEP: i64 = 300;

/// Parses an integer epoch-seconds value or an ISO-8601 UTC timestamp.
pub fn parse_timestamp(raw: &str) -> Option<i64> {
    let raw = raw.trim();
    if let Ok(v) = raw.parse::<i64>() {
        return Some(v);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Some(dt.timestamp());
    }
    let naive = raw.trim_end_matches('Z');
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(naive, fmt) {
            return Some(dt.and_utc().timestamp());
        }
    }
    None
}

struct RawTable {
    header: Vec<String>,
    timestamps: Vec<i64>,
    cells: Vec<Vec<Option<f64>>>,
}

fn read_table<R: Read>(reader: R) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.len() < 2 {
        return Err(Error::invalid("header needs a timestamp column and at least one KPI"));
    }
    let mut timestamps = Vec::new();
    let mut cells = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(i + 2, |p| p.line() as usize);
        if rec.len() != header.len() {
            return Err(Error::Parse {
                line,
                msg: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        let ts = parse_timestamp(&rec[0]).ok_or_else(|| Error::Parse {
            line,
            msg: format!("unparseable timestamp `{}`", &rec[0]),
        })?;
        let row = rec
            .iter()
            .skip(1)
            .enumerate()
            .map(|(c, cell)| {
                if cell.is_empty() {
                    Ok(None)
                } else {
                    cell.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .map(Some)
                        .ok_or_else(|| Error::Parse {
                            line,
                            msg: format!("non-numeric cell `{cell}` in column `{}`", header[c + 1]),
                        })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        timestamps.push(ts);
        cells.push(row);
    }
    Ok(RawTable {
        header,
        timestamps,
        cells,
    })
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

/// Loads a KPI series and, optionally, a label file of the same layout.
pub fn load_series_csv(
    path: &Path,
    label_path: Option<&Path>,
    opts: &LoadOptions,
) -> Result<TimeSeriesFrame> {
    let labels = label_path.map(open).transpose()?;
    read_series(open(path)?, labels, opts)
}

/// Reader-based variant of [`load_series_csv`].
pub fn read_series<R: Read, L: Read>(
    values: R,
    labels: Option<L>,
    opts: &LoadOptions,
) -> Result<TimeSeriesFrame> {
    let table = read_table(values)?;
    let kpi_names: Vec<String> = table.header[1..].to_vec();
    let n_kpis = kpi_names.len();

    let step = match opts.step {
        Some(s) => s,
        None if table.timestamps.len() >= 2 => table.timestamps[1] - table.timestamps[0],
        None => DEFAULT_STEP,
    };
    if step <= 0 {
        return Err(Error::invalid(format!("non-positive step {step}")));
    }

    // Resolve the regular grid: position of each raw row on it.
    let mut grid_index = Vec::with_capacity(table.timestamps.len());
    let mut offset = 0usize;
    for i in 0..table.timestamps.len() {
        if i > 0 {
            let d = table.timestamps[i] - table.timestamps[i - 1];
            if d <= 0 {
                return Err(Error::invalid(format!(
                    "timestamps not strictly increasing at index {i}"
                )));
            }
            if d % step != 0 {
                return Err(Error::invalid(format!(
                    "step {d} at index {i} differs from declared step {step}"
                )));
            }
            let missing = (d / step - 1) as usize;
            if missing > 0 && !opts.fill_gaps {
                return Err(Error::invalid(format!("gap at index {i}")));
            }
            offset += missing;
        }
        grid_index.push(i + offset);
    }
    let n_rows = grid_index.last().map_or(0, |&g| g + 1);
    let t0 = table.timestamps.first().copied().unwrap_or(0);
    let timestamps: Vec<i64> = (0..n_rows).map(|g| t0 + g as i64 * step).collect();

    let mut raw = vec![vec![None; n_kpis]; n_rows];
    for (row, &g) in table.cells.into_iter().zip(&grid_index) {
        raw[g] = row;
    }
    let (values, imputed) = impute(&raw, &kpi_names)?;

    let labels = match labels {
        Some(reader) => Some(read_labels(reader, &kpi_names, &table.timestamps, &grid_index, n_rows)?),
        None => None,
    };

    TimeSeriesFrame::with_mask(timestamps, step, values, kpi_names, labels, imputed)
}

/// Carry-forward imputation; leading gaps take the channel median.
fn impute(raw: &[Vec<Option<f64>>], names: &[String]) -> Result<(Array2<f64>, Array2<bool>)> {
    let t = raw.len();
    let f = names.len();
    let mut values = Array2::zeros((t, f));
    let mut imputed = Array2::from_elem((t, f), false);
    for c in 0..f {
        let mut observed: Vec<f64> = raw.iter().filter_map(|r| r[c]).collect();
        if observed.is_empty() && t > 0 {
            return Err(Error::invalid(format!("KPI `{}` has no observed values", names[c])));
        }
        observed.sort_by(f64::total_cmp);
        let median = if observed.is_empty() {
            0.0
        } else if observed.len() % 2 == 1 {
            observed[observed.len() / 2]
        } else {
            let m = observed.len() / 2;
            0.5 * (observed[m - 1] + observed[m])
        };
        let mut last = None;
        for r in 0..t {
            match raw[r][c] {
                Some(v) => {
                    values[[r, c]] = v;
                    last = Some(v);
                }
                None => {
                    values[[r, c]] = last.unwrap_or(median);
                    imputed[[r, c]] = true;
                }
            }
        }
    }
    Ok((values, imputed))
}

fn read_labels<R: Read>(
    reader: R,
    kpi_names: &[String],
    value_timestamps: &[i64],
    grid_index: &[usize],
    n_rows: usize,
) -> Result<Array2<u8>> {
    let table = read_table(reader)?;
    if table.header[1..] != *kpi_names {
        return Err(Error::shape(format!(
            "label columns {:?} do not match KPI columns {:?}",
            &table.header[1..],
            kpi_names
        )));
    }
    if table.timestamps != value_timestamps {
        return Err(Error::shape(format!(
            "label file has {} rows with timestamps that do not match the {} value rows",
            table.timestamps.len(),
            value_timestamps.len()
        )));
    }
    let mut labels = Array2::zeros((n_rows, kpi_names.len()));
    for (r, (row, &g)) in table.cells.iter().zip(grid_index).enumerate() {
        for (c, cell) in row.iter().enumerate() {
            labels[[g, c]] = match cell {
                Some(v) if *v == 0.0 => 0,
                Some(v) if *v == 1.0 => 1,
                other => {
                    return Err(Error::Parse {
                        line: r + 2,
                        msg: format!("label for `{}` must be 0 or 1, got {other:?}", kpi_names[c]),
                    })
                }
            };
        }
    }
    Ok(labels)
}

/// Writes `timestamp,<kpi...>` with epoch-second timestamps.
pub fn write_series_csv(frame: &TimeSeriesFrame, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_matrix(file, frame, |r, c| format!("{}", frame.values()[[r, c]]))
}

/// A wide 0/1 matrix with its own timestamp column, as read from a label file.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMatrix {
    pub timestamps: Vec<i64>,
    pub kpis: Vec<String>,
    pub labels: Array2<u8>,
}

/// Reads a label file on its own (no value file to align against).
pub fn read_label_matrix<R: Read>(reader: R) -> Result<LabelMatrix> {
    let table = read_table(reader)?;
    let kpis: Vec<String> = table.header[1..].to_vec();
    let mut labels = Array2::zeros((table.timestamps.len(), kpis.len()));
    for (r, row) in table.cells.iter().enumerate() {
        for (c, cell) in row.iter().enumerate() {
            labels[[r, c]] = match cell {
                Some(v) if *v == 0.0 => 0,
                Some(v) if *v == 1.0 => 1,
                other => {
                    return Err(Error::Parse {
                        line: r + 2,
                        msg: format!("label for `{}` must be 0 or 1, got {other:?}", kpis[c]),
                    })
                }
            };
        }
    }
    Ok(LabelMatrix {
        timestamps: table.timestamps,
        kpis,
        labels,
    })
}

pub fn load_label_csv(path: &Path) -> Result<LabelMatrix> {
    read_label_matrix(open(path)?)
}

/// Writes the label matrix in the same layout as the series. Errors if the
/// frame carries no labels.
pub fn write_labels_csv(frame: &TimeSeriesFrame, path: &Path) -> Result<()> {
    let labels = frame
        .labels()
        .ok_or_else(|| Error::invalid("frame has no labels to write"))?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_matrix(file, frame, |r, c| labels[[r, c]].to_string())
}

fn write_matrix<W: Write>(
    out: W,
    frame: &TimeSeriesFrame,
    cell: impl Fn(usize, usize) -> String,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["timestamp".to_string()];
    header.extend(frame.kpi_names().iter().cloned());
    w.write_record(&header)?;
    for (r, ts) in frame.timestamps().iter().enumerate() {
        let mut rec = vec![ts.to_string()];
        rec.extend((0..frame.n_kpis()).map(|c| cell(r, c)));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
