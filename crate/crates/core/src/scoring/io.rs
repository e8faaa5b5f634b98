use std::collections::HashMap;
use std::io::{Read, Write};

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::ScoreSeries;
use crate::error::{Error, Result};

/// Configuration hash, seed and serialized run configuration written as
/// `#` comment lines at the top of every CSV artifact.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    #[serde(default)]
    pub run_config: String,
}

const CONFIG_PREFIX: &str = "#| ";

impl Provenance {
    pub fn comment(&self) -> String {
        let mut out = format!("# config_hash={} seed={}\n", self.config_hash, self.seed);
        for line in self.run_config.lines() {
            out.push_str(CONFIG_PREFIX);
            out.push_str(line);
            out.push('\n');
        }
        out
    }

    /// Reads the leading comment block written by [`Provenance::comment`].
    pub fn parse(text: &str) -> Option<Self> {
        let mut lines = text.lines();
        let head = lines.next()?.strip_prefix("# ")?;
        let mut prov = Provenance::default();
        for field in head.split_whitespace() {
            match field.split_once('=')? {
                ("config_hash", v) => prov.config_hash = v.to_string(),
                ("seed", v) => prov.seed = v.parse().ok()?,
                _ => return None,
            }
        }
        for line in lines {
            match line.strip_prefix(CONFIG_PREFIX).or_else(|| (line == "#|").then_some("")) {
                Some(rest) => {
                    prov.run_config.push_str(rest);
                    prov.run_config.push('\n');
                }
                None => break,
            }
        }
        Some(prov)
    }
}

fn flush<W: Write>(w: csv::Writer<W>) -> Result<()> {
    w.into_inner()
        .map_err(|e| Error::io("<csv>", e.into_error()))?
        .flush()
        .map_err(|e| Error::io("<csv>", e))
}

/// Long format `timestamp,kpi,score,forecast_component,recon_component,covered`;
/// score cells of uncovered rows are left empty.
pub fn write_scores_csv<W: Write>(series: &ScoreSeries, prov: Option<&Provenance>, mut out: W) -> Result<()> {
    if let Some(p) = prov {
        out.write_all(p.comment().as_bytes()).map_err(|e| Error::io("<csv>", e))?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["timestamp", "kpi", "score", "forecast_component", "recon_component", "covered"])?;
    for (t, ts) in series.timestamps.iter().enumerate() {
        let covered = series.covered[t];
        for (i, kpi) in series.kpis.iter().enumerate() {
            let cell = |v: f64| if covered { v.to_string() } else { String::new() };
            w.write_record([
                ts.to_string(),
                kpi.clone(),
                cell(series.scores[[t, i]]),
                cell(series.forecast_component[[t, i]]),
                cell(series.recon_component[[t, i]]),
                u8::from(covered).to_string(),
            ])?;
        }
    }
    flush(w)
}

/// Long format `timestamp,kpi,flag`, covered rows only.
pub fn write_flags_csv<W: Write>(
    series: &ScoreSeries,
    flags: ArrayView2<'_, u8>,
    prov: Option<&Provenance>,
    mut out: W,
) -> Result<()> {
    if flags.dim() != series.scores.dim() {
        return Err(Error::shape("flag matrix does not match the score series"));
    }
    if let Some(p) = prov {
        out.write_all(p.comment().as_bytes()).map_err(|e| Error::io("<csv>", e))?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["timestamp", "kpi", "flag"])?;
    for (t, ts) in series.timestamps.iter().enumerate() {
        if !series.covered[t] {
            continue;
        }
        for (i, kpi) in series.kpis.iter().enumerate() {
            w.write_record([ts.to_string(), kpi.clone(), flags[[t, i]].to_string()])?;
        }
    }
    flush(w)
}

/// Flags pivoted to a `timestamps × kpis` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FlagMatrix {
    pub timestamps: Vec<i64>,
    pub kpis: Vec<String>,
    pub flags: Array2<u8>,
    pub provenance: Option<Provenance>,
}

#[derive(Deserialize)]
struct FlagRow {
    timestamp: i64,
    kpi: String,
    flag: u8,
}

/// Reads a flags file. Every timestamp must carry exactly one row per KPI.
pub fn read_flags_csv<R: Read>(mut reader: R) -> Result<FlagMatrix> {
    let mut text = String::new();
    reader
        .read_to_string(&mut text)
        .map_err(|e| Error::io("<flags>", e))?;
    let provenance = Provenance::parse(&text);
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut kpis: Vec<String> = Vec::new();
    let mut kpi_index: HashMap<String, usize> = HashMap::new();
    let mut timestamps: Vec<i64> = Vec::new();
    let mut cells: Vec<(usize, usize, u8)> = Vec::new();
    for (i, row) in rdr.deserialize::<FlagRow>().enumerate() {
        let row = row?;
        if row.flag > 1 {
            return Err(Error::Parse {
                line: i + 2,
                msg: format!("flag must be 0 or 1, got {}", row.flag),
            });
        }
        if timestamps.last() != Some(&row.timestamp) {
            if timestamps.last().is_some_and(|&last| row.timestamp < last) {
                return Err(Error::Parse {
                    line: i + 2,
                    msg: "timestamps are not sorted".into(),
                });
            }
            timestamps.push(row.timestamp);
        }
        let next = kpis.len();
        let k = *kpi_index.entry(row.kpi.clone()).or_insert_with(|| {
            kpis.push(row.kpi.clone());
            next
        });
        cells.push((timestamps.len() - 1, k, row.flag));
    }
    let mut flags = Array2::zeros((timestamps.len(), kpis.len()));
    let mut seen = Array2::from_elem((timestamps.len(), kpis.len()), false);
    for (t, k, v) in cells {
        if seen[[t, k]] {
            return Err(Error::invalid(format!(
                "duplicate flag for KPI `{}` at timestamp {}",
                kpis[k], timestamps[t]
            )));
        }
        seen[[t, k]] = true;
        flags[[t, k]] = v;
    }
    if let Some(((t, k), _)) = seen.indexed_iter().find(|(_, &s)| !s) {
        return Err(Error::shape(format!(
            "KPI `{}` has no flag at timestamp {}",
            kpis[k], timestamps[t]
        )));
    }
    Ok(FlagMatrix {
        timestamps,
        kpis,
        flags,
        provenance,
    })
}
