use std::ops::Range;

use ndarray::{concatenate, s, Array2, Axis};

use crate::error::{Error, Result};

/// Timestamp-indexed matrix of KPI channels, with optional binary labels and
/// a mask of cells that were imputed at load time.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesFrame {
    timestamps: Vec<i64>,
    step: i64,
    values: Array2<f64>,
    kpi_names: Vec<String>,
    labels: Option<Array2<u8>>,
    imputed: Array2<bool>,
}

impl TimeSeriesFrame {
    /// Builds a validated frame. `values` is `T×F`, rows aligned with `timestamps`.
    pub fn new(
        timestamps: Vec<i64>,
        step: i64,
        values: Array2<f64>,
        kpi_names: Vec<String>,
        labels: Option<Array2<u8>>,
    ) -> Result<Self> {
        let imputed = Array2::from_elem(values.raw_dim(), false);
        Self::with_mask(timestamps, step, values, kpi_names, labels, imputed)
    }

    pub fn with_mask(
        timestamps: Vec<i64>,
        step: i64,
        values: Array2<f64>,
        kpi_names: Vec<String>,
        labels: Option<Array2<u8>>,
        imputed: Array2<bool>,
    ) -> Result<Self> {
        if step <= 0 {
            return Err(Error::invalid(format!("step must be positive, got {step}")));
        }
        if kpi_names.is_empty() {
            return Err(Error::invalid("frame needs at least one KPI"));
        }
        for (i, name) in kpi_names.iter().enumerate() {
            if kpi_names[..i].contains(name) {
                return Err(Error::invalid(format!("duplicate KPI name `{name}`")));
            }
        }
        let (t, f) = values.dim();
        if t != timestamps.len() || f != kpi_names.len() {
            return Err(Error::shape(format!(
                "values are {t}x{f}, expected {}x{}",
                timestamps.len(),
                kpi_names.len()
            )));
        }
        if imputed.dim() != (t, f) {
            return Err(Error::shape("imputation mask does not match values"));
        }
        for i in 1..timestamps.len() {
            let d = timestamps[i] - timestamps[i - 1];
            if d <= 0 {
                return Err(Error::invalid(format!(
                    "timestamps not strictly increasing at index {i}"
                )));
            }
            if d != step {
                return Err(Error::invalid(format!(
                    "step {d} at index {i} differs from declared step {step}"
                )));
            }
        }
        if let Some((r, c)) = values
            .indexed_iter()
            .find(|(_, v)| !v.is_finite())
            .map(|(ix, _)| ix)
        {
            return Err(Error::invalid(format!(
                "non-finite value at row {r}, KPI `{}`",
                kpi_names[c]
            )));
        }
        if let Some(l) = &labels {
            if l.dim() != (t, f) {
                return Err(Error::shape(format!(
                    "labels are {}x{}, values are {t}x{f}",
                    l.nrows(),
                    l.ncols()
                )));
            }
            if l.iter().any(|&v| v > 1) {
                return Err(Error::invalid("labels must be 0 or 1"));
            }
        }
        Ok(Self {
            timestamps,
            step,
            values,
            kpi_names,
            labels,
            imputed,
        })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn n_kpis(&self) -> usize {
        self.kpi_names.len()
    }

    pub fn step(&self) -> i64 {
        self.step
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn kpi_names(&self) -> &[String] {
        &self.kpi_names
    }

    pub fn labels(&self) -> Option<&Array2<u8>> {
        self.labels.as_ref()
    }

    /// `true` where a cell was filled in rather than observed.
    pub fn imputed(&self) -> &Array2<bool> {
        &self.imputed
    }

    pub fn without_labels(mut self) -> Self {
        self.labels = None;
        self
    }

    /// Same timestamps and masks with replaced values.
    pub fn map_values(&self, values: Array2<f64>) -> Result<Self> {
        Self::with_mask(
            self.timestamps.clone(),
            self.step,
            values,
            self.kpi_names.clone(),
            self.labels.clone(),
            self.imputed.clone(),
        )
    }

    /// Contiguous row range as a new frame.
    pub fn slice(&self, rows: Range<usize>) -> Self {
        assert!(rows.end <= self.len(), "row range out of bounds");
        let r = s![rows.clone(), ..];
        Self {
            timestamps: self.timestamps[rows.clone()].to_vec(),
            step: self.step,
            values: self.values.slice(r).to_owned(),
            kpi_names: self.kpi_names.clone(),
            labels: self.labels.as_ref().map(|l| l.slice(r).to_owned()),
            imputed: self.imputed.slice(r).to_owned(),
        }
    }

    /// Appends `other` after `self`. Timestamps must continue with the same step.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.kpi_names != other.kpi_names {
            return Err(Error::shape("KPI sets differ"));
        }
        let labels = match (&self.labels, &other.labels) {
            (Some(a), Some(b)) => Some(concatenate(Axis(0), &[a.view(), b.view()]).unwrap()),
            (None, None) => None,
            _ => return Err(Error::shape("only one frame carries labels")),
        };
        let mut timestamps = self.timestamps.clone();
        timestamps.extend_from_slice(&other.timestamps);
        Self::with_mask(
            timestamps,
            self.step,
            concatenate(Axis(0), &[self.values.view(), other.values.view()]).unwrap(),
            self.kpi_names.clone(),
            labels,
            concatenate(Axis(0), &[self.imputed.view(), other.imputed.view()]).unwrap(),
        )
    }

    /// Row index of an exact timestamp.
    pub fn index_of(&self, ts: i64) -> Option<usize> {
        self.timestamps.binary_search(&ts).ok()
    }
}
