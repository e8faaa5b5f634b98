use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::frame::TimeSeriesFrame;
use crate::error::{Error, Result};

/// Per-KPI z-score statistics, fitted on the training split only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Channels whose training variance was zero; their std is pinned to 1.
    pub constant: Vec<bool>,
}

impl Normalizer {
    pub fn fit(train: &TimeSeriesFrame) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::invalid("cannot fit a normalizer on an empty frame"));
        }
        let values = train.values();
        let n = values.nrows() as f64;
        let mut mean = Vec::with_capacity(values.ncols());
        let mut std = Vec::with_capacity(values.ncols());
        let mut constant = Vec::with_capacity(values.ncols());
        for col in values.axis_iter(Axis(1)) {
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            let s = var.sqrt();
            let flat = !(s > 0.0) || s < 1e-12 * m.abs().max(1.0);
            if flat {
                log::warn!("constant KPI channel (mean {m}); using unit std");
            }
            mean.push(m);
            std.push(if flat { 1.0 } else { s });
            constant.push(flat);
        }
        Ok(Self {
            mean,
            std,
            constant,
        })
    }

    pub fn n_kpis(&self) -> usize {
        self.mean.len()
    }

    pub fn apply_array(&self, values: &Array2<f64>) -> Array2<f64> {
        let mut out = values.clone();
        for (c, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            col.mapv_inplace(|v| (v - self.mean[c]) / self.std[c]);
        }
        out
    }

    pub fn invert_array(&self, values: &Array2<f64>) -> Array2<f64> {
        let mut out = values.clone();
        for (c, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            col.mapv_inplace(|v| v * self.std[c] + self.mean[c]);
        }
        out
    }

    pub fn apply(&self, frame: &TimeSeriesFrame) -> Result<TimeSeriesFrame> {
        self.check(frame)?;
        frame.map_values(self.apply_array(frame.values()))
    }

    pub fn invert(&self, frame: &TimeSeriesFrame) -> Result<TimeSeriesFrame> {
        self.check(frame)?;
        frame.map_values(self.invert_array(frame.values()))
    }

    fn check(&self, frame: &TimeSeriesFrame) -> Result<()> {
        if frame.n_kpis() != self.n_kpis() {
            return Err(Error::shape(format!(
                "normalizer has {} KPIs, frame has {}",
                self.n_kpis(),
                frame.n_kpis()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn frame(values: Array2<f64>) -> TimeSeriesFrame {
        let t = values.nrows() as i64;
        let names = (0..values.ncols()).map(|i| format!("k{i}")).collect();
        TimeSeriesFrame::new((0..t).map(|i| i * 300).collect(), 300, values, names, None).unwrap()
    }

    #[test]
    fn two_point_z_score() {
        let f = frame(array![[0.0], [2.0]]);
        let n = Normalizer::fit(&f).unwrap();
        assert_eq!((n.mean[0], n.std[0]), (1.0, 1.0));
        assert_eq!(n.apply(&f).unwrap().values().column(0).to_vec(), vec![-1.0, 1.0]);
    }

    #[test]
    fn constant_channel_is_flagged() {
        let f = frame(array![[5.0], [5.0], [5.0]]);
        let n = Normalizer::fit(&f).unwrap();
        assert!(n.constant[0]);
        assert_eq!(n.std[0], 1.0);
        assert_eq!(n.apply(&f).unwrap().values().column(0).to_vec(), vec![0.0; 3]);
    }

    #[test]
    fn invert_recovers_values() {
        let f = frame(array![[1.25, -3.0], [7.5, 2.0], [0.1, 1e3]]);
        let n = Normalizer::fit(&f).unwrap();
        let back = n.invert(&n.apply(&f).unwrap()).unwrap();
        for (a, b) in back.values().iter().zip(f.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
