//! Residual anomaly scores, label-free threshold calibration and flagging.

mod io;

use ndarray::{s, Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datastore::{ContextColumns, TimeSeriesFrame};
use crate::error::{Error, Result};
use crate::model::CtxGat;
use crate::training::Checkpoint;

pub use io::{read_flags_csv, write_flags_csv, write_scores_csv, FlagMatrix, Provenance};

/// Per-cell anomaly scores over a frame. Rows before the first full window
/// are uncovered and carry zeros that must not be read as "normal".
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSeries {
    pub timestamps: Vec<i64>,
    pub kpis: Vec<String>,
    /// `forecast_component + gamma · recon_component` on covered rows.
    pub scores: Array2<f64>,
    /// Squared one-step forecast residual.
    pub forecast_component: Array2<f64>,
    /// Squared reconstruction residual.
    pub recon_component: Array2<f64>,
    pub covered: Vec<bool>,
    /// Imputed input cells; excluded from calibration.
    pub imputed: Array2<bool>,
    pub gamma: f64,
}

impl ScoreSeries {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn n_kpis(&self) -> usize {
        self.kpis.len()
    }

    pub fn covered_count(&self) -> usize {
        self.covered.iter().filter(|&&c| c).count()
    }
}

/// Scores `frame` (raw scale) with a checkpoint: the frame is normalized with
/// the checkpoint's statistics and its context rebuilt from the timestamps.
pub fn residual_scores(ckpt: &Checkpoint, frame: &TimeSeriesFrame, gamma: f64) -> Result<ScoreSeries> {
    if frame.kpi_names() != ckpt.kpis.as_slice() {
        let missing = ckpt
            .kpis
            .iter()
            .find(|k| !frame.kpi_names().contains(k))
            .or_else(|| frame.kpi_names().iter().find(|k| !ckpt.kpis.contains(k)));
        return Err(Error::shape(match missing {
            Some(k) => format!("KPI `{k}` is not shared by the frame and the checkpoint"),
            None => "frame KPI order differs from the checkpoint".to_string(),
        }));
    }
    let normalized = ckpt.normalizer.apply(frame)?;
    let config = ckpt.model.config();
    let context = if config.uses_context() {
        ContextColumns::for_frame(
            &config.context,
            frame,
            &ckpt.static_context.static_cat,
            &ckpt.static_context.static_real,
        )?
    } else {
        ContextColumns::empty(frame.len())
    };
    residual_scores_normalized(&ckpt.model, &normalized, &context, gamma)
}

/// Scores an already-normalized frame.
///
/// For `t ≥ W`: the forecast component uses horizon step 1 of the window
/// ending at `t − 1`; the reconstruction component uses the last decoder row
/// of the window ending at `t`.
pub fn residual_scores_normalized(
    model: &CtxGat<f32>,
    frame: &TimeSeriesFrame,
    context: &ContextColumns,
    gamma: f64,
) -> Result<ScoreSeries> {
    let config = model.config();
    let (w, f, len) = (config.window, config.n_kpis, frame.len());
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::Config(format!("gamma must be finite and >= 0, got {gamma}")));
    }
    if frame.n_kpis() != f {
        return Err(Error::shape(format!(
            "model expects {f} KPIs, frame has {}",
            frame.n_kpis()
        )));
    }
    if len < w + 1 {
        return Err(Error::invalid(format!(
            "series of length {len} is shorter than window + 1 = {}",
            w + 1
        )));
    }
    if context.len() != len {
        return Err(Error::shape(format!(
            "context has {} rows, frame has {len}",
            context.len()
        )));
    }
    let x = frame.values();
    let outputs = (0..=len - w)
        .into_par_iter()
        .map(|start| {
            let input = x.slice(s![start..start + w, ..]).mapv(|v| v as f32);
            let out = model.forward(input.view(), &context.window(start, w))?;
            Ok((
                out.forecast.row(0).mapv(|v| v as f64),
                out.reconstruction.row(w - 1).mapv(|v| v as f64),
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut fc = Array2::zeros((len, f));
    let mut rc = Array2::zeros((len, f));
    let mut covered = vec![false; len];
    for t in w..len {
        let forecast = &outputs[t - w].0;
        let recon = &outputs[t - w + 1].1;
        for i in 0..f {
            let e_f = x[[t, i]] - forecast[i];
            let e_r = x[[t, i]] - recon[i];
            fc[[t, i]] = e_f * e_f;
            rc[[t, i]] = e_r * e_r;
        }
        covered[t] = true;
    }
    let scores = &fc + &(&rc * gamma);
    Ok(ScoreSeries {
        timestamps: frame.timestamps().to_vec(),
        kpis: frame.kpi_names().to_vec(),
        scores,
        forecast_component: fc,
        recon_component: rc,
        covered,
        imputed: frame.imputed().clone(),
        gamma,
    })
}

/// Per-KPI decision thresholds `tau = c · mu_val`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub kpis: Vec<String>,
    pub tau: Vec<f64>,
    /// Mean validation score per KPI over covered, observed cells.
    pub mu_val: Vec<f64>,
    pub c: f64,
}

impl Thresholds {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::invalid(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let t: Self = serde_json::from_str(text).map_err(|e| Error::invalid(format!("thresholds JSON: {e}")))?;
        if t.tau.len() != t.kpis.len() || t.mu_val.len() != t.kpis.len() {
            return Err(Error::shape("threshold vectors disagree with the KPI list"));
        }
        Ok(t)
    }

    /// Same validation means under a different multiplier.
    pub fn with_multiplier(&self, c: f64) -> Result<Self> {
        check_multiplier(c)?;
        Ok(Self {
            kpis: self.kpis.clone(),
            tau: self.mu_val.iter().map(|m| c * m).collect(),
            mu_val: self.mu_val.clone(),
            c,
        })
    }
}

fn check_multiplier(c: f64) -> Result<()> {
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::Config(format!("threshold multiplier must be finite and > 0, got {c}")));
    }
    Ok(())
}

/// `tau_i = c · mean(score(·, i))` over covered, non-imputed validation cells.
/// Takes no labels.
pub fn calibrate_thresholds(val_scores: &ScoreSeries, c: f64) -> Result<Thresholds> {
    check_multiplier(c)?;
    let mut mu_val = Vec::with_capacity(val_scores.n_kpis());
    for (i, kpi) in val_scores.kpis.iter().enumerate() {
        let mut sum = 0.0;
        let mut n = 0usize;
        for t in 0..val_scores.len() {
            if val_scores.covered[t] && !val_scores.imputed[[t, i]] {
                sum += val_scores.scores[[t, i]];
                n += 1;
            }
        }
        if n == 0 {
            return Err(Error::invalid(format!(
                "no covered validation timestamps for KPI `{kpi}`"
            )));
        }
        let mu = sum / n as f64;
        if mu == 0.0 {
            log::warn!("KPI `{kpi}` has zero mean validation error; every positive score will be flagged");
        }
        mu_val.push(mu);
    }
    Ok(Thresholds {
        kpis: val_scores.kpis.clone(),
        tau: mu_val.iter().map(|m| c * m).collect(),
        mu_val,
        c,
    })
}

/// `1` where a covered score strictly exceeds its KPI threshold.
pub fn flag_anomalies(scores: &ScoreSeries, thresholds: &Thresholds) -> Result<Array2<u8>> {
    if scores.kpis != thresholds.kpis {
        return Err(Error::shape(format!(
            "scores cover KPIs {:?}, thresholds {:?}",
            scores.kpis, thresholds.kpis
        )));
    }
    let mut flags = Array2::zeros(scores.scores.dim());
    for (t, (row, mut out)) in scores
        .scores
        .axis_iter(Axis(0))
        .zip(flags.axis_iter_mut(Axis(0)))
        .enumerate()
    {
        if !scores.covered[t] {
            continue;
        }
        for (i, (&v, o)) in row.iter().zip(out.iter_mut()).enumerate() {
            *o = u8::from(v > thresholds.tau[i]);
        }
    }
    Ok(flags)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn series(scores: Array2<f64>, covered: Vec<bool>) -> ScoreSeries {
        let (t, f) = scores.dim();
        ScoreSeries {
            timestamps: (0..t as i64).map(|i| i * 300).collect(),
            kpis: (0..f).map(|i| format!("k{i}")).collect(),
            forecast_component: scores.clone(),
            recon_component: Array2::zeros((t, f)),
            scores,
            covered,
            imputed: Array2::from_elem((t, f), false),
            gamma: 1.0,
        }
    }

    #[test]
    fn calibration_arithmetic() {
        let s = series(array![[9.0, 9.0], [0.05, 0.2], [0.05, 0.2]], vec![false, true, true]);
        let th = calibrate_thresholds(&s, 4.0).unwrap();
        assert!((th.tau[0] - 0.2).abs() < 1e-12);
        assert!((th.tau[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn strict_inequality_and_uncovered_rows() {
        let s = series(array![[5.0], [0.25], [0.2]], vec![false, true, true]);
        let th = Thresholds {
            kpis: s.kpis.clone(),
            tau: vec![0.2],
            mu_val: vec![0.05],
            c: 4.0,
        };
        assert_eq!(flag_anomalies(&s, &th).unwrap(), array![[0u8], [1], [0]]);
        let inf = Thresholds {
            tau: vec![f64::INFINITY],
            ..th
        };
        assert_eq!(flag_anomalies(&s, &inf).unwrap().sum(), 0);
    }

    #[test]
    fn empty_coverage_is_an_error() {
        let s = series(array![[1.0]], vec![false]);
        assert!(calibrate_thresholds(&s, 4.0).is_err());
        assert!(calibrate_thresholds(&series(array![[1.0]], vec![true]), 0.0).is_err());
    }
}
