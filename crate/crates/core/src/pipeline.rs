//! End-to-end steps shared by the command line and the test suites:
//! fit a checkpoint on raw frames, calibrate it, score new data.

use ndarray::Array2;

use crate::config::RunConfig;
use crate::datastore::{
    make_windows, ContextColumns, LabelMatrix, Normalizer, TimeSeriesFrame, WindowSample, WindowSpec,
};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::scoring::{
    calibrate_thresholds, flag_anomalies, residual_scores, FlagMatrix, Provenance, ScoreSeries, Thresholds,
};
use crate::training::{train, Checkpoint, StaticContext};

/// Context columns for `frame`, or empty columns when the model has no
/// context branch.
pub fn context_for(config: &ModelConfig, frame: &TimeSeriesFrame, statics: &StaticContext) -> Result<ContextColumns> {
    if config.uses_context() {
        ContextColumns::for_frame(&config.context, frame, &statics.static_cat, &statics.static_real)
    } else {
        Ok(ContextColumns::empty(frame.len()))
    }
}

/// All windows of an already-normalized frame in `f32`.
pub fn windows_f32(frame: &TimeSeriesFrame, context: &ContextColumns, spec: WindowSpec) -> Result<Vec<WindowSample<f32>>> {
    Ok(make_windows(frame, context, spec)?.map(|w| w.cast()).collect())
}

/// Splits the last `fraction` of `frame` off as validation data.
pub fn hold_out_tail(frame: &TimeSeriesFrame, fraction: f64) -> (TimeSeriesFrame, Option<TimeSeriesFrame>) {
    let n_val = (frame.len() as f64 * fraction).floor() as usize;
    if n_val == 0 {
        return (frame.clone(), None);
    }
    let cut = frame.len() - n_val;
    (frame.slice(0..cut), Some(frame.slice(cut..frame.len())))
}

/// Trains a model on raw-scale frames. The normalizer is fitted on `train`
/// alone. Without `val` the tail share `training.val_fraction` of `train` is
/// held out. Labels attached to the frames are never read.
pub fn fit(run: &RunConfig, train_frame: &TimeSeriesFrame, val: Option<&TimeSeriesFrame>) -> Result<Checkpoint> {
    run.validate()?;
    let (train_frame, val) = match val {
        Some(v) => (train_frame.clone(), Some(v.clone())),
        None => hold_out_tail(train_frame, run.training.val_fraction),
    };
    if let Some(v) = &val {
        if v.kpi_names() != train_frame.kpi_names() {
            return Err(Error::shape("validation KPIs differ from training KPIs"));
        }
    }
    let model_config = run.model_config(train_frame.n_kpis())?;
    let statics = StaticContext {
        static_cat: run.data.static_cat.clone(),
        static_real: run.data.static_real.clone(),
    };
    let spec = run.train_window_spec()?;
    let normalizer = Normalizer::fit(&train_frame)?;

    let prepare = |frame: &TimeSeriesFrame| -> Result<Vec<WindowSample<f32>>> {
        let normalized = normalizer.apply(frame)?;
        let context = context_for(&model_config, frame, &statics)?;
        windows_f32(&normalized, &context, spec)
    };
    let train_windows = prepare(&train_frame)?;
    let val_windows = match &val {
        Some(v) if v.len() >= spec.window + spec.horizon => prepare(v)?,
        Some(v) => {
            return Err(Error::invalid(format!(
                "validation data has {} rows, needs at least window + horizon = {}",
                v.len(),
                spec.window + spec.horizon
            )))
        }
        None => Vec::new(),
    };

    let outcome = train(&train_windows, &val_windows, &model_config, &run.train_config())?;
    let mut ckpt = Checkpoint::new(
        outcome.model,
        train_frame.kpi_names().to_vec(),
        normalizer,
        outcome.history,
        run.seed,
    );
    ckpt.static_context = statics;
    ckpt.config_hash = run.hash();
    ckpt.run_config = run.to_toml();
    Ok(ckpt)
}

/// Scores `val` and stores `c`-multiplier thresholds in the checkpoint.
pub fn calibrate(ckpt: &mut Checkpoint, val: &TimeSeriesFrame, gamma: f64, c: f64) -> Result<Thresholds> {
    let scores = residual_scores(ckpt, val, gamma)?;
    let thresholds = calibrate_thresholds(&scores, c)?;
    ckpt.thresholds = Some(thresholds.clone());
    Ok(thresholds)
}

/// Scores `frame` and flags it with the checkpoint's thresholds.
pub fn score(ckpt: &Checkpoint, frame: &TimeSeriesFrame, gamma: f64) -> Result<(ScoreSeries, Array2<u8>)> {
    let thresholds = ckpt
        .thresholds
        .as_ref()
        .ok_or_else(|| Error::invalid("checkpoint has no thresholds; run calibration first"))?;
    let scores = residual_scores(ckpt, frame, gamma)?;
    let flags = flag_anomalies(&scores, thresholds)?;
    Ok((scores, flags))
}

pub fn provenance(ckpt: &Checkpoint) -> Provenance {
    Provenance {
        config_hash: ckpt.config_hash.clone(),
        seed: ckpt.seed,
        run_config: ckpt.run_config.clone(),
    }
}

/// Lines flags up with ground truth for evaluation. Both must name the same
/// KPIs; ground-truth rows outside the flagged timestamps (uncovered rows)
/// are dropped. Returns `(pred, gt)` in the label file's KPI order.
pub fn align_for_eval(flags: &FlagMatrix, labels: &LabelMatrix) -> Result<(Array2<u8>, Array2<u8>)> {
    if let Some(k) = labels.kpis.iter().find(|k| !flags.kpis.contains(k)) {
        return Err(Error::shape(format!("KPI `{k}` has labels but no flags")));
    }
    if let Some(k) = flags.kpis.iter().find(|k| !labels.kpis.contains(k)) {
        return Err(Error::shape(format!("KPI `{k}` has flags but no labels")));
    }
    let mut rows = Vec::with_capacity(flags.timestamps.len());
    for &ts in &flags.timestamps {
        match labels.timestamps.binary_search(&ts) {
            Ok(r) => rows.push(r),
            Err(_) => return Err(Error::shape(format!("flag timestamp {ts} has no label row"))),
        }
    }
    let columns: Vec<usize> = labels
        .kpis
        .iter()
        .map(|k| flags.kpis.iter().position(|f| f == k).expect("checked above"))
        .collect();
    let (t, f) = (rows.len(), labels.kpis.len());
    let pred = Array2::from_shape_fn((t, f), |(r, c)| flags.flags[[r, columns[c]]]);
    let gt = Array2::from_shape_fn((t, f), |(r, c)| labels.labels[[rows[r], c]]);
    Ok((pred, gt))
}
