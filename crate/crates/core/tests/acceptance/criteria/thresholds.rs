use ctxgat_core::scoring::{flag_anomalies, residual_scores};
use ndarray::Axis;

use crate::common::{ensure, fail, small_run, Verdict};

const MULTIPLIERS: [f64; 4] = [2.0, 4.0, 8.0, 16.0];

pub fn run() -> Verdict {
    let small = small_run()?;
    let base = small.ckpt.thresholds.clone().expect("calibrated");
    let mut rows = Vec::new();
    for frame in [&small.val, &small.test] {
        let scores = residual_scores(&small.ckpt, frame, 1.0).map_err(fail)?;
        let mut previous: Option<Vec<usize>> = None;
        for c in MULTIPLIERS {
            let flags = flag_anomalies(&scores, &base.with_multiplier(c).map_err(fail)?).map_err(fail)?;
            let per_kpi: Vec<usize> = flags
                .axis_iter(Axis(1))
                .map(|col| col.iter().filter(|&&v| v == 1).count())
                .collect();
            if let Some(prev) = &previous {
                for (k, (a, b)) in prev.iter().zip(&per_kpi).enumerate() {
                    ensure!(b <= a, "KPI {k}: {b} flags at c = {c} after {a} at the previous multiplier");
                }
                ensure!(per_kpi.iter().sum::<usize>() <= prev.iter().sum::<usize>(), "total flag count rose at c = {c}");
            }
            previous = Some(per_kpi);
        }
        rows.push(previous.map(|p| p.iter().sum::<usize>()).unwrap_or_default());
    }
    Ok(format!(
        "flag counts non-increasing per KPI and in total over c in {MULTIPLIERS:?} on validation and test data (c = 16 totals: {rows:?})"
    ))
}
