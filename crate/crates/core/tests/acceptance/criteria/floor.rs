use ctxgat_core::evaluation::{aggregate, affiliation_metrics};
use ctxgat_core::synth::{AnomalyMix, SynthConfig};
use ctxgat_core::{AggregationMode, MetricKind};
use ndarray::Array2;

use crate::common::{ensure, fail, synth, Verdict};

const RANGE: (f64, f64) = (0.62, 0.72);

pub fn run() -> Verdict {
    // sparse, short events: spikes only, 0.2% of steps
    let data = synth(SynthConfig {
        n_kpis: 12,
        length: 20_000,
        prevalence: 0.002,
        mix: AnomalyMix {
            spike: 1.0,
            level_shift: 0.0,
            dropout: 0.0,
        },
        seed: 17,
        ..SynthConfig::default()
    })?;
    let gt = data.frame.labels().expect("synthetic labels").clone();
    let everything = Array2::<u8>::ones(gt.raw_dim());

    let mut f1s = Vec::new();
    for (c, kpi) in data.frame.kpi_names().iter().enumerate() {
        let m = affiliation_metrics(&everything.column(c).to_vec(), &gt.column(c).to_vec())
            .map_err(fail)?;
        ensure!(m.recall == 1.0, "{kpi}: flag-everything recall {} != 1", m.recall);
        f1s.push(m.f1);
    }
    let mean = f1s.iter().sum::<f64>() / f1s.len() as f64;
    let macro_f1 = aggregate(everything.view(), gt.view(), data.frame.kpi_names(), AggregationMode::Macro, MetricKind::Affiliation)
        .map_err(fail)?
        .scores
        .f1;
    ensure!((macro_f1 - mean).abs() < 1e-12, "macro F1 {macro_f1} differs from the per-stream mean {mean}");
    let (lo, hi) = f1s.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    ensure!(
        lo >= RANGE.0 && hi <= RANGE.1,
        "per-stream F1 spans [{lo:.4}, {hi:.4}], outside [{}, {}]",
        RANGE.0,
        RANGE.1
    );
    Ok(format!(
        "flag-everything affiliation F1 per stream in [{lo:.4}, {hi:.4}], mean {mean:.4} over 12 streams"
    ))
}
