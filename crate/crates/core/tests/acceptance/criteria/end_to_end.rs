use std::time::{Duration, Instant};

use ctxgat_core::datastore::split_time_ordered;
use ctxgat_core::evaluation::{aggregate, random_baseline};
use ctxgat_core::pipeline::{calibrate, fit, score};
use ctxgat_core::synth::generate_synthetic;
use ctxgat_core::{AggregationMode, MetricKind, RunConfig};
use ndarray::{Array2, Axis};

use crate::common::{ensure, fail, Verdict};

const BUDGET: Duration = Duration::from_secs(15 * 60);
const RANDOM_SEEDS: u64 = 20;

/// Desk-scale run: 12 KPIs, 20 000 steps, 1% anomalous, c = 4.
const CONFIG: &str = r#"
seed = 0

[model]
window = 32
horizon = 3
channels = 16
hidden = 32

[training]
epochs = 8
batch_size = 32
stride = 4
patience = 3
"#;

pub fn run() -> Verdict {
    let start = Instant::now();
    let run = RunConfig::from_toml(CONFIG).map_err(fail)?;
    ensure!(run.scoring.c == 4.0, "multiplier is {}", run.scoring.c);
    let data = generate_synthetic(&run.synth_config()).map_err(fail)?;
    let window = run.model.window;
    let [train, val, test] = split_time_ordered(&data.frame, run.data.split, window + run.model.horizon).map_err(fail)?;
    let test_labels = test.labels().expect("synthetic labels").clone();
    // labels are stripped before anything but the evaluator sees the data
    let (train, val, test) = (train.without_labels(), val.without_labels(), test.without_labels());

    let mut ckpt = fit(&run, &train, Some(&val)).map_err(fail)?;
    calibrate(&mut ckpt, &val, run.scoring.gamma, run.scoring.c).map_err(fail)?;
    let (scores, flags) = score(&ckpt, &test, run.scoring.gamma).map_err(fail)?;

    let covered: Vec<usize> = (0..scores.len()).filter(|&t| scores.covered[t]).collect();
    let pred: Array2<u8> = flags.select(Axis(0), &covered);
    let gt: Array2<u8> = test_labels.select(Axis(0), &covered);
    let kpis = ckpt.kpis.clone();
    let metric = |p: &Array2<u8>, kind| {
        aggregate(p.view(), gt.view(), &kpis, AggregationMode::Macro, kind).map(|r| r.scores.f1)
    };
    let pointwise = metric(&pred, MetricKind::Pointwise).map_err(fail)?;
    let affiliation = metric(&pred, MetricKind::Affiliation).map_err(fail)?;
    let mut random = 0.0;
    for seed in 0..RANDOM_SEEDS {
        random += metric(&random_baseline(gt.view(), seed), MetricKind::Pointwise).map_err(fail)?;
    }
    random /= RANDOM_SEEDS as f64;
    let elapsed = start.elapsed();

    let prevalence = gt.iter().filter(|&&v| v == 1).count() as f64 / gt.len() as f64;
    let summary = format!(
        "pointwise Macro F1 {pointwise:.3} vs random {random:.4} ({:.1}x), affiliation Macro F1 {affiliation:.3}; test prevalence {:.2}%, best epoch {}",
        pointwise / random,
        100.0 * prevalence,
        ckpt.history.best_epoch
    );
    ensure!(pointwise >= 3.0 * random, "{summary}");
    ensure!(affiliation >= 0.60, "{summary}");
    ensure!(elapsed < BUDGET, "took {elapsed:?}, budget {BUDGET:?}; {summary}");
    Ok(summary)
}
