//! Shared inputs for the benchmarks.

use ctxgat_core::datastore::{ContextColumns, TimeSeriesFrame, WindowSample};
use ctxgat_core::model::ModelConfig;
use ctxgat_core::pipeline::{context_for, windows_f32};
use ctxgat_core::synth::{generate_synthetic, SynthConfig};
use ctxgat_core::training::StaticContext;
use ctxgat_core::{Normalizer, WindowSpec};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Desk-scale model on 12 KPIs.
pub fn desk_config() -> ModelConfig {
    ModelConfig {
        window: 32,
        channels: 16,
        hidden: 32,
        ..ModelConfig::telco_default(12)
    }
}

/// Normalized synthetic frame of `length` rows with 12 KPIs.
pub fn synthetic_frame(length: usize) -> TimeSeriesFrame {
    let out = generate_synthetic(&SynthConfig {
        length,
        ..SynthConfig::default()
    })
    .expect("synthetic data");
    let norm = Normalizer::fit(&out.frame).expect("normalizer");
    norm.apply(&out.frame).expect("normalized")
}

/// `n` consecutive training windows for `config`.
pub fn windows(config: &ModelConfig, n: usize) -> Vec<WindowSample<f32>> {
    let frame = synthetic_frame(config.window + config.horizon + n - 1);
    let context = if config.uses_context() {
        context_for(config, &frame, &StaticContext::default()).expect("context")
    } else {
        ContextColumns::empty(frame.len())
    };
    let spec = WindowSpec::new(config.window, config.horizon, 1).expect("spec");
    windows_f32(&frame, &context, spec).expect("windows")
}

/// Random `t × f` 0/1 matrix with roughly `rate` ones, in short runs.
pub fn random_labels(t: usize, f: usize, rate: f64, seed: u64) -> Array2<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = Array2::zeros((t, f));
    for c in 0..f {
        let mut r = 0;
        while r < t {
            if rng.random_bool(rate / 5.0) {
                let len = rng.random_range(1..10).min(t - r);
                m.slice_mut(ndarray::s![r..r + len, c]).fill(1);
                r += len + 1;
            } else {
                r += 1;
            }
        }
    }
    m
}
