use ctxgat_core::datastore::{ContextColumns, WindowSpec};
use ctxgat_core::pipeline::windows_f32;
use ctxgat_core::synth::SynthConfig;
use ctxgat_core::training::gradcheck::tiny_config;
use ctxgat_core::training::{dataset_loss, train, TrainConfig};
use ctxgat_core::Normalizer;

use crate::common::{ensure, fail, synth, Verdict};

const WINDOWS: usize = 200;
const MAX_EPOCHS: usize = 500;

pub fn run() -> Verdict {
    let model_config = tiny_config();
    let (w, h) = (model_config.window, model_config.horizon);
    let data = synth(SynthConfig {
        n_kpis: model_config.n_kpis,
        length: WINDOWS + w + h - 1,
        prevalence: 0.0,
        seed: 3,
        ..SynthConfig::default()
    })?;
    let frame = Normalizer::fit(&data.frame).and_then(|n| n.apply(&data.frame)).map_err(fail)?;
    let context = ContextColumns::for_frame(&model_config.context, &frame, &[1], &[0.25, -0.5]).map_err(fail)?;
    let windows = windows_f32(&frame, &context, WindowSpec::new(w, h, 1).map_err(fail)?).map_err(fail)?;
    ensure!(windows.len() == WINDOWS, "built {} windows", windows.len());

    let config = TrainConfig {
        epochs: MAX_EPOCHS,
        batch_size: 20,
        learning_rate: 1e-2,
        seed: 5,
        ..TrainConfig::default()
    };
    let first = train(&windows, &[], &model_config, &config).map_err(fail)?;
    let second = train(&windows, &[], &model_config, &config).map_err(fail)?;

    let initial = first.history.initial_train_loss;
    let last = dataset_loss(&first.model, &windows).map_err(fail)?;
    let ratio = last / initial;
    ensure!(
        first.history == second.history,
        "two runs with the same seed produced different histories"
    );
    ensure!(
        first.model.params() == second.model.params(),
        "two runs with the same seed produced different parameters"
    );
    ensure!(
        ratio <= 0.1,
        "final loss {last:.4} is {:.1}% of the initial {initial:.4}",
        100.0 * ratio
    );
    Ok(format!(
        "joint loss {initial:.4} -> {last:.4} ({:.1}% of initial) in {} epochs; repeated run bit-identical",
        100.0 * ratio,
        first.history.epochs.len()
    ))
}
