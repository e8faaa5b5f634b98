use ctxgat_core::datastore::{split_time_ordered, TimeSeriesFrame};
use ctxgat_core::pipeline::{calibrate, fit};
use ctxgat_core::synth::{generate_synthetic, SynthConfig};
use ctxgat_core::{Checkpoint, RunConfig};

pub type Verdict = Result<String, String>;

/// Fails the criterion with a message unless `cond` holds.
macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}
pub(crate) use ensure;

pub fn fail<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// A quickly trained, calibrated model on four synthetic KPIs, plus the
/// label-free test split it has not seen.
pub struct SmallRun {
    pub ckpt: Checkpoint,
    pub val: TimeSeriesFrame,
    pub test: TimeSeriesFrame,
}

pub fn small_run() -> Result<SmallRun, String> {
    let run = RunConfig::from_toml(
        "seed = 11\n[model]\nwindow = 16\nhorizon = 2\nchannels = 8\nhidden = 16\nkernel_size = 5\n\
         [training]\nepochs = 2\nstride = 2\nbatch_size = 32\n\
         [synth]\nn_kpis = 4\nlength = 3000\n",
    )
    .map_err(fail)?;
    let data = generate_synthetic(&run.synth_config()).map_err(fail)?;
    let [train, val, test] =
        split_time_ordered(&data.frame.clone().without_labels(), run.data.split, 32).map_err(fail)?;
    let mut ckpt = fit(&run, &train, Some(&val)).map_err(fail)?;
    calibrate(&mut ckpt, &val, run.scoring.gamma, run.scoring.c).map_err(fail)?;
    Ok(SmallRun { ckpt, val, test })
}

pub fn synth(config: SynthConfig) -> Result<ctxgat_core::SynthOutput, String> {
    generate_synthetic(&config).map_err(fail)
}
