//! Context-aware graph-attention anomaly detection for multivariate KPI series.

pub mod config;
pub mod datastore;
mod error;
pub mod evaluation;
pub mod model;
pub mod params;
pub mod pipeline;
mod real;
pub mod scoring;
pub mod synth;
pub mod training;

pub use config::RunConfig;
pub use datastore::{ContextSchema, Normalizer, TimeSeriesFrame, WindowSample, WindowSpec};
pub use error::{Error, Result};
pub use evaluation::{AggregationMode, EvalReport, MetricKind, MetricReport};
pub use model::{CtxGat, ModelConfig, ModelParams};
pub use params::ParamSet;
pub use real::{DoubleDouble, Real};
pub use scoring::{ScoreSeries, Thresholds};
pub use synth::{SynthConfig, SynthOutput};
pub use training::{Checkpoint, TrainConfig, TrainHistory};
