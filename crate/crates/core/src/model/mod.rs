//! Context-aware graph-attention forecaster / reconstructor.
//!
//! One forward pass over a `W × F` window:
//!
//! 1. embed categorical and static real context into a `W × d_c` matrix;
//! 2. run the context-conditioned residual convolution block (`W × ch`);
//! 3. attend over channels (feature view) and over timesteps (temporal view)
//!    with GATv2 layers;
//! 4. feed `[block ‖ feature view ‖ temporal view]` to a GRU encoder;
//! 5. decode the final state into an `H × F` forecast (one affine map) and a
//!    `W × F` reconstruction (GRU decoder on zero inputs).

pub mod context;
pub mod conv;
pub mod gat;
pub mod gru;
mod linalg;

use ndarray::{concatenate, s, Array1, Array2, ArrayD, ArrayView1, ArrayView2, Axis, IxDyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use self::context::{dynamic_table, embed_context, embed_context_backward, static_table};
use self::conv::{cond_conv_block, cond_conv_block_backward, CondConvCache};
use self::gat::{gatv2, gatv2_backward, GatCache};
use self::gru::{gru, gru_backward, GruCache};
use self::linalg::{affine, affine_backward};
use crate::datastore::{ContextSchema, WindowContext};
use crate::error::{Error, Result};
use crate::params::ParamSet;
use crate::real::Real;

/// Every trainable tensor of the model, keyed by name.
pub type ModelParams<T> = ParamSet<T>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_kpis: usize,
    pub window: usize,
    pub horizon: usize,
    pub channels: usize,
    pub hidden: usize,
    pub kernel_size: usize,
    pub leaky_slope: f64,
    pub context: ContextSchema,
    pub context_enabled: bool,
}

#[derive(Debug, Clone, Copy)]
enum Init {
    Uniform(f64),
    Normal(f64),
}

impl ModelConfig {
    /// Full-size defaults for 12 KPIs with calendar context.
    pub fn telco_default(n_kpis: usize) -> Self {
        Self {
            n_kpis,
            window: 100,
            horizon: 3,
            channels: 64,
            hidden: 832,
            kernel_size: 7,
            leaky_slope: 0.2,
            context: ContextSchema::calendar(8, 4),
            context_enabled: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("n_kpis", self.n_kpis),
            ("window", self.window),
            ("horizon", self.horizon),
            ("channels", self.channels),
            ("hidden", self.hidden),
            ("kernel_size", self.kernel_size),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("model {name} must be >= 1")));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::Config("leaky_slope must lie in (0, 1)".into()));
        }
        self.context.validate()
    }

    /// Whether the context branch exists in this model.
    pub fn uses_context(&self) -> bool {
        self.context_enabled && !self.context.is_empty()
    }

    fn param_layout(&self) -> Vec<(String, Vec<usize>, Init)> {
        let (f, w, h, ch, k) = (
            self.n_kpis,
            self.window,
            self.horizon,
            self.channels,
            self.kernel_size,
        );
        let d = self.hidden;
        let fan = |n: usize| Init::Uniform(1.0 / (n as f64).sqrt());
        let glorot = |a: usize, b: usize| Init::Uniform((6.0 / (a + b) as f64).sqrt());
        let mut out: Vec<(String, Vec<usize>, Init)> = Vec::new();
        let mut push = |name: String, shape: Vec<usize>, init: Init| out.push((name, shape, init));

        if self.uses_context() {
            let sc = &self.context;
            for feat in &sc.static_cat {
                push(static_table(&feat.name), vec![feat.cardinality, feat.embed_dim], Init::Normal(1.0));
            }
            for feat in &sc.dynamic_cat {
                push(dynamic_table(&feat.name), vec![feat.cardinality, feat.embed_dim], Init::Normal(1.0));
            }
            if !sc.static_real.is_empty() {
                let r = sc.static_real.len();
                push("ctx.real.w".into(), vec![sc.real_proj_dim, r], fan(r));
                push("ctx.real.b".into(), vec![sc.real_proj_dim], fan(r));
            }
            let dc = sc.width();
            push("ctx.mlp1.w".into(), vec![ch, dc], fan(dc));
            push("ctx.mlp1.b".into(), vec![ch], fan(dc));
            push("ctx.mlp2.w".into(), vec![ch, ch], fan(ch));
            push("ctx.mlp2.b".into(), vec![ch], fan(ch));
        }
        let fused = if self.uses_context() { 2 * ch } else { ch };
        push("conv1.w".into(), vec![ch, k * f], fan(k * f));
        push("conv1.b".into(), vec![ch], fan(k * f));
        push("conv2.w".into(), vec![ch, k * fused], fan(k * fused));
        push("conv2.b".into(), vec![ch], fan(k * fused));
        push("conv3.w".into(), vec![ch, k * ch], fan(k * ch));
        push("conv3.b".into(), vec![ch], fan(k * ch));
        if f != ch {
            push("skip.w".into(), vec![ch, f], fan(f));
        }
        push("feat_gat.wl".into(), vec![w, w], glorot(w, w));
        push("feat_gat.wr".into(), vec![w, w], glorot(w, w));
        push("feat_gat.a".into(), vec![w], glorot(w, 1));
        push("temp_gat.wl".into(), vec![ch, ch], glorot(ch, ch));
        push("temp_gat.wr".into(), vec![ch, ch], glorot(ch, ch));
        push("temp_gat.a".into(), vec![ch], glorot(ch, 1));
        push("enc.wi".into(), vec![3 * d, 3 * ch], fan(d));
        push("enc.wh".into(), vec![3 * d, d], fan(d));
        push("enc.bi".into(), vec![3 * d], fan(d));
        push("enc.bh".into(), vec![3 * d], fan(d));
        push("forecast.w".into(), vec![h * f, d], fan(d));
        push("forecast.b".into(), vec![h * f], fan(d));
        push("dec.wh".into(), vec![3 * d, d], fan(d));
        push("dec.bi".into(), vec![3 * d], fan(d));
        push("dec.bh".into(), vec![3 * d], fan(d));
        push("recon.w".into(), vec![f, d], fan(d));
        push("recon.b".into(), vec![f], fan(d));
        out
    }

    /// Number of scalar parameters a model with this configuration holds.
    pub fn param_count(&self) -> usize {
        self.param_layout()
            .iter()
            .map(|(_, shape, _)| shape.iter().product::<usize>())
            .sum()
    }
}

/// Deterministic parameter initialization. The same seed yields the same
/// values for every element type (f32 values are the rounded f64 draws).
pub fn init_params<T: Real>(config: &ModelConfig, seed: u64) -> Result<ModelParams<T>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::new();
    for (name, shape, init) in config.param_layout() {
        let n: usize = shape.iter().product();
        let data: Vec<T> = match init {
            Init::Uniform(bound) => {
                let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
                (0..n).map(|_| T::of(dist.sample(&mut rng))).collect()
            }
            Init::Normal(std) => {
                let dist = Normal::new(0.0, std).expect("positive std");
                (0..n).map(|_| T::of(dist.sample(&mut rng))).collect()
            }
        };
        params.insert(name, ArrayD::from_shape_vec(IxDyn(&shape), data).expect("shape"));
    }
    Ok(params)
}

/// Forecast and reconstruction for one window.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput<T> {
    /// `H × F`
    pub forecast: Array2<T>,
    /// `W × F`
    pub reconstruction: Array2<T>,
}

/// Intermediate values kept for the backward pass and for inspection.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    context: WindowContext,
    embedded: Option<Array2<T>>,
    block: CondConvCache<T>,
    feature_gat: GatCache<T>,
    temporal_gat: GatCache<T>,
    encoder: GruCache<T>,
    decoder: GruCache<T>,
}

impl<T: Real> ForwardCache<T> {
    /// `ch × ch` attention among conv channels.
    pub fn feature_attention(&self) -> &Array2<T> {
        self.feature_gat.attention()
    }

    /// `W × W` attention among timesteps.
    pub fn temporal_attention(&self) -> &Array2<T> {
        self.temporal_gat.attention()
    }

    /// Final encoder state.
    pub fn state(&self) -> ArrayView1<'_, T> {
        self.encoder.last()
    }
}

/// Encoder output: final GRU state and the per-step features it consumed.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded<T> {
    pub state: Array1<T>,
    /// `W × 3ch`: `[block ‖ feature attention ‖ temporal attention]`.
    pub features: Array2<T>,
}

/// A configured model with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CtxGat<T> {
    config: ModelConfig,
    params: ModelParams<T>,
}

impl<T: Real> CtxGat<T> {
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        let params = init_params(&config, seed)?;
        Ok(Self { config, params })
    }

    /// Wraps existing parameters after checking them against the configuration.
    pub fn from_params(config: ModelConfig, params: ModelParams<T>) -> Result<Self> {
        config.validate()?;
        let layout = config.param_layout();
        if let Some((name, _, _)) = layout.iter().find(|(name, _, _)| !params.contains(name)) {
            return Err(Error::shape(format!("tensor `{name}` is missing")));
        }
        if layout.len() != params.len() {
            return Err(Error::shape(format!(
                "configuration expects {} tensors, got {}",
                layout.len(),
                params.len()
            )));
        }
        for ((name, shape, _), (pname, tensor)) in layout.iter().zip(params.iter()) {
            if name != pname || shape.as_slice() != tensor.shape() {
                return Err(Error::shape(format!(
                    "tensor `{pname}` {:?} does not match expected `{name}` {shape:?}",
                    tensor.shape()
                )));
            }
        }
        if !params.all_finite() {
            return Err(Error::invalid("parameters contain non-finite values"));
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParams<T> {
        &mut self.params
    }

    pub fn into_params(self) -> ModelParams<T> {
        self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.element_count()
    }

    pub fn cast<U: Real>(&self) -> CtxGat<U> {
        CtxGat {
            config: self.config.clone(),
            params: self.params.cast(),
        }
    }

    /// The equivalent context-free model: context tensors dropped and the
    /// fusion convolution restricted to the KPI channels. Matches this model
    /// exactly when the projected context is zero.
    pub fn without_context(&self) -> Self {
        let mut config = self.config.clone();
        config.context_enabled = false;
        if !self.config.uses_context() {
            return Self {
                config,
                params: self.params.clone(),
            };
        }
        let (ch, k) = (self.config.channels, self.config.kernel_size);
        let mut params = ParamSet::new();
        for (name, tensor) in self.params.iter() {
            if name.starts_with("ctx.") {
                continue;
            }
            if name == "conv2.w" {
                let full = self.params.mat(name);
                let mut narrow = Array2::zeros((ch, k * ch));
                for tap in 0..k {
                    narrow
                        .slice_mut(s![.., tap * ch..(tap + 1) * ch])
                        .assign(&full.slice(s![.., tap * 2 * ch..tap * 2 * ch + ch]));
                }
                params.insert(name, narrow.into_dyn());
            } else {
                params.insert(name, tensor.clone());
            }
        }
        Self { config, params }
    }

    fn check_input(&self, input: ArrayView2<'_, T>) -> Result<()> {
        let want = (self.config.window, self.config.n_kpis);
        if input.dim() != want {
            return Err(Error::shape(format!(
                "window is {:?}, model expects {want:?}",
                input.dim()
            )));
        }
        Ok(())
    }

    fn slope(&self) -> T {
        T::of(self.config.leaky_slope)
    }

    pub fn forward(&self, input: ArrayView2<'_, T>, ctx: &WindowContext) -> Result<ForwardOutput<T>> {
        self.forward_cached(input, ctx).map(|(out, _)| out)
    }

    pub fn encode(&self, input: ArrayView2<'_, T>, ctx: &WindowContext) -> Result<Encoded<T>> {
        let (_, cache, features) = self.encode_cached(input, ctx)?;
        Ok(Encoded {
            state: cache.encoder.last().to_owned(),
            features,
        })
    }

    fn encode_cached(
        &self,
        input: ArrayView2<'_, T>,
        ctx: &WindowContext,
    ) -> Result<(Option<Array2<T>>, PartialCache<T>, Array2<T>)> {
        self.check_input(input)?;
        let p = &self.params;
        let embedded = if self.config.uses_context() {
            Some(embed_context(p, &self.config.context, ctx, self.config.window)?)
        } else {
            None
        };
        let (block_out, block) = cond_conv_block(
            p,
            input,
            embedded.as_ref().map(|c| c.view()),
            self.config.kernel_size,
        );
        let (feat_t, feature_gat) = gatv2(p, "feat_gat", block_out.t(), self.slope())?;
        let (temporal, temporal_gat) = gatv2(p, "temp_gat", block_out.view(), self.slope())?;
        let features = concatenate(
            Axis(1),
            &[block_out.view(), feat_t.t(), temporal.view()],
        )
        .expect("feature widths agree");
        let h0 = Array1::zeros(self.config.hidden);
        let encoder = gru(p, "enc", Some(features.view()), self.config.window, h0.view());
        Ok((
            embedded,
            PartialCache {
                block,
                feature_gat,
                temporal_gat,
                encoder,
            },
            features,
        ))
    }

    pub fn forward_cached(
        &self,
        input: ArrayView2<'_, T>,
        ctx: &WindowContext,
    ) -> Result<(ForwardOutput<T>, ForwardCache<T>)> {
        let (embedded, partial, _) = self.encode_cached(input, ctx)?;
        let state = partial.encoder.last();
        let forecast = forecast_head(&self.params, state, self.config.horizon, self.config.n_kpis);
        let (reconstruction, decoder) = reconstruct_head(&self.params, state, self.config.window);
        let PartialCache {
            block,
            feature_gat,
            temporal_gat,
            encoder,
        } = partial;
        Ok((
            ForwardOutput {
                forecast,
                reconstruction,
            },
            ForwardCache {
                context: ctx.clone(),
                embedded,
                block,
                feature_gat,
                temporal_gat,
                encoder,
                decoder,
            },
        ))
    }

    /// Accumulates `dL/dθ` into `grads` and returns `dL/d(input)`.
    pub fn backward(
        &self,
        cache: &ForwardCache<T>,
        d_forecast: ArrayView2<'_, T>,
        d_reconstruction: ArrayView2<'_, T>,
        grads: &mut ModelParams<T>,
    ) -> Array2<T> {
        let p = &self.params;
        let state = cache.encoder.last();

        let mut d_state = forecast_head_backward(p, grads, state, d_forecast);
        d_state += &reconstruct_head_backward(p, grads, &cache.decoder, d_reconstruction);
        self.backward_encoder(cache, d_state.view(), grads)
    }

    /// Backpropagates a gradient on the final encoder state; returns `dL/d(input)`.
    pub fn backward_encoder(
        &self,
        cache: &ForwardCache<T>,
        d_state: ArrayView1<'_, T>,
        grads: &mut ModelParams<T>,
    ) -> Array2<T> {
        let p = &self.params;
        let ch = self.config.channels;
        let mut d_enc_out = Array2::zeros((self.config.window, self.config.hidden));
        d_enc_out.row_mut(self.config.window - 1).assign(&d_state);
        let (d_features, _) = gru_backward(p, grads, "enc", &cache.encoder, d_enc_out.view());
        let d_features = d_features.expect("encoder consumes inputs");

        let mut d_block = d_features.slice(s![.., 0..ch]).to_owned();
        let d_feat_t = d_features.slice(s![.., ch..2 * ch]);
        let d_temporal = d_features.slice(s![.., 2 * ch..]);
        let slope = self.slope();
        d_block += &gatv2_backward(p, grads, "temp_gat", &cache.temporal_gat, d_temporal, slope);
        d_block += &gatv2_backward(p, grads, "feat_gat", &cache.feature_gat, d_feat_t.t(), slope).t();

        let (d_input, d_ctx) = cond_conv_block_backward(p, grads, &cache.block, d_block.view());
        if let Some(d_ctx) = d_ctx {
            embed_context_backward(grads, &self.config.context, &cache.context, d_ctx.view());
        }
        debug_assert_eq!(cache.embedded.is_some(), self.config.uses_context());
        d_input
    }
}

struct PartialCache<T> {
    block: CondConvCache<T>,
    feature_gat: GatCache<T>,
    temporal_gat: GatCache<T>,
    encoder: GruCache<T>,
}

/// One-shot multi-step forecast: a single affine map from the state to `H·F`
/// values, reshaped to `H × F`.
pub fn forecast_head<T: Real>(
    params: &ParamSet<T>,
    state: ArrayView1<'_, T>,
    horizon: usize,
    n_kpis: usize,
) -> Array2<T> {
    let flat = params.mat("forecast.w").dot(&state) + params.vector("forecast.b");
    flat.into_shape_with_order((horizon, n_kpis))
        .expect("forecast width is H·F")
}

pub fn forecast_head_backward<T: Real>(
    params: &ParamSet<T>,
    grads: &mut ParamSet<T>,
    state: ArrayView1<'_, T>,
    d_forecast: ArrayView2<'_, T>,
) -> Array1<T> {
    let d_flat: Array1<T> = d_forecast.iter().copied().collect();
    let (mut gw, mut gb) = grads.weight_bias_mut("forecast.w", "forecast.b");
    for (o, &d) in d_flat.iter().enumerate() {
        let mut row = gw.row_mut(o);
        row.scaled_add(d, &state);
    }
    gb += &d_flat;
    params.mat("forecast.w").t().dot(&d_flat)
}

/// Deterministic GRU decoder started from `state` and driven by zero inputs
/// for `window` steps; step `k` reconstructs input row `k`.
pub fn reconstruct_head<T: Real>(
    params: &ParamSet<T>,
    state: ArrayView1<'_, T>,
    window: usize,
) -> (Array2<T>, GruCache<T>) {
    let decoder = gru(params, "dec", None, window, state);
    let out = affine(
        decoder.outputs(),
        params.mat("recon.w"),
        Some(params.vector("recon.b")),
    );
    (out, decoder)
}

pub fn reconstruct_head_backward<T: Real>(
    params: &ParamSet<T>,
    grads: &mut ParamSet<T>,
    decoder: &GruCache<T>,
    d_reconstruction: ArrayView2<'_, T>,
) -> Array1<T> {
    let d_hidden = {
        let (gw, gb) = grads.weight_bias_mut("recon.w", "recon.b");
        affine_backward(
            decoder.outputs(),
            params.mat("recon.w"),
            d_reconstruction,
            gw,
            Some(gb),
        )
    };
    let (_, d_state) = gru_backward(params, grads, "dec", decoder, d_hidden.view());
    d_state
}
