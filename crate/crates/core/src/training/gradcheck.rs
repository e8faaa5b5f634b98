//! Central finite-difference verification of the analytic gradients.
//!
//! Every check builds a point (layer parameters plus the layer's real-valued
//! inputs, stored under `input.*`), a scalar function of that point and its
//! analytic gradient, then compares the gradient with
//! `(f(θ+ε) − f(θ−ε)) / 2ε` element by element.
//!
//! The analytic side always runs in `f64`. The difference quotient is by
//! default evaluated in double-double arithmetic: in plain `f64` its
//! round-off (about `1e-11` at `ε = 1e-5`) dominates entries whose true
//! gradient is below `1e-7`, such as the GATv2 query weights, whose effect
//! cancels inside the softmax wherever a LeakyReLU does not switch branch.

use std::fmt;

use ndarray::{Array1, Array2, ArrayD, ArrayViewD, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::loss::{joint_loss, joint_loss_grad};
use crate::datastore::{CatFeature, ContextSchema, WindowContext};
use crate::error::Result;
use crate::model::context::{embed_context, embed_context_backward};
use crate::model::conv::{cond_conv_block, cond_conv_block_backward};
use crate::model::gat::{gatv2, gatv2_backward};
use crate::model::gru::{gru, gru_backward};
use crate::model::{
    forecast_head, forecast_head_backward, init_params, reconstruct_head,
    reconstruct_head_backward, CtxGat, ModelConfig,
};
use crate::params::ParamSet;
use crate::real::{DoubleDouble, Real};

/// Sub-function whose gradient is verified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GradTarget {
    ContextEmbedding,
    CondConv,
    FeatureGat,
    TemporalGat,
    GruEncoder,
    /// Context, conv block, both attentions and the encoder, up to the final state.
    Encode,
    ForecastHead,
    ReconstructHead,
    /// The joint loss of the whole model.
    FullModel,
}

impl GradTarget {
    pub const ALL: [GradTarget; 9] = [
        GradTarget::ContextEmbedding,
        GradTarget::CondConv,
        GradTarget::FeatureGat,
        GradTarget::TemporalGat,
        GradTarget::GruEncoder,
        GradTarget::Encode,
        GradTarget::ForecastHead,
        GradTarget::ReconstructHead,
        GradTarget::FullModel,
    ];
}

impl fmt::Display for GradTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            GradTarget::ContextEmbedding => "context-embedding",
            GradTarget::CondConv => "cond-conv",
            GradTarget::FeatureGat => "feature-gat",
            GradTarget::TemporalGat => "temporal-gat",
            GradTarget::GruEncoder => "gru-encoder",
            GradTarget::Encode => "encode",
            GradTarget::ForecastHead => "forecast-head",
            GradTarget::ReconstructHead => "reconstruct-head",
            GradTarget::FullModel => "full-model",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Tensor name and flat index of the worst element.
    pub worst: Option<(String, usize)>,
    /// Analytic and numeric values at the worst element.
    pub worst_values: (f64, f64),
    pub n_checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Arithmetic the finite-difference reference is evaluated in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reference {
    /// Plain `f64`. Round-off in `f(θ ± ε)` leaves about `1e-11` of absolute
    /// noise at `ε = 1e-5`.
    F64,
    /// Double-double: the perturbed points are exact and round-off is far
    /// below the truncation error of the difference quotient.
    #[default]
    DoubleDouble,
}

/// Central differences of `f` at `point`, one element at a time, evaluated
/// in the element type `T`.
pub fn numeric_gradient<T, F>(point: &ParamSet<f64>, f: F, eps: f64) -> ParamSet<f64>
where
    T: Real,
    F: Fn(&ParamSet<T>) -> T,
{
    let mut probe: ParamSet<T> = point.cast();
    let mut grad = point.zeros_like();
    let (e, two_e) = (T::of(eps), T::of(2.0 * eps));
    for i in 0..point.element_count() {
        let x = probe.flat_get(i);
        *probe.flat_get_mut(i) = x + e;
        let up = f(&probe);
        *probe.flat_get_mut(i) = x - e;
        let down = f(&probe);
        *probe.flat_get_mut(i) = x;
        *grad.flat_get_mut(i) = ((up - down) / two_e).as_f64();
    }
    grad
}

/// Compares an analytic gradient with central differences of `f` in `T`.
pub fn check_gradient<T, F>(point: &ParamSet<f64>, f: F, analytic: &ParamSet<f64>, eps: f64) -> GradCheckReport
where
    T: Real,
    F: Fn(&ParamSet<T>) -> T,
{
    assert!(point.same_layout(analytic), "gradient layout differs from point");
    let numeric = numeric_gradient(point, f, eps);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        worst_values: (0.0, 0.0),
        n_checked: 0,
    };
    for ((name, a), (_, n)) in analytic.iter().zip(numeric.iter()) {
        for (i, (&ga, &gn)) in a.iter().zip(n.iter()).enumerate() {
            let e = relative_error(ga, gn);
            report.n_checked += 1;
            if e > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(e);
                report.worst = Some((name.to_string(), i));
                report.worst_values = (ga, gn);
            }
        }
    }
    report
}

/// The small configuration gradient checks run on: two KPIs, an 8-step
/// window, four channels, hidden size 8, and every kind of context feature.
pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        n_kpis: 2,
        window: 8,
        horizon: 2,
        channels: 4,
        hidden: 8,
        kernel_size: 7,
        leaky_slope: 0.2,
        context: ContextSchema {
            static_cat: vec![CatFeature::new("vendor", 3, 2)],
            dynamic_cat: vec![CatFeature::new("hour", 24, 2), CatFeature::new("weekday", 7, 2)],
            static_real: vec!["lat".into(), "lon".into()],
            real_proj_dim: 2,
        },
        context_enabled: true,
    }
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

fn normal_vector(rng: &mut ChaCha8Rng, n: usize) -> Array1<f64> {
    Array1::from_shape_simple_fn(n, || rng.sample(StandardNormal))
}

/// Random context indices and reals valid for `schema`.
pub fn random_context(schema: &ContextSchema, window: usize, rng: &mut ChaCha8Rng) -> WindowContext {
    WindowContext {
        static_cat: schema
            .static_cat
            .iter()
            .map(|f| rng.random_range(0..f.cardinality))
            .collect(),
        dynamic_cat: Array2::from_shape_fn((window, schema.dynamic_cat.len()), |(_, c)| {
            rng.random_range(0..schema.dynamic_cat[c].cardinality)
        }),
        static_real: schema
            .static_real
            .iter()
            .map(|_| rng.sample(StandardNormal))
            .collect(),
    }
}

fn subset(params: &ParamSet<f64>, prefixes: &[&str]) -> ParamSet<f64> {
    let mut out = ParamSet::new();
    for (name, t) in params.iter() {
        if prefixes.iter().any(|p| name.starts_with(p)) {
            out.insert(name, t.clone());
        }
    }
    out
}

fn put(grads: &mut ParamSet<f64>, name: &str, value: ArrayD<f64>) {
    *grads.get_mut(name).expect("gradient slot") = value;
}

/// Everything a check holds fixed: the configuration, the context indices
/// and the random cotangent (or loss targets) defining the scalar function.
struct Problem {
    target: GradTarget,
    config: ModelConfig,
    ctx: WindowContext,
    /// Weights of the scalar projection `Σ R ⊙ output`.
    cotangent: ArrayD<f64>,
    /// Forecast target, reconstruction target and their masks (full model).
    loss_targets: Option<(Array2<f64>, Array2<f64>, Array2<bool>, Array2<bool>)>,
}

fn project<T: Real>(weights: &ArrayD<f64>, values: ArrayViewD<'_, T>) -> T {
    assert_eq!(weights.shape(), values.shape());
    weights
        .iter()
        .zip(values.iter())
        .fold(T::zero(), |acc, (&w, &v)| acc + T::of(w) * v)
}

fn model_at<T: Real>(config: &ModelConfig, p: &ParamSet<T>) -> CtxGat<T> {
    let mut params = p.clone();
    params.remove("input.x");
    CtxGat::from_params(config.clone(), params).expect("parameter layout")
}

impl Problem {
    /// The scalar function being differentiated, at `p`, in precision `T`.
    fn value<T: Real>(&self, p: &ParamSet<T>) -> T {
        let c = &self.config;
        let r = &self.cotangent;
        let slope = T::of(c.leaky_slope);
        match self.target {
            GradTarget::ContextEmbedding => {
                let out = embed_context(p, &c.context, &self.ctx, c.window).expect("valid context");
                project(r, out.view().into_dyn())
            }
            GradTarget::CondConv => {
                let ctx = p.contains("input.c").then(|| p.mat("input.c"));
                let (out, _) = cond_conv_block(p, p.mat("input.x"), ctx, c.kernel_size);
                project(r, out.view().into_dyn())
            }
            GradTarget::FeatureGat | GradTarget::TemporalGat => {
                let prefix = self.gat_prefix();
                let (out, _) = gatv2(p, prefix, p.mat("input.u"), slope).expect("nodes");
                project(r, out.view().into_dyn())
            }
            GradTarget::GruEncoder => {
                let cache = gru(p, "enc", Some(p.mat("input.x")), c.window, p.vector("input.h0"));
                project(r, cache.outputs().into_dyn())
            }
            GradTarget::Encode => {
                let state = model_at(c, p).encode(p.mat("input.x"), &self.ctx).expect("forward").state;
                project(r, state.view().into_dyn())
            }
            GradTarget::ForecastHead => {
                let out = forecast_head(p, p.vector("input.h"), c.horizon, c.n_kpis);
                project(r, out.view().into_dyn())
            }
            GradTarget::ReconstructHead => {
                let (out, _) = reconstruct_head(p, p.vector("input.h"), c.window);
                project(r, out.view().into_dyn())
            }
            GradTarget::FullModel => {
                let (future, recon, future_mask, input_mask) = self.loss_targets.as_ref().expect("targets");
                let out = model_at(c, p).forward(p.mat("input.x"), &self.ctx).expect("forward");
                joint_loss(
                    out.forecast.view(),
                    out.reconstruction.view(),
                    future.mapv(T::of).view(),
                    recon.mapv(T::of).view(),
                    Some(future_mask.view()),
                    Some(input_mask.view()),
                )
                .expect("shapes")
            }
        }
    }

    fn gat_prefix(&self) -> &'static str {
        if self.target == GradTarget::FeatureGat {
            "feat_gat"
        } else {
            "temp_gat"
        }
    }

    /// Analytic gradient of [`Problem::value`] at `point` (double precision).
    fn analytic(&self, point: &ParamSet<f64>) -> Result<ParamSet<f64>> {
        let c = &self.config;
        let r = &self.cotangent;
        let mut grads = point.zeros_like();
        match self.target {
            GradTarget::ContextEmbedding => {
                let r = r.view().into_dimensionality().expect("matrix");
                embed_context_backward(&mut grads, &c.context, &self.ctx, r);
            }
            GradTarget::CondConv => {
                let ctx = point.contains("input.c").then(|| point.mat("input.c"));
                let (_, cache) = cond_conv_block(point, point.mat("input.x"), ctx, c.kernel_size);
                let r = r.view().into_dimensionality().expect("matrix");
                let (dx, dc) = cond_conv_block_backward(point, &mut grads, &cache, r);
                put(&mut grads, "input.x", dx.into_dyn());
                if let Some(dc) = dc {
                    put(&mut grads, "input.c", dc.into_dyn());
                }
            }
            GradTarget::FeatureGat | GradTarget::TemporalGat => {
                let prefix = self.gat_prefix();
                let slope = c.leaky_slope;
                let (_, cache) = gatv2(point, prefix, point.mat("input.u"), slope)?;
                let r = r.view().into_dimensionality().expect("matrix");
                let du = gatv2_backward(point, &mut grads, prefix, &cache, r, slope);
                put(&mut grads, "input.u", du.into_dyn());
            }
            GradTarget::GruEncoder => {
                let cache = gru(point, "enc", Some(point.mat("input.x")), c.window, point.vector("input.h0"));
                let r = r.view().into_dimensionality().expect("matrix");
                let (dx, dh0) = gru_backward(point, &mut grads, "enc", &cache, r);
                put(&mut grads, "input.x", dx.expect("inputs").into_dyn());
                put(&mut grads, "input.h0", dh0.into_dyn());
            }
            GradTarget::Encode => {
                let model = model_at(c, point);
                let (_, cache) = model.forward_cached(point.mat("input.x"), &self.ctx)?;
                let mut model_grads = model.params().zeros_like();
                let r = r.view().into_dimensionality().expect("vector");
                let dx = model.backward_encoder(&cache, r, &mut model_grads);
                model_grads.insert("input.x", dx.into_dyn());
                grads = model_grads;
            }
            GradTarget::ForecastHead => {
                let r = r.view().into_dimensionality().expect("matrix");
                let dh = forecast_head_backward(point, &mut grads, point.vector("input.h"), r);
                put(&mut grads, "input.h", dh.into_dyn());
            }
            GradTarget::ReconstructHead => {
                let (_, cache) = reconstruct_head(point, point.vector("input.h"), c.window);
                let r = r.view().into_dimensionality().expect("matrix");
                let dh = reconstruct_head_backward(point, &mut grads, &cache, r);
                put(&mut grads, "input.h", dh.into_dyn());
            }
            GradTarget::FullModel => {
                let (future, recon, future_mask, input_mask) = self.loss_targets.as_ref().expect("targets");
                let model = model_at(c, point);
                let (out, cache) = model.forward_cached(point.mat("input.x"), &self.ctx)?;
                let lg = joint_loss_grad(
                    out.forecast.view(),
                    out.reconstruction.view(),
                    future.view(),
                    recon.view(),
                    Some(future_mask.view()),
                    Some(input_mask.view()),
                )?;
                let mut model_grads = model.params().zeros_like();
                let dx = model.backward(&cache, lg.d_forecast.view(), lg.d_reconstruction.view(), &mut model_grads);
                model_grads.insert("input.x", dx.into_dyn());
                grads = model_grads;
            }
        }
        Ok(grads)
    }
}

/// Builds the evaluation point (parameters plus `input.*` tensors) and the
/// fixed data of one check.
fn setup(target: GradTarget, config: &ModelConfig, seed: u64) -> Result<(Problem, ParamSet<f64>)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(7);
    let params = init_params::<f64>(config, seed)?;
    let (w, f, ch, d, h) = (
        config.window,
        config.n_kpis,
        config.channels,
        config.hidden,
        config.horizon,
    );
    let ctx = random_context(&config.context, w, &mut rng);
    let mut loss_targets = None;
    let (point, cotangent) = match target {
        GradTarget::ContextEmbedding => (
            subset(&params, &["ctx.static.", "ctx.dynamic.", "ctx.real."]),
            normal_matrix(&mut rng, w, config.context.width()).into_dyn(),
        ),
        GradTarget::CondConv => {
            let mut point = subset(&params, &["conv", "skip.", "ctx.mlp"]);
            point.insert("input.x", normal_matrix(&mut rng, w, f).into_dyn());
            if config.uses_context() {
                point.insert("input.c", normal_matrix(&mut rng, w, config.context.width()).into_dyn());
            }
            (point, normal_matrix(&mut rng, w, ch).into_dyn())
        }
        GradTarget::FeatureGat | GradTarget::TemporalGat => {
            let (prefix, nodes, dim) = if target == GradTarget::FeatureGat {
                ("feat_gat", ch, w)
            } else {
                ("temp_gat", w, ch)
            };
            let mut point = subset(&params, &[prefix]);
            point.insert("input.u", normal_matrix(&mut rng, nodes, dim).into_dyn());
            (point, normal_matrix(&mut rng, nodes, dim).into_dyn())
        }
        GradTarget::GruEncoder => {
            let mut point = subset(&params, &["enc."]);
            point.insert("input.x", normal_matrix(&mut rng, w, 3 * ch).into_dyn());
            point.insert("input.h0", normal_vector(&mut rng, d).into_dyn());
            (point, normal_matrix(&mut rng, w, d).into_dyn())
        }
        GradTarget::Encode => {
            let mut point = params.clone();
            point.insert("input.x", normal_matrix(&mut rng, w, f).into_dyn());
            (point, normal_vector(&mut rng, d).into_dyn())
        }
        GradTarget::ForecastHead => {
            let mut point = subset(&params, &["forecast."]);
            point.insert("input.h", normal_vector(&mut rng, d).into_dyn());
            (point, normal_matrix(&mut rng, h, f).into_dyn())
        }
        GradTarget::ReconstructHead => {
            let mut point = subset(&params, &["dec.", "recon."]);
            point.insert("input.h", normal_vector(&mut rng, d).into_dyn());
            (point, normal_matrix(&mut rng, w, f).into_dyn())
        }
        GradTarget::FullModel => {
            let mut point = params.clone();
            point.insert("input.x", normal_matrix(&mut rng, w, f).into_dyn());
            loss_targets = Some((
                normal_matrix(&mut rng, h, f),
                normal_matrix(&mut rng, w, f),
                Array2::from_shape_simple_fn((h, f), || rng.random_bool(0.8)),
                Array2::from_shape_simple_fn((w, f), || rng.random_bool(0.8)),
            ));
            (point, ArrayD::zeros(IxDyn(&[0])))
        }
    };
    let problem = Problem {
        target,
        config: config.clone(),
        ctx,
        cotangent,
        loss_targets,
    };
    Ok((problem, point))
}

/// Runs the finite-difference check for one sub-function at `seed` with the
/// double-double reference.
pub fn grad_check(target: GradTarget, config: &ModelConfig, seed: u64, eps: f64) -> Result<GradCheckReport> {
    grad_check_with(target, config, seed, eps, Reference::default())
}

pub fn grad_check_with(
    target: GradTarget,
    config: &ModelConfig,
    seed: u64,
    eps: f64,
    reference: Reference,
) -> Result<GradCheckReport> {
    let (problem, point) = setup(target, config, seed)?;
    let analytic = problem.analytic(&point)?;
    Ok(match reference {
        Reference::F64 => check_gradient::<f64, _>(&point, |p| problem.value(p), &analytic, eps),
        Reference::DoubleDouble => {
            check_gradient::<DoubleDouble, _>(&point, |p| problem.value(p), &analytic, eps)
        }
    })
}
