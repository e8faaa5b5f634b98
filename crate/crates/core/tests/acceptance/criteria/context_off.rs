use ctxgat_core::datastore::{ContextSchema, WindowContext};
use ctxgat_core::model::conv::cond_conv_block;
use ctxgat_core::training::gradcheck::random_context;
use ctxgat_core::{CtxGat, ModelConfig, ParamSet};
use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::common::{ensure, fail, Verdict};

const TOL: f64 = 1e-6;
const CASES: u64 = 100;

fn config(n_kpis: usize, context: bool) -> ModelConfig {
    ModelConfig {
        n_kpis,
        window: 12,
        horizon: 2,
        channels: 5,
        hidden: 6,
        kernel_size: 3,
        leaky_slope: 0.2,
        context: ContextSchema::calendar(3, 2),
        context_enabled: context,
    }
}

/// Causal convolution written out index by index: output row `t` sees
/// input rows `t-K+1 ..= t`, zero before the start.
fn naive_conv(p: &ParamSet<f64>, name: &str, x: ArrayView2<'_, f64>, k: usize) -> Array2<f64> {
    let w = p.mat(&format!("{name}.w"));
    let b = p.vector(&format!("{name}.b"));
    let (len, cin) = x.dim();
    let mut y = Array2::zeros((len, w.nrows()));
    for t in 0..len {
        for o in 0..w.nrows() {
            let mut acc = b[o];
            for tap in 0..k {
                let lag = k - 1 - tap;
                if t < lag {
                    continue;
                }
                for i in 0..cin {
                    acc += w[[o, tap * cin + i]] * x[[t - lag, i]];
                }
            }
            y[[t, o]] = acc;
        }
    }
    y
}

fn residual_reference(p: &ParamSet<f64>, x: ArrayView2<'_, f64>, k: usize) -> Array2<f64> {
    let y1 = naive_conv(p, "conv1", x, k);
    let a = naive_conv(p, "conv2", y1.view(), k).mapv(|v| v.max(0.0));
    let mut out = naive_conv(p, "conv3", a.view(), k);
    for t in 0..x.nrows() {
        for o in 0..out.ncols() {
            out[[t, o]] += match p.get("skip.w") {
                Some(_) => {
                    let s = p.mat("skip.w");
                    (0..x.ncols()).map(|i| s[[o, i]] * x[[t, i]]).sum::<f64>()
                }
                None => x[[t, o]],
            };
        }
    }
    out
}

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn run() -> Verdict {
    let mut block_err = 0.0f64;
    let mut model_err = 0.0f64;
    for seed in 0..CASES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // alternate between a learned skip map and the identity skip
        let n_kpis = if seed % 2 == 0 { 3 } else { 5 };

        let plain = CtxGat::<f64>::init(config(n_kpis, false), seed).map_err(fail)?;
        let x = Array2::from_shape_simple_fn((12, n_kpis), || rng.sample::<f64, _>(StandardNormal));
        let (out, _) = cond_conv_block(plain.params(), x.view(), None, 3);
        block_err = block_err.max(max_abs_diff(&out, &residual_reference(plain.params(), x.view(), 3)));

        // a context model whose projected context is zero reduces to its
        // context-free counterpart
        let mut ctx_model = CtxGat::<f64>::init(config(n_kpis, true), seed + 1000).map_err(fail)?;
        for name in ["ctx.mlp2.w", "ctx.mlp2.b"] {
            ctx_model.params_mut().get_mut(name).expect("context tensor").fill(0.0);
        }
        let ctx = random_context(&ctx_model.config().context, 12, &mut rng);
        let with = ctx_model.forward(x.view(), &ctx).map_err(fail)?;
        let without = ctx_model.without_context().forward(x.view(), &WindowContext::empty(12)).map_err(fail)?;
        model_err = model_err
            .max(max_abs_diff(&with.forecast, &without.forecast))
            .max(max_abs_diff(&with.reconstruction, &without.reconstruction));
    }
    ensure!(block_err <= TOL, "block deviates from the residual convolution by {block_err:.3e}");
    ensure!(model_err <= TOL, "zero-context model deviates from the context-free model by {model_err:.3e}");
    Ok(format!(
        "{CASES} inputs: block vs loop reference max |diff| {block_err:.1e}; zero-context vs context-free model {model_err:.1e}"
    ))
}
