//! Causal 1D convolutions and the context-conditioned convolution block.
//!
//! Sequences are `W × channels`. A convolution kernel is stored as an
//! `out × (K·in)` matrix whose column `k·in + i` weights input channel `i` at
//! lag `K-1-k`, so a convolution is one matrix product against the unfolded
//! input.

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};

use super::linalg::{affine, affine_backward, relu_backward_inplace, relu_inplace};
use crate::params::ParamSet;
use crate::real::Real;

/// Unfolds `x` (`W × in`) into `W × (K·in)` with zero left padding.
pub fn unfold<T: Real>(x: ArrayView2<'_, T>, kernel: usize) -> Array2<T> {
    let (w, cin) = x.dim();
    let mut cols = Array2::zeros((w, kernel * cin));
    for t in 0..w {
        for k in 0..kernel {
            let src = t + k;
            if src < kernel - 1 {
                continue;
            }
            let src = src - (kernel - 1);
            cols.slice_mut(s![t, k * cin..(k + 1) * cin])
                .assign(&x.row(src));
        }
    }
    cols
}

/// Adjoint of [`unfold`].
pub fn fold<T: Real>(dcols: ArrayView2<'_, T>, kernel: usize, cin: usize) -> Array2<T> {
    let w = dcols.nrows();
    let mut dx = Array2::zeros((w, cin));
    for t in 0..w {
        for k in 0..kernel {
            let src = t + k;
            if src < kernel - 1 {
                continue;
            }
            let src = src - (kernel - 1);
            let mut row = dx.row_mut(src);
            row += &dcols.slice(s![t, k * cin..(k + 1) * cin]);
        }
    }
    dx
}

/// Length-preserving causal convolution using `{prefix}.w` / `{prefix}.b`.
pub fn causal_conv<T: Real>(
    params: &ParamSet<T>,
    prefix: &str,
    x: ArrayView2<'_, T>,
    kernel: usize,
) -> (Array2<T>, Array2<T>) {
    let cols = unfold(x, kernel);
    let y = affine(
        cols.view(),
        params.mat(&format!("{prefix}.w")),
        Some(params.vector(&format!("{prefix}.b"))),
    );
    (y, cols)
}

/// Backward of [`causal_conv`] given the unfolded input it cached.
pub fn causal_conv_backward<T: Real>(
    params: &ParamSet<T>,
    grads: &mut ParamSet<T>,
    prefix: &str,
    cols: &Array2<T>,
    dy: ArrayView2<'_, T>,
    kernel: usize,
) -> Array2<T> {
    let wname = format!("{prefix}.w");
    let bname = format!("{prefix}.b");
    let w = params.mat(&wname);
    let cin = w.ncols() / kernel;
    let dcols = {
        let (gw, gb) = grads.weight_bias_mut(&wname, &bname);
        affine_backward(cols.view(), w, dy, gw, Some(gb))
    };
    fold(dcols.view(), kernel, cin)
}

/// Everything the block backward pass needs from its forward pass.
#[derive(Debug, Clone)]
pub struct CondConvCache<T> {
    kernel: usize,
    x: Array2<T>,
    cols1: Array2<T>,
    context: Option<ContextBranch<T>>,
    cols2: Array2<T>,
    pre_relu: Array2<T>,
    cols3: Array2<T>,
}

#[derive(Debug, Clone)]
struct ContextBranch<T> {
    input: Array2<T>,
    hidden_pre: Array2<T>,
    hidden: Array2<T>,
}

/// Context-conditioned residual convolution block.
///
/// `Y1 = conv1(X)`, `C' = mlp(C)`, `Z = conv3(relu(conv2([Y1 ‖ C'])))`, and the
/// output is `Z + skip(X)` where `skip` is identity when the KPI count equals
/// the channel count and a learned 1×1 map otherwise. Without context the
/// concatenation is dropped and the block is a plain residual convolution.
pub fn cond_conv_block<T: Real>(
    params: &ParamSet<T>,
    x: ArrayView2<'_, T>,
    context: Option<ArrayView2<'_, T>>,
    kernel: usize,
) -> (Array2<T>, CondConvCache<T>) {
    let (y1, cols1) = causal_conv(params, "conv1", x, kernel);
    let (fused_in, branch) = match context {
        Some(c) => {
            let hidden_pre = affine(
                c,
                params.mat("ctx.mlp1.w"),
                Some(params.vector("ctx.mlp1.b")),
            );
            let mut hidden = hidden_pre.clone();
            relu_inplace(&mut hidden);
            let projected = affine(
                hidden.view(),
                params.mat("ctx.mlp2.w"),
                Some(params.vector("ctx.mlp2.b")),
            );
            let cat = concatenate(Axis(1), &[y1.view(), projected.view()]).unwrap();
            (
                cat,
                Some(ContextBranch {
                    input: c.to_owned(),
                    hidden_pre,
                    hidden,
                }),
            )
        }
        None => (y1, None),
    };
    let (pre_relu, cols2) = causal_conv(params, "conv2", fused_in.view(), kernel);
    let mut act = pre_relu.clone();
    relu_inplace(&mut act);
    let (z, cols3) = causal_conv(params, "conv3", act.view(), kernel);
    let out = z + &skip(params, x);
    (
        out,
        CondConvCache {
            kernel,
            x: x.to_owned(),
            cols1,
            context: branch,
            cols2,
            pre_relu,
            cols3,
        },
    )
}

fn skip<T: Real>(params: &ParamSet<T>, x: ArrayView2<'_, T>) -> Array2<T> {
    if params.contains("skip.w") {
        affine(x, params.mat("skip.w"), None)
    } else {
        x.to_owned()
    }
}

/// Returns `(dX, dC)`; `dC` is present when the forward pass used context.
pub fn cond_conv_block_backward<T: Real>(
    params: &ParamSet<T>,
    grads: &mut ParamSet<T>,
    cache: &CondConvCache<T>,
    dy: ArrayView2<'_, T>,
) -> (Array2<T>, Option<Array2<T>>) {
    let k = cache.kernel;
    let mut dx = if params.contains("skip.w") {
        affine_backward(
            cache.x.view(),
            params.mat("skip.w"),
            dy,
            grads.mat_mut("skip.w"),
            None,
        )
    } else {
        dy.to_owned()
    };
    let mut dact = causal_conv_backward(params, grads, "conv3", &cache.cols3, dy, k);
    relu_backward_inplace(&cache.pre_relu, &mut dact);
    let dfused = causal_conv_backward(params, grads, "conv2", &cache.cols2, dact.view(), k);
    let ch = params.mat("conv1.w").nrows();
    let dy1 = dfused.slice(s![.., 0..ch]);
    let dctx = cache.context.as_ref().map(|branch| {
        let dproj = dfused.slice(s![.., ch..]);
        let mut dhidden = {
            let (gw, gb) = grads.weight_bias_mut("ctx.mlp2.w", "ctx.mlp2.b");
            affine_backward(branch.hidden.view(), params.mat("ctx.mlp2.w"), dproj, gw, Some(gb))
        };
        relu_backward_inplace(&branch.hidden_pre, &mut dhidden);
        let (gw, gb) = grads.weight_bias_mut("ctx.mlp1.w", "ctx.mlp1.b");
        affine_backward(
            branch.input.view(),
            params.mat("ctx.mlp1.w"),
            dhidden.view(),
            gw,
            Some(gb),
        )
    });
    dx += &causal_conv_backward(params, grads, "conv1", &cache.cols1, dy1, k);
    (dx, dctx)
}
