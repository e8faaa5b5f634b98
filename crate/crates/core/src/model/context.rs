use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use crate::datastore::{ContextSchema, WindowContext};
use crate::error::{Error, Result};
use crate::params::ParamSet;
use crate::real::Real;

pub(crate) fn static_table(name: &str) -> String {
    format!("ctx.static.{name}")
}

pub(crate) fn dynamic_table(name: &str) -> String {
    format!("ctx.dynamic.{name}")
}

/// Builds the `W × d_c` per-timestep context matrix: static embeddings,
/// then dynamic embeddings, then the projected static reals. Static parts are
/// repeated on every row.
pub fn embed_context<T: Real>(
    params: &ParamSet<T>,
    schema: &ContextSchema,
    ctx: &WindowContext,
    window: usize,
) -> Result<Array2<T>> {
    check_indices(schema, ctx, window)?;
    let mut out = Array2::zeros((window, schema.width()));
    let mut col = 0;
    for (feat, &idx) in schema.static_cat.iter().zip(&ctx.static_cat) {
        let table = params.mat(&static_table(&feat.name));
        let row = table.row(idx);
        out.slice_mut(s![.., col..col + feat.embed_dim])
            .assign(&row.broadcast((window, feat.embed_dim)).unwrap());
        col += feat.embed_dim;
    }
    for (c, feat) in schema.dynamic_cat.iter().enumerate() {
        let table = params.mat(&dynamic_table(&feat.name));
        for t in 0..window {
            out.slice_mut(s![t, col..col + feat.embed_dim])
                .assign(&table.row(ctx.dynamic_cat[[t, c]]));
        }
        col += feat.embed_dim;
    }
    if !schema.static_real.is_empty() {
        let w = params.mat("ctx.real.w");
        let b = params.vector("ctx.real.b");
        let reals: Array1<T> = ctx.static_real.iter().map(|&v| T::of(v)).collect();
        let proj = w.dot(&reals) + b;
        out.slice_mut(s![.., col..col + schema.real_proj_dim])
            .assign(&proj.broadcast((window, schema.real_proj_dim)).unwrap());
    }
    Ok(out)
}

fn check_indices(schema: &ContextSchema, ctx: &WindowContext, window: usize) -> Result<()> {
    if ctx.static_cat.len() != schema.static_cat.len()
        || ctx.static_real.len() != schema.static_real.len()
        || ctx.dynamic_cat.ncols() != schema.dynamic_cat.len()
        || ctx.dynamic_cat.nrows() != window
    {
        return Err(Error::shape("window context does not match the context schema"));
    }
    for (feat, &idx) in schema.static_cat.iter().zip(&ctx.static_cat) {
        if idx >= feat.cardinality {
            return Err(Error::invalid(format!(
                "`{}` index {idx} out of range (cardinality {})",
                feat.name, feat.cardinality
            )));
        }
    }
    for (c, feat) in schema.dynamic_cat.iter().enumerate() {
        if let Some(idx) = ctx.dynamic_cat.column(c).iter().find(|&&i| i >= feat.cardinality) {
            return Err(Error::invalid(format!(
                "`{}` index {idx} out of range (cardinality {})",
                feat.name, feat.cardinality
            )));
        }
    }
    Ok(())
}

/// Scatters `d_context` (`W × d_c`) into embedding tables and the real projection.
pub fn embed_context_backward<T: Real>(
    grads: &mut ParamSet<T>,
    schema: &ContextSchema,
    ctx: &WindowContext,
    d_context: ArrayView2<'_, T>,
) {
    let window = d_context.nrows();
    let mut col = 0;
    for (feat, &idx) in schema.static_cat.iter().zip(&ctx.static_cat) {
        let summed = d_context
            .slice(s![.., col..col + feat.embed_dim])
            .sum_axis(Axis(0));
        let mut table = grads.mat_mut(&static_table(&feat.name));
        let mut row = table.row_mut(idx);
        row += &summed;
        col += feat.embed_dim;
    }
    for (c, feat) in schema.dynamic_cat.iter().enumerate() {
        let mut table = grads.mat_mut(&dynamic_table(&feat.name));
        for t in 0..window {
            let mut row = table.row_mut(ctx.dynamic_cat[[t, c]]);
            row += &d_context.slice(s![t, col..col + feat.embed_dim]);
        }
        col += feat.embed_dim;
    }
    if !schema.static_real.is_empty() {
        let dproj = d_context
            .slice(s![.., col..col + schema.real_proj_dim])
            .sum_axis(Axis(0));
        let reals: Array1<T> = ctx.static_real.iter().map(|&v| T::of(v)).collect();
        let (mut gw, mut gb) = grads.weight_bias_mut("ctx.real.w", "ctx.real.b");
        for (o, &d) in dproj.iter().enumerate() {
            for (i, &r) in reals.iter().enumerate() {
                gw[[o, i]] += d * r;
            }
        }
        gb += &dproj;
    }
}
