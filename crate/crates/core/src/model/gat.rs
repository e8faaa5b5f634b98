//! Single-head GATv2 attention over a complete graph with self-loops.
//!
//! For node features `u_i` the layer scores every ordered pair with
//! `e_ij = aᵀ·LeakyReLU(W_l·u_i + W_r·u_j)`, normalizes each row with a
//! softmax and emits `o_i = σ(Σ_j α_ij·W_r·u_j)`. The nonlinearity sits
//! between the projection and `a`, so the ranking of keys can change with
//! the query.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::linalg::{leaky, leaky_grad};
use crate::error::{Error, Result};
use crate::params::ParamSet;
use crate::real::{sigmoid, Real};

#[derive(Debug, Clone)]
pub struct GatCache<T> {
    input: Array2<T>,
    left: Array2<T>,
    right: Array2<T>,
    attention: Array2<T>,
    output: Array2<T>,
}

impl<T> GatCache<T> {
    /// Row-stochastic `n × n` attention matrix of the forward pass.
    pub fn attention(&self) -> &Array2<T> {
        &self.attention
    }
}

/// Forward pass over `u` (`n × D`) with `{prefix}.wl`, `{prefix}.wr`, `{prefix}.a`.
pub fn gatv2<T: Real>(
    params: &ParamSet<T>,
    prefix: &str,
    u: ArrayView2<'_, T>,
    slope: T,
) -> Result<(Array2<T>, GatCache<T>)> {
    let n = u.nrows();
    if n == 0 {
        return Err(Error::shape("attention over an empty node set"));
    }
    let wl = params.mat(&format!("{prefix}.wl"));
    let wr = params.mat(&format!("{prefix}.wr"));
    let a = params.vector(&format!("{prefix}.a"));
    let left = u.dot(&wl.t());
    let right = u.dot(&wr.t());

    let mut scores = Array2::zeros((n, n));
    for i in 0..n {
        let li = left.row(i);
        for j in 0..n {
            let rj = right.row(j);
            let mut e = T::zero();
            for d in 0..a.len() {
                e += a[d] * leaky(li[d] + rj[d], slope);
            }
            scores[[i, j]] = e;
        }
    }
    let attention = softmax_rows(scores);
    let output = attention.dot(&right).mapv(sigmoid);
    let cache = GatCache {
        input: u.to_owned(),
        left,
        right,
        attention,
        output: output.clone(),
    };
    Ok((output, cache))
}

fn softmax_rows<T: Real>(mut x: Array2<T>) -> Array2<T> {
    for mut row in x.axis_iter_mut(Axis(0)) {
        let max = row.fold(T::neg_infinity(), |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    x
}

/// Accumulates parameter gradients and returns `dL/du`.
pub fn gatv2_backward<T: Real>(
    params: &ParamSet<T>,
    grads: &mut ParamSet<T>,
    prefix: &str,
    cache: &GatCache<T>,
    dout: ArrayView2<'_, T>,
    slope: T,
) -> Array2<T> {
    let wl = params.mat(&format!("{prefix}.wl"));
    let wr = params.mat(&format!("{prefix}.wr"));
    let a = params.vector(&format!("{prefix}.a"));
    let n = cache.input.nrows();
    let dims = a.len();

    let dmix = &dout * &cache.output.mapv(|o| o * (T::one() - o));
    let dattn = dmix.dot(&cache.right.t());
    let mut dright = cache.attention.t().dot(&dmix);
    let mut dleft = Array2::zeros((n, dims));
    let mut da = Array1::<T>::zeros(dims);

    for i in 0..n {
        let alpha = cache.attention.row(i);
        let g = dattn.row(i);
        let inner = alpha.dot(&g);
        let li = cache.left.row(i);
        for j in 0..n {
            let de = alpha[j] * (g[j] - inner);
            if de == T::zero() {
                continue;
            }
            let rj = cache.right.row(j);
            for d in 0..dims {
                let s = li[d] + rj[d];
                da[d] += de * leaky(s, slope);
                let ds = de * a[d] * leaky_grad(s, slope);
                dleft[[i, d]] += ds;
                dright[[j, d]] += ds;
            }
        }
    }

    *grads.get_mut(&format!("{prefix}.a")).expect("attention vector grad") += &da;
    {
        let mut gwl = grads.mat_mut(&format!("{prefix}.wl"));
        gwl += &dleft.t().dot(&cache.input);
    }
    {
        let mut gwr = grads.mat_mut(&format!("{prefix}.wr"));
        gwr += &dright.t().dot(&cache.input);
    }
    dleft.dot(&wl) + dright.dot(&wr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::zeros;
    use ndarray::array;

    fn params(d: usize) -> ParamSet<f64> {
        let mut p = ParamSet::new();
        let mut wl = zeros::<f64>(&[d, d]);
        let mut wr = zeros::<f64>(&[d, d]);
        for (k, v) in wl.iter_mut().enumerate() {
            *v = ((k * 37 % 11) as f64 - 5.0) / 7.0;
        }
        for (k, v) in wr.iter_mut().enumerate() {
            *v = ((k * 13 % 7) as f64 - 3.0) / 5.0;
        }
        p.insert("g.wl", wl);
        p.insert("g.wr", wr);
        p.insert("g.a", ndarray::ArrayD::from_elem(ndarray::IxDyn(&[d]), 0.3));
        p
    }

    #[test]
    fn single_node_attends_to_itself() {
        let p = params(2);
        let u = array![[0.4, -1.2]];
        let (out, cache) = gatv2(&p, "g", u.view(), 0.2).unwrap();
        assert_eq!(cache.attention()[[0, 0]], 1.0);
        let expected = u.dot(&p.mat("g.wr").t()).mapv(sigmoid);
        assert_eq!(out, expected);
    }

    #[test]
    fn rows_are_simplices() {
        let p = params(3);
        let u = Array2::from_shape_fn((5, 3), |(i, j)| ((i * 3 + j) as f64).sin());
        let (_, cache) = gatv2(&p, "g", u.view(), 0.2).unwrap();
        for row in cache.attention().rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&a| a >= 0.0));
        }
    }

    #[test]
    fn empty_graph_is_an_error() {
        let p = params(2);
        assert!(gatv2(&p, "g", Array2::zeros((0, 2)).view(), 0.2).is_err());
    }
}
