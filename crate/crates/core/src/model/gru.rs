//! Gated recurrent unit unrolled over a sequence.
//!
//! Gates are stacked `[reset, update, candidate]` along the `3·hidden` axis:
//!
//! ```text
//! r = σ(W_ir x + b_ir + W_hr h + b_hr)
//! z = σ(W_iz x + b_iz + W_hz h + b_hz)
//! n = tanh(W_in x + b_in + r ⊙ (W_hn h + b_hn))
//! h' = (1 - z) ⊙ n + z ⊙ h
//! ```
//!
//! A GRU without `{prefix}.wi` runs on zero inputs, which is how the
//! reconstruction decoder is driven.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::params::ParamSet;
use crate::real::{sigmoid, Real};

#[derive(Debug, Clone)]
pub struct GruCache<T> {
    inputs: Option<Array2<T>>,
    /// `(steps + 1) × hidden`; row 0 is the initial state.
    states: Array2<T>,
    reset: Array2<T>,
    update: Array2<T>,
    candidate: Array2<T>,
    hidden_n: Array2<T>,
}

impl<T: Real> GruCache<T> {
    pub fn states(&self) -> &Array2<T> {
        &self.states
    }

    /// Hidden states after each step (`steps × hidden`).
    pub fn outputs(&self) -> ArrayView2<'_, T> {
        self.states.slice(s![1.., ..])
    }

    pub fn last(&self) -> ArrayView1<'_, T> {
        self.states.row(self.states.nrows() - 1)
    }
}

/// Runs `steps` updates from `h0`. `inputs`, when given, is `steps × in`.
pub fn gru<T: Real>(
    params: &ParamSet<T>,
    prefix: &str,
    inputs: Option<ArrayView2<'_, T>>,
    steps: usize,
    h0: ArrayView1<'_, T>,
) -> GruCache<T> {
    let wh = params.mat(&format!("{prefix}.wh"));
    let bh = params.vector(&format!("{prefix}.bh"));
    let bi = params.vector(&format!("{prefix}.bi"));
    let hidden = wh.ncols();
    let gi_all = inputs.map(|x| {
        let wi = params.mat(&format!("{prefix}.wi"));
        x.dot(&wi.t()) + bi
    });

    let mut states = Array2::zeros((steps + 1, hidden));
    states.row_mut(0).assign(&h0);
    let mut reset = Array2::zeros((steps, hidden));
    let mut update = Array2::zeros((steps, hidden));
    let mut candidate = Array2::zeros((steps, hidden));
    let mut hidden_n = Array2::zeros((steps, hidden));

    for t in 0..steps {
        let h = states.row(t).to_owned();
        let gh = wh.dot(&h) + bh;
        let gi = match &gi_all {
            Some(g) => g.row(t),
            None => bi.view(),
        };
        let mut h_next = Array1::zeros(hidden);
        for k in 0..hidden {
            let r = sigmoid(gi[k] + gh[k]);
            let z = sigmoid(gi[hidden + k] + gh[hidden + k]);
            let hn = gh[2 * hidden + k];
            let n = (gi[2 * hidden + k] + r * hn).tanh();
            reset[[t, k]] = r;
            update[[t, k]] = z;
            candidate[[t, k]] = n;
            hidden_n[[t, k]] = hn;
            h_next[k] = (T::one() - z) * n + z * h[k];
        }
        states.row_mut(t + 1).assign(&h_next);
    }

    GruCache {
        inputs: inputs.map(|x| x.to_owned()),
        states,
        reset,
        update,
        candidate,
        hidden_n,
    }
}

/// Backpropagates `d_outputs` (`steps × hidden`, gradient on each emitted
/// state). Returns `(d_inputs, d_h0)`.
pub fn gru_backward<T: Real>(
    params: &ParamSet<T>,
    grads: &mut ParamSet<T>,
    prefix: &str,
    cache: &GruCache<T>,
    d_outputs: ArrayView2<'_, T>,
) -> (Option<Array2<T>>, Array1<T>) {
    let wh = params.mat(&format!("{prefix}.wh"));
    let hidden = wh.ncols();
    let steps = cache.reset.nrows();
    let mut d_gi = Array2::zeros((steps, 3 * hidden));
    let mut d_gh = Array2::zeros((steps, 3 * hidden));
    let mut carry = Array1::<T>::zeros(hidden);

    for t in (0..steps).rev() {
        let dh = &d_outputs.row(t) + &carry;
        let h_prev = cache.states.row(t);
        let mut next_carry = Array1::zeros(hidden);
        for k in 0..hidden {
            let r = cache.reset[[t, k]];
            let z = cache.update[[t, k]];
            let n = cache.candidate[[t, k]];
            let hn = cache.hidden_n[[t, k]];
            let dn = dh[k] * (T::one() - z);
            let dz = dh[k] * (h_prev[k] - n);
            next_carry[k] = dh[k] * z;
            let dn_pre = dn * (T::one() - n * n);
            let dr_pre = dn_pre * hn * r * (T::one() - r);
            let dz_pre = dz * z * (T::one() - z);
            d_gi[[t, k]] = dr_pre;
            d_gi[[t, hidden + k]] = dz_pre;
            d_gi[[t, 2 * hidden + k]] = dn_pre;
            d_gh[[t, k]] = dr_pre;
            d_gh[[t, hidden + k]] = dz_pre;
            d_gh[[t, 2 * hidden + k]] = dn_pre * r;
        }
        next_carry += &d_gh.row(t).dot(&wh);
        carry = next_carry;
    }

    let h_prev = cache.states.slice(s![..steps, ..]);
    {
        let mut g = grads.mat_mut(&format!("{prefix}.wh"));
        g += &d_gh.t().dot(&h_prev);
    }
    {
        let mut g = grads.vector_mut(&format!("{prefix}.bh"));
        g += &d_gh.sum_axis(Axis(0));
    }
    {
        let mut g = grads.vector_mut(&format!("{prefix}.bi"));
        g += &d_gi.sum_axis(Axis(0));
    }
    let d_inputs = cache.inputs.as_ref().map(|x| {
        let wi_name = format!("{prefix}.wi");
        {
            let mut g = grads.mat_mut(&wi_name);
            g += &d_gi.t().dot(x);
        }
        d_gi.dot(&params.mat(&wi_name))
    });
    (d_inputs, carry)
}
