use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};

use crate::real::Real;

/// `x · wᵀ + b` for row-major batches: `x` is `n×in`, `w` is `out×in`.
pub(crate) fn affine<T: Real>(
    x: ArrayView2<'_, T>,
    w: ArrayView2<'_, T>,
    b: Option<ArrayView1<'_, T>>,
) -> Array2<T> {
    let mut y = x.dot(&w.t());
    if let Some(b) = b {
        y += &b;
    }
    y
}

/// Accumulates parameter gradients of [`affine`] and returns `dL/dx`.
pub(crate) fn affine_backward<T: Real>(
    x: ArrayView2<'_, T>,
    w: ArrayView2<'_, T>,
    dy: ArrayView2<'_, T>,
    dw: ArrayViewMut2<'_, T>,
    db: Option<ArrayViewMut1<'_, T>>,
) -> Array2<T> {
    let mut dw = dw;
    general_mat_mul(T::one(), &dy.t(), &x, T::one(), &mut dw);
    if let Some(mut db) = db {
        db += &dy.sum_axis(Axis(0));
    }
    dy.dot(&w)
}

pub(crate) fn leaky<T: Real>(x: T, slope: T) -> T {
    if x > T::zero() {
        x
    } else {
        x * slope
    }
}

pub(crate) fn leaky_grad<T: Real>(x: T, slope: T) -> T {
    if x > T::zero() {
        T::one()
    } else {
        slope
    }
}

pub(crate) fn relu_inplace<T: Real>(x: &mut Array2<T>) {
    x.mapv_inplace(|v| if v > T::zero() { v } else { T::zero() });
}

/// Zeroes `grad` where the ReLU input was not positive.
pub(crate) fn relu_backward_inplace<T: Real>(pre: &Array2<T>, grad: &mut Array2<T>) {
    ndarray::Zip::from(grad).and(pre).for_each(|g, &p| {
        if p <= T::zero() {
            *g = T::zero();
        }
    });
}
