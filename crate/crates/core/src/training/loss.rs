use ndarray::{Array2, ArrayView2, Zip};

use crate::error::{Error, Result};
use crate::real::Real;

/// Joint objective value and its gradients with respect to both heads.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad<T> {
    pub loss: T,
    pub d_forecast: Array2<T>,
    pub d_reconstruction: Array2<T>,
}

fn check(name: &str, a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::shape(format!("{name} is {a:?}, target is {b:?}")));
    }
    Ok(())
}

/// Masked mean squared error and its gradient. Cells with `mask == false`
/// contribute nothing; with no observed cell the term is zero.
fn masked_mse<T: Real>(
    pred: ArrayView2<'_, T>,
    target: ArrayView2<'_, T>,
    mask: Option<ArrayView2<'_, bool>>,
) -> (T, Array2<T>) {
    let mut sum = T::zero();
    let mut n = 0usize;
    let mut grad = Array2::zeros(pred.dim());
    let observed = |idx: (usize, usize)| mask.is_none_or(|m| m[idx]);
    for ((idx, &p), &y) in pred.indexed_iter().zip(target.iter()) {
        if observed(idx) {
            let r = p - y;
            sum += r * r;
            grad[idx] = r;
            n += 1;
        }
    }
    if n == 0 {
        return (T::zero(), grad);
    }
    let inv = T::one() / T::from_usize(n).unwrap();
    let two_inv = inv + inv;
    grad.mapv_inplace(|r| r * two_inv);
    (sum * inv, grad)
}

/// `MSE(forecast, target) + MSE(reconstruction, input)`, each averaged over
/// its own unmasked cells. Masks are `true` on observed cells.
pub fn joint_loss_grad<T: Real>(
    forecast: ArrayView2<'_, T>,
    reconstruction: ArrayView2<'_, T>,
    target: ArrayView2<'_, T>,
    input: ArrayView2<'_, T>,
    target_observed: Option<ArrayView2<'_, bool>>,
    input_observed: Option<ArrayView2<'_, bool>>,
) -> Result<LossGrad<T>> {
    check("forecast", forecast.dim(), target.dim())?;
    check("reconstruction", reconstruction.dim(), input.dim())?;
    if let Some(m) = target_observed {
        check("forecast mask", m.dim(), target.dim())?;
    }
    if let Some(m) = input_observed {
        check("reconstruction mask", m.dim(), input.dim())?;
    }
    let (lf, d_forecast) = masked_mse(forecast, target, target_observed);
    let (lr, d_reconstruction) = masked_mse(reconstruction, input, input_observed);
    Ok(LossGrad {
        loss: lf + lr,
        d_forecast,
        d_reconstruction,
    })
}

pub fn joint_loss<T: Real>(
    forecast: ArrayView2<'_, T>,
    reconstruction: ArrayView2<'_, T>,
    target: ArrayView2<'_, T>,
    input: ArrayView2<'_, T>,
    target_observed: Option<ArrayView2<'_, bool>>,
    input_observed: Option<ArrayView2<'_, bool>>,
) -> Result<T> {
    check("forecast", forecast.dim(), target.dim())?;
    check("reconstruction", reconstruction.dim(), input.dim())?;
    let term = |p: ArrayView2<'_, T>, y: ArrayView2<'_, T>, m: Option<ArrayView2<'_, bool>>| {
        if let Some(m) = m {
            check("mask", m.dim(), y.dim())?;
        }
        let mut sum = T::zero();
        let mut n = 0usize;
        Zip::indexed(p).and(y).for_each(|idx, &p, &y| {
            if m.is_none_or(|m| m[idx]) {
                sum += (p - y) * (p - y);
                n += 1;
            }
        });
        Ok::<T, Error>(if n == 0 { T::zero() } else { sum / T::from_usize(n).unwrap() })
    };
    Ok(term(forecast, target, target_observed)? + term(reconstruction, input, input_observed)?)
}
