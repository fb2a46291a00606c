//! Central finite differences, used as the independent oracle for backward.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::params::{GradientMap, ParameterSet};
use super::tensor::Tensor;

/// Estimates `dL/dp` for every scalar of every parameter in `params` with
/// `(L(p + h) - L(p - h)) / 2h`.
pub fn finite_difference_gradient<T, F>(
    loss_fn: F,
    params: &ParameterSet<T>,
    h: T,
) -> Result<GradientMap<T>>
where
    T: Scalar,
    F: Fn(&ParameterSet<T>) -> Result<T>,
{
    let names: Vec<String> = params.names().map(str::to_string).collect();
    finite_difference_gradient_for(loss_fn, params, h, &names)
}

/// Same as [`finite_difference_gradient`], restricted to `names`.
pub fn finite_difference_gradient_for<T, F>(
    loss_fn: F,
    params: &ParameterSet<T>,
    h: T,
    names: &[String],
) -> Result<GradientMap<T>>
where
    T: Scalar,
    F: Fn(&ParameterSet<T>) -> Result<T>,
{
    if !(h > T::zero()) {
        return Err(Error::invalid("finite_difference", format!("step {h}")));
    }
    let two_h = h + h;
    let mut grads = GradientMap::new();
    for name in names {
        let base = params.require(name)?;
        let mut data = base.to_vec();
        let mut out = Vec::with_capacity(data.len());
        let mut probe = params.clone();
        for i in 0..data.len() {
            let orig = data[i];
            data[i] = orig + h;
            probe.replace(name, Tensor::from_parts(base.shape().to_vec(), data.clone()))?;
            let up = loss_fn(&probe)?;
            data[i] = orig - h;
            probe.replace(name, Tensor::from_parts(base.shape().to_vec(), data.clone()))?;
            let down = loss_fn(&probe)?;
            data[i] = orig;
            out.push((up - down) / two_h);
        }
        grads.insert(name.clone(), Tensor::from_parts(base.shape().to_vec(), out));
    }
    Ok(grads)
}

/// Largest elementwise `|a - b| / max(|a|, |b|, 1)` across two maps.
///
/// The unit floor turns the measure into an absolute error for gradients
/// below one in magnitude, where a central difference cannot resolve a
/// purely relative error. Keys missing from either side count as zeros.
pub fn max_relative_error<T: Scalar>(a: &GradientMap<T>, b: &GradientMap<T>) -> f64 {
    let mut worst = 0.0f64;
    let mut visit = |x: &Tensor<T>, y: Option<&Tensor<T>>| {
        for (i, &xv) in x.data().iter().enumerate() {
            let xv = xv.as_f64();
            let yv = y.map_or(0.0, |t| t.data()[i].as_f64());
            let denom = xv.abs().max(yv.abs()).max(1.0);
            worst = worst.max((xv - yv).abs() / denom);
        }
    };
    for (name, x) in a.iter() {
        visit(x, b.get(name));
    }
    for (name, y) in b.iter() {
        if a.get(name).is_none() {
            visit(y, None);
        }
    }
    worst
}
