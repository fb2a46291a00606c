use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::tensor::Tensor;

/// Named model parameters, iterated in name order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterSet<T> {
    tensors: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> ParameterSet<T> {
    pub fn new() -> Self {
        Self {
            tensors: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<()> {
        let name = name.into();
        if self.tensors.contains_key(&name) {
            return Err(Error::DuplicateParameter(name));
        }
        self.tensors.insert(name, value);
        Ok(())
    }

    /// Replaces an existing tensor; the shape must not change.
    pub fn replace(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        let slot = self
            .tensors
            .get_mut(name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))?;
        if slot.shape() != value.shape() {
            return Err(Error::ShapeMismatch {
                op: "replace",
                shapes: vec![slot.shape().to_vec(), value.shape().to_vec()],
            });
        }
        *slot = value;
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.get(name)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor<T>> {
        self.get(name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalars across all tensors.
    pub fn scalar_count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn bitwise_eq(&self, other: &Self) -> bool {
        self.tensors.len() == other.tensors.len()
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|((ka, a), (kb, b))| ka == kb && a.bitwise_eq(b))
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(Tensor::all_finite)
    }
}

/// Gradient of a scalar loss, keyed by parameter name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradientMap<T> {
    grads: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> GradientMap<T> {
    pub fn new() -> Self {
        Self {
            grads: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, grad: Tensor<T>) {
        self.grads.insert(name.into(), grad);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.grads.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.grads.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.grads.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    /// Keeps only the entries whose name satisfies `keep`.
    pub fn retain(mut self, keep: impl Fn(&str) -> bool) -> Self {
        self.grads.retain(|k, _| keep(k));
        self
    }

    pub fn bitwise_eq(&self, other: &Self) -> bool {
        self.grads.len() == other.grads.len()
            && self
                .grads
                .iter()
                .zip(&other.grads)
                .all(|((ka, a), (kb, b))| ka == kb && a.bitwise_eq(b))
    }
}

/// One plain gradient step, `p <- p - lr * g`, for every key in `grads`.
///
/// Returns a new set; `params` is left as it was.
pub fn sgd_update<T: Scalar>(
    params: &ParameterSet<T>,
    grads: &GradientMap<T>,
    lr: T,
) -> Result<ParameterSet<T>> {
    if !lr.is_finite() {
        return Err(Error::invalid("sgd_update", format!("learning rate {lr}")));
    }
    let mut next = params.clone();
    for (name, g) in grads.iter() {
        let p = params.require(name)?;
        if p.shape() != g.shape() {
            return Err(Error::ShapeMismatch {
                op: "sgd_update",
                shapes: vec![p.shape().to_vec(), g.shape().to_vec()],
            });
        }
        let data = p
            .data()
            .iter()
            .zip(g.data())
            .map(|(&pv, &gv)| pv - lr * gv)
            .collect();
        next.replace(name, Tensor::from_parts(p.shape().to_vec(), data))?;
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(name: &str, data: Vec<f64>) -> ParameterSet<f64> {
        let mut p = ParameterSet::new();
        p.insert(name, Tensor::vector(data)).unwrap();
        p
    }

    fn grad(name: &str, data: Vec<f64>) -> GradientMap<f64> {
        let mut g = GradientMap::new();
        g.insert(name, Tensor::vector(data));
        g
    }

    #[test]
    fn one_step_arithmetic() {
        let p = single("w", vec![1.0, -2.0]);
        let next = sgd_update(&p, &grad("w", vec![1.0, 1.0]), 0.1).unwrap();
        assert_eq!(next.get("w").unwrap().data(), &[0.9, -2.1]);
        assert_eq!(p.get("w").unwrap().data(), &[1.0, -2.0]);
    }

    #[test]
    fn zero_rate_is_identity() {
        let p = single("w", vec![0.25, -3.5]);
        let next = sgd_update(&p, &grad("w", vec![7.0, -1.0]), 0.0).unwrap();
        assert!(next.bitwise_eq(&p));
    }

    #[test]
    fn two_steps_on_half_square() {
        // L = theta^2 / 2, so the gradient is theta itself.
        let mut p = single("t", vec![1.0]);
        for _ in 0..2 {
            let g = grad("t", p.get("t").unwrap().to_vec());
            p = sgd_update(&p, &g, 0.1).unwrap();
        }
        assert!((p.get("t").unwrap().data()[0] - 0.81).abs() < 1e-15);
    }

    #[test]
    fn rejects_shape_mismatch_and_unknown_keys() {
        let p = single("w", vec![1.0, 2.0]);
        assert!(sgd_update(&p, &grad("w", vec![1.0]), 0.1).is_err());
        assert!(sgd_update(&p, &grad("v", vec![1.0, 1.0]), 0.1).is_err());
        assert!(sgd_update(&p, &grad("w", vec![1.0, 1.0]), f64::NAN).is_err());
    }
}
