use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::params::GradientMap;
use super::primitive::{self, Primitive};
use super::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Origin {
    Constant,
    Param(String),
    Op { prim: Primitive, operands: Vec<Var> },
}

#[derive(Clone, Debug)]
struct Node<T> {
    value: Tensor<T>,
    origin: Origin,
}

/// Wengert list for one forward evaluation.
///
/// Nodes are appended in evaluation order, so every operand precedes its
/// result. A tape belongs to a single evaluation and is never shared.
#[derive(Clone, Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    params: BTreeMap<String, Var>,
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: BTreeMap::new(),
        }
    }

    fn push(&mut self, value: Tensor<T>, origin: Origin) -> Var {
        self.nodes.push(Node { value, origin });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that does not require gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Origin::Constant)
    }

    /// A named leaf that requires gradient.
    pub fn param(&mut self, name: &str, value: Tensor<T>) -> Result<Var> {
        if self.params.contains_key(name) {
            return Err(Error::DuplicateParameter(name.to_string()));
        }
        let v = self.push(value, Origin::Param(name.to_string()));
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        !matches!(self.nodes[v.0].origin, Origin::Constant)
    }

    pub fn param_name(&self, v: Var) -> Option<&str> {
        match &self.nodes[v.0].origin {
            Origin::Param(name) => Some(name),
            _ => None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Applies a primitive. The application is recorded for backward only
    /// when some operand requires gradient; otherwise the result is a constant.
    pub fn apply(&mut self, prim: Primitive, operands: &[Var]) -> Result<Var> {
        let values: Vec<&Tensor<T>> = operands.iter().map(|v| &self.nodes[v.0].value).collect();
        let out = primitive::forward(&prim, &values)?;
        let origin = if operands.iter().any(|&v| self.requires_grad(v)) {
            Origin::Op {
                prim,
                operands: operands.to_vec(),
            }
        } else {
            Origin::Constant
        };
        Ok(self.push(out, origin))
    }

    /// Reverse sweep from a scalar `loss`.
    ///
    /// Every parameter leaf on the tape gets an entry; leaves the loss does
    /// not depend on get zeros. The tape itself is left untouched.
    pub fn backward(&self, loss: Var) -> Result<GradientMap<T>> {
        let loss_value = &self.nodes[loss.0].value;
        if !loss_value.is_scalar() {
            return Err(Error::NonScalarLoss(loss_value.shape().to_vec()));
        }
        let mut adjoint: Vec<Option<Vec<T>>> = vec![None; loss.0 + 1];
        adjoint[loss.0] = Some(vec![T::one()]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = adjoint[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.origin {
                Origin::Op { prim, operands } => {
                    let values: Vec<&Tensor<T>> =
                        operands.iter().map(|v| &self.nodes[v.0].value).collect();
                    let needs: Vec<bool> =
                        operands.iter().map(|&v| self.requires_grad(v)).collect();
                    let grad = Tensor::from_parts(node.value.shape().to_vec(), g);
                    let parts = primitive::backward(prim, &values, &node.value, &grad, &needs)?;
                    for (operand, part) in operands.iter().zip(parts) {
                        let Some(part) = part else { continue };
                        match &mut adjoint[operand.0] {
                            Some(acc) => {
                                for (a, &p) in acc.iter_mut().zip(part.data()) {
                                    *a += p;
                                }
                            }
                            slot @ None => *slot = Some(part.to_vec()),
                        }
                    }
                }
                Origin::Param(_) => adjoint[idx] = Some(g),
                Origin::Constant => {}
            }
        }
        let mut grads = GradientMap::new();
        for (name, &v) in &self.params {
            let shape = self.nodes[v.0].value.shape().to_vec();
            let g = match adjoint.get_mut(v.0).and_then(Option::take) {
                Some(data) => Tensor::from_parts(shape, data),
                None => Tensor::zeros(&shape),
            };
            grads.insert(name.clone(), g);
        }
        Ok(grads)
    }

    /// Re-evaluates every recorded application from its operands and checks
    /// the result is bitwise identical to what was stored.
    pub fn replay_matches(&self) -> Result<bool> {
        for (idx, node) in self.nodes.iter().enumerate() {
            if let Origin::Op { prim, operands } = &node.origin {
                if operands.iter().any(|v| v.0 >= idx) {
                    return Ok(false);
                }
                let values: Vec<&Tensor<T>> =
                    operands.iter().map(|v| &self.nodes[v.0].value).collect();
                if !primitive::forward(prim, &values)?.bitwise_eq(&node.value) {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_of_sum_of_squares() {
        let mut tape = Tape::<f64>::new();
        let x = tape.param("x", Tensor::vector(vec![1.0, -2.0])).unwrap();
        let sq = tape.apply(Primitive::Multiply, &[x, x]).unwrap();
        let loss = tape.apply(Primitive::ReduceSum { axis: None }, &[sq]).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get("x").unwrap().data(), &[2.0, -4.0]);
    }

    #[test]
    fn unused_parameter_gets_zero_gradient() {
        let mut tape = Tape::<f64>::new();
        let x = tape.param("x", Tensor::vector(vec![3.0])).unwrap();
        tape.param("p", Tensor::vector(vec![1.0, 2.0])).unwrap();
        let loss = tape.apply(Primitive::ReduceSum { axis: None }, &[x]).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get("p").unwrap().data(), &[0.0, 0.0]);
        assert_eq!(g.len(), 2);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::<f64>::new();
        let x = tape.param("x", Tensor::vector(vec![1.0, 2.0])).unwrap();
        let y = tape.apply(Primitive::Tanh, &[x]).unwrap();
        assert!(matches!(tape.backward(y), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn constants_are_not_recorded() {
        let mut tape = Tape::<f64>::new();
        let c = tape.constant(Tensor::vector(vec![1.0]));
        let y = tape.apply(Primitive::Tanh, &[c]).unwrap();
        assert!(!tape.requires_grad(y));
        let x = tape.param("x", Tensor::vector(vec![1.0])).unwrap();
        let z = tape.apply(Primitive::Add, &[x, c]).unwrap();
        assert!(tape.requires_grad(z));
    }

    #[test]
    fn backward_twice_is_bitwise_identical_and_replay_holds() {
        let mut tape = Tape::<f64>::new();
        let w = tape
            .param("w", Tensor::matrix(2, 2, vec![0.3, -0.1, 0.7, 0.2]).unwrap())
            .unwrap();
        let x = tape.constant(Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap());
        let h = tape.apply(Primitive::MatMul, &[x, w]).unwrap();
        let h = tape.apply(Primitive::Tanh, &[h]).unwrap();
        let loss = tape
            .apply(
                Primitive::SoftmaxCrossEntropy {
                    labels: vec![1],
                    mask: vec![true],
                },
                &[h],
            )
            .unwrap();
        let a = tape.backward(loss).unwrap();
        let b = tape.backward(loss).unwrap();
        assert!(a.get("w").unwrap().bitwise_eq(b.get("w").unwrap()));
        assert!(tape.replay_matches().unwrap());
    }

    #[test]
    fn duplicate_param_name_rejected() {
        let mut tape = Tape::<f64>::new();
        tape.param("a", Tensor::scalar(1.0)).unwrap();
        assert!(tape.param("a", Tensor::scalar(2.0)).is_err());
    }
}
