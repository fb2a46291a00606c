//! Reverse-mode automatic differentiation over dense tensors.
//!
//! A forward pass is written against a [`Tape`]: parameters enter as named
//! leaves, every [`Primitive`] application is appended in order, and
//! [`Tape::backward`] sweeps the list once in reverse to produce a
//! [`GradientMap`]. Only first-order gradients are supported.

mod fd;
mod params;
mod primitive;
mod tape;
mod tensor;

pub use fd::{finite_difference_gradient, finite_difference_gradient_for, max_relative_error};
pub use params::{sgd_update, GradientMap, ParameterSet};
pub use primitive::{backward as backward_rule, forward as apply, Primitive, PrimitiveKind};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
