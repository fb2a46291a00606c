use meta_pretrain::autodiff::{
    apply, finite_difference_gradient, max_relative_error, sgd_update, GradientMap, Primitive,
};
use meta_pretrain::{ParameterSet, Tape, Tensor};
use proptest::prelude::*;

fn tensor(shape: &[usize], data: Vec<f64>) -> Tensor {
    Tensor::new(shape.to_vec(), data).unwrap()
}

fn values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, n)
}

/// `mean(tanh(xW) * xW) + CE(xW)`: one intermediate feeds three consumers.
fn composite(p: &ParameterSet, tape: &mut Tape) -> meta_pretrain::Result<meta_pretrain::autodiff::Var> {
    let x = tape.param("x", p.require("x")?.clone())?;
    let w = tape.param("w", p.require("w")?.clone())?;
    let xw = tape.apply(Primitive::MatMul, &[x, w])?;
    let t = tape.apply(Primitive::Tanh, &[xw])?;
    let prod = tape.apply(Primitive::Multiply, &[t, xw])?;
    let m = tape.apply(Primitive::ReduceMean { axis: None }, &[prod])?;
    let ce = tape.apply(
        Primitive::SoftmaxCrossEntropy {
            labels: vec![0, 2, 1],
            mask: vec![true, true, true],
        },
        &[xw],
    )?;
    tape.apply(Primitive::Add, &[m, ce])
}

fn composite_value(p: &ParameterSet) -> meta_pretrain::Result<f64> {
    let mut tape = Tape::new();
    let l = composite(p, &mut tape)?;
    tape.value(l).item()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn composite_graph_matches_finite_differences(x in values(6), w in values(6)) {
        let mut p = ParameterSet::new();
        p.insert("x", tensor(&[3, 2], x)).unwrap();
        p.insert("w", tensor(&[2, 3], w)).unwrap();
        let mut tape = Tape::new();
        let l = composite(&p, &mut tape).unwrap();
        let analytic = tape.backward(l).unwrap();
        let numeric = finite_difference_gradient(composite_value, &p, 1e-5).unwrap();
        prop_assert!(max_relative_error(&analytic, &numeric) < 1e-6);
    }

    #[test]
    fn sum_of_squares_gradient_is_twice_input(x in values(5)) {
        let mut tape = Tape::new();
        let v = tape.param("x", Tensor::vector(x.clone())).unwrap();
        let sq = tape.apply(Primitive::Multiply, &[v, v]).unwrap();
        let l = tape.apply(Primitive::ReduceSum { axis: None }, &[sq]).unwrap();
        let g = tape.backward(l).unwrap();
        let expect: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        prop_assert_eq!(g.get("x").unwrap().data(), &expect[..]);
    }

    #[test]
    fn apply_is_pure(a in values(6), b in values(6)) {
        let a = tensor(&[2, 3], a);
        let b = tensor(&[3, 2], b);
        let one = apply(&Primitive::MatMul, &[&a, &b]).unwrap();
        let two = apply(&Primitive::MatMul, &[&a, &b]).unwrap();
        prop_assert!(one.bitwise_eq(&two));
    }

    #[test]
    fn sgd_update_leaves_input_untouched(p in values(4), g in values(4), lr in -1.0f64..1.0) {
        let mut params = ParameterSet::new();
        params.insert("p", Tensor::vector(p)).unwrap();
        let before = params.clone();
        let mut grads = GradientMap::new();
        grads.insert("p", Tensor::vector(g.clone()));
        let next = sgd_update(&params, &grads, lr).unwrap();
        prop_assert!(params.bitwise_eq(&before));
        for ((&old, &new), &gv) in before.get("p").unwrap().data().iter()
            .zip(next.get("p").unwrap().data()).zip(&g) {
            prop_assert_eq!(new, old - lr * gv);
        }
    }

    #[test]
    fn backward_twice_is_bitwise_identical(x in values(6), w in values(6)) {
        let mut p = ParameterSet::new();
        p.insert("x", tensor(&[3, 2], x)).unwrap();
        p.insert("w", tensor(&[2, 3], w)).unwrap();
        let run = || {
            let mut tape = Tape::new();
            let l = composite(&p, &mut tape).unwrap();
            tape.backward(l).unwrap()
        };
        prop_assert!(run().bitwise_eq(&run()));
    }
}

#[test]
fn documented_forward_values() {
    let m = tensor(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]);
    let id = tensor(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]);
    assert!(apply(&Primitive::MatMul, &[&m, &id]).unwrap().bitwise_eq(&m));
    let sum = apply(&Primitive::Add, &[&Tensor::vector(vec![1.0, 2.0]), &Tensor::vector(vec![3.0, 4.0])]).unwrap();
    assert_eq!(sum.data(), &[4.0, 6.0]);
    let ce = apply(
        &Primitive::SoftmaxCrossEntropy { labels: vec![0], mask: vec![true] },
        &[&tensor(&[1, 2], vec![0.0, 0.0])],
    )
    .unwrap();
    assert!((ce.item().unwrap() - 0.693147).abs() < 1e-6);
}

#[test]
fn half_square_descent() {
    let mut p = ParameterSet::new();
    p.insert("t", Tensor::scalar(1.0)).unwrap();
    for _ in 0..2 {
        let mut tape = Tape::new();
        let t = tape.param("t", p.require("t").unwrap().clone()).unwrap();
        let sq = tape.apply(Primitive::Multiply, &[t, t]).unwrap();
        let half = tape.constant(Tensor::scalar(0.5));
        let l = tape.apply(Primitive::Multiply, &[sq, half]).unwrap();
        p = sgd_update(&p, &tape.backward(l).unwrap(), 0.1).unwrap();
    }
    assert!((p.require("t").unwrap().item().unwrap() - 0.81).abs() < 1e-15);
}

#[test]
fn single_precision_gradients_agree_with_double() {
    let mut tape64 = meta_pretrain::autodiff::Tape::<f64>::new();
    let mut tape32 = meta_pretrain::autodiff::Tape::<f32>::new();
    let data = [0.3, -1.2, 0.7, 0.1];
    let x64 = tape64.param("x", Tensor::vector(data.to_vec())).unwrap();
    let x32 = tape32
        .param("x", meta_pretrain::autodiff::Tensor::vector(data.iter().map(|&v| v as f32).collect()))
        .unwrap();
    let t64 = tape64.apply(Primitive::Tanh, &[x64]).unwrap();
    let t32 = tape32.apply(Primitive::Tanh, &[x32]).unwrap();
    let l64 = tape64.apply(Primitive::ReduceSum { axis: None }, &[t64]).unwrap();
    let l32 = tape32.apply(Primitive::ReduceSum { axis: None }, &[t32]).unwrap();
    let g64 = tape64.backward(l64).unwrap();
    let g32 = tape32.backward(l32).unwrap();
    for (a, b) in g64.get("x").unwrap().data().iter().zip(g32.get("x").unwrap().data()) {
        assert!((a - *b as f64).abs() < 1e-6);
    }
}
