//! The closed set of differentiable primitives.
//!
//! Every primitive has a pure forward rule and a matching reverse rule. The
//! tape only sequences them; all numerics live here.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::tensor::Tensor;

/// Names of the primitives, without their static arguments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PrimitiveKind {
    MatMul,
    Add,
    Multiply,
    Tanh,
    Relu,
    EmbeddingLookup,
    ReduceMean,
    ReduceSum,
    SoftmaxCrossEntropy,
    Concat,
    Slice,
    Reshape,
    Transpose,
    Softmax,
}

impl PrimitiveKind {
    pub const ALL: [PrimitiveKind; 14] = [
        PrimitiveKind::MatMul,
        PrimitiveKind::Add,
        PrimitiveKind::Multiply,
        PrimitiveKind::Tanh,
        PrimitiveKind::Relu,
        PrimitiveKind::EmbeddingLookup,
        PrimitiveKind::ReduceMean,
        PrimitiveKind::ReduceSum,
        PrimitiveKind::SoftmaxCrossEntropy,
        PrimitiveKind::Concat,
        PrimitiveKind::Slice,
        PrimitiveKind::Reshape,
        PrimitiveKind::Transpose,
        PrimitiveKind::Softmax,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PrimitiveKind::MatMul => "matmul",
            PrimitiveKind::Add => "add",
            PrimitiveKind::Multiply => "multiply",
            PrimitiveKind::Tanh => "tanh",
            PrimitiveKind::Relu => "relu",
            PrimitiveKind::EmbeddingLookup => "embedding_lookup",
            PrimitiveKind::ReduceMean => "reduce_mean",
            PrimitiveKind::ReduceSum => "reduce_sum",
            PrimitiveKind::SoftmaxCrossEntropy => "softmax_cross_entropy",
            PrimitiveKind::Concat => "concat",
            PrimitiveKind::Slice => "slice",
            PrimitiveKind::Reshape => "reshape",
            PrimitiveKind::Transpose => "transpose",
            PrimitiveKind::Softmax => "softmax",
        }
    }
}

impl fmt::Display for PrimitiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PrimitiveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PrimitiveKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownPrimitive(s.to_string()))
    }
}

/// A primitive application together with its non-differentiable arguments.
#[derive(Clone, Debug, PartialEq)]
pub enum Primitive {
    /// `[.., k] x [k, m] -> [.., m]`, or batched `[b, n, k] x [b, k, m]`.
    MatMul,
    /// Elementwise; the right operand may broadcast over leading axes.
    Add,
    /// Elementwise; the right operand may broadcast over leading axes.
    Multiply,
    Tanh,
    Relu,
    /// Gathers rows of a `[rows, width]` table.
    EmbeddingLookup { indices: Vec<usize> },
    /// `None` reduces everything to a scalar.
    ReduceMean { axis: Option<usize> },
    ReduceSum { axis: Option<usize> },
    /// Mean negative log-likelihood over rows of `[n, classes]` logits whose
    /// mask entry is set.
    SoftmaxCrossEntropy { labels: Vec<usize>, mask: Vec<bool> },
    Concat { axis: usize },
    Slice { axis: usize, start: usize, end: usize },
    Reshape { shape: Vec<usize> },
    /// Swaps the last two axes.
    Transpose,
    /// Along the last axis.
    Softmax,
}

impl Primitive {
    pub fn kind(&self) -> PrimitiveKind {
        match self {
            Primitive::MatMul => PrimitiveKind::MatMul,
            Primitive::Add => PrimitiveKind::Add,
            Primitive::Multiply => PrimitiveKind::Multiply,
            Primitive::Tanh => PrimitiveKind::Tanh,
            Primitive::Relu => PrimitiveKind::Relu,
            Primitive::EmbeddingLookup { .. } => PrimitiveKind::EmbeddingLookup,
            Primitive::ReduceMean { .. } => PrimitiveKind::ReduceMean,
            Primitive::ReduceSum { .. } => PrimitiveKind::ReduceSum,
            Primitive::SoftmaxCrossEntropy { .. } => PrimitiveKind::SoftmaxCrossEntropy,
            Primitive::Concat { .. } => PrimitiveKind::Concat,
            Primitive::Slice { .. } => PrimitiveKind::Slice,
            Primitive::Reshape { .. } => PrimitiveKind::Reshape,
            Primitive::Transpose => PrimitiveKind::Transpose,
            Primitive::Softmax => PrimitiveKind::Softmax,
        }
    }

    fn name(&self) -> &'static str {
        self.kind().name()
    }

    fn arity(&self) -> Option<usize> {
        match self {
            Primitive::MatMul | Primitive::Add | Primitive::Multiply => Some(2),
            Primitive::Concat { .. } => None,
            _ => Some(1),
        }
    }
}

/// Forward rule. Pure: identical operands give bitwise-identical output.
pub fn forward<T: Scalar>(prim: &Primitive, operands: &[&Tensor<T>]) -> Result<Tensor<T>> {
    check_arity(prim, operands)?;
    let out = match prim {
        Primitive::MatMul => matmul(operands[0], operands[1])?,
        Primitive::Add => broadcast_binary(prim.name(), operands[0], operands[1], |a, b| a + b)?,
        Primitive::Multiply => {
            broadcast_binary(prim.name(), operands[0], operands[1], |a, b| a * b)?
        }
        Primitive::Tanh => operands[0].map(|x| x.tanh()),
        Primitive::Relu => operands[0].map(|x| if x > T::zero() { x } else { T::zero() }),
        Primitive::EmbeddingLookup { indices } => embedding_lookup(operands[0], indices)?,
        Primitive::ReduceMean { axis } => reduce(prim.name(), operands[0], *axis, true)?,
        Primitive::ReduceSum { axis } => reduce(prim.name(), operands[0], *axis, false)?,
        Primitive::SoftmaxCrossEntropy { labels, mask } => {
            softmax_cross_entropy(operands[0], labels, mask)?
        }
        Primitive::Concat { axis } => concat(operands, *axis)?,
        Primitive::Slice { axis, start, end } => slice(operands[0], *axis, *start, *end)?,
        Primitive::Reshape { shape } => {
            let x = operands[0];
            if shape.iter().product::<usize>() != x.len() {
                return Err(Error::ShapeMismatch {
                    op: prim.name(),
                    shapes: vec![x.shape().to_vec(), shape.clone()],
                });
            }
            x.with_shape(shape.clone())
        }
        Primitive::Transpose => transpose(operands[0])?,
        Primitive::Softmax => softmax(operands[0])?,
    };
    if cfg!(debug_assertions) && !out.all_finite() {
        return Err(Error::NonFinite(prim.name()));
    }
    Ok(out)
}

/// Reverse rule: given the upstream gradient of `output`, returns the
/// gradient for each operand whose `needs` flag is set.
pub fn backward<T: Scalar>(
    prim: &Primitive,
    operands: &[&Tensor<T>],
    output: &Tensor<T>,
    grad: &Tensor<T>,
    needs: &[bool],
) -> Result<Vec<Option<Tensor<T>>>> {
    debug_assert_eq!(operands.len(), needs.len());
    debug_assert_eq!(output.shape(), grad.shape());
    let g = grad.data();
    let mut out: Vec<Option<Tensor<T>>> = vec![None; operands.len()];
    match prim {
        Primitive::MatMul => {
            let (a, b) = (operands[0], operands[1]);
            let (da, db) = matmul_backward(a, b, grad, needs[0], needs[1]);
            out[0] = da;
            out[1] = db;
        }
        Primitive::Add => {
            if needs[0] {
                out[0] = Some(grad.clone());
            }
            if needs[1] {
                out[1] = Some(sum_to_suffix(grad, operands[1].shape()));
            }
        }
        Primitive::Multiply => {
            let (a, b) = (operands[0], operands[1]);
            let n = b.len();
            if needs[0] {
                let data = g
                    .iter()
                    .enumerate()
                    .map(|(i, &gi)| gi * b.data()[i % n])
                    .collect();
                out[0] = Some(Tensor::from_parts(a.shape().to_vec(), data));
            }
            if needs[1] {
                let mut acc = vec![T::zero(); n];
                for (i, (&gi, &ai)) in g.iter().zip(a.data()).enumerate() {
                    acc[i % n] += gi * ai;
                }
                out[1] = Some(Tensor::from_parts(b.shape().to_vec(), acc));
            }
        }
        Primitive::Tanh => {
            let data = g
                .iter()
                .zip(output.data())
                .map(|(&gi, &y)| gi * (T::one() - y * y))
                .collect();
            out[0] = Some(Tensor::from_parts(output.shape().to_vec(), data));
        }
        Primitive::Relu => {
            let data = g
                .iter()
                .zip(operands[0].data())
                .map(|(&gi, &x)| if x > T::zero() { gi } else { T::zero() })
                .collect();
            out[0] = Some(Tensor::from_parts(output.shape().to_vec(), data));
        }
        Primitive::EmbeddingLookup { indices } => {
            let table = operands[0];
            let width = table.shape()[1];
            let mut acc = vec![T::zero(); table.len()];
            for (row, &idx) in indices.iter().enumerate() {
                let src = &g[row * width..(row + 1) * width];
                for (dst, &v) in acc[idx * width..(idx + 1) * width].iter_mut().zip(src) {
                    *dst += v;
                }
            }
            out[0] = Some(Tensor::from_parts(table.shape().to_vec(), acc));
        }
        Primitive::ReduceMean { axis } | Primitive::ReduceSum { axis } => {
            let x = operands[0];
            let mean = matches!(prim, Primitive::ReduceMean { .. });
            out[0] = Some(match axis {
                None => {
                    let scale = if mean {
                        T::one() / T::of(x.len() as f64)
                    } else {
                        T::one()
                    };
                    Tensor::filled(x.shape(), g[0] * scale)
                }
                Some(ax) => {
                    let (outer, dim, inner) = split_axis(x.shape(), *ax);
                    let scale = if mean {
                        T::one() / T::of(dim as f64)
                    } else {
                        T::one()
                    };
                    let mut data = vec![T::zero(); x.len()];
                    for o in 0..outer {
                        for d in 0..dim {
                            for i in 0..inner {
                                data[(o * dim + d) * inner + i] = g[o * inner + i] * scale;
                            }
                        }
                    }
                    Tensor::from_parts(x.shape().to_vec(), data)
                }
            });
        }
        Primitive::SoftmaxCrossEntropy { labels, mask } => {
            let logits = operands[0];
            let classes = logits.shape()[1];
            let scored = mask.iter().filter(|&&m| m).count();
            let scale = g[0] / T::of(scored as f64);
            let mut data = vec![T::zero(); logits.len()];
            for (r, (&label, &m)) in labels.iter().zip(mask).enumerate() {
                if !m {
                    continue;
                }
                let row = &logits.data()[r * classes..(r + 1) * classes];
                let probs = softmax_row(row);
                for (c, p) in probs.into_iter().enumerate() {
                    let target = if c == label { T::one() } else { T::zero() };
                    data[r * classes + c] = (p - target) * scale;
                }
            }
            out[0] = Some(Tensor::from_parts(logits.shape().to_vec(), data));
        }
        Primitive::Concat { axis } => {
            let mut offset = 0;
            for (k, x) in operands.iter().enumerate() {
                let width = x.shape()[*axis];
                if needs[k] {
                    out[k] = Some(slice(grad, *axis, offset, offset + width)?);
                }
                offset += width;
            }
        }
        Primitive::Slice { axis, start, .. } => {
            let x = operands[0];
            let (outer, dim, inner) = split_axis(x.shape(), *axis);
            let width = grad.shape()[*axis];
            let mut data = vec![T::zero(); x.len()];
            for o in 0..outer {
                let src = &g[o * width * inner..(o + 1) * width * inner];
                let dst_start = (o * dim + start) * inner;
                data[dst_start..dst_start + width * inner].copy_from_slice(src);
            }
            out[0] = Some(Tensor::from_parts(x.shape().to_vec(), data));
        }
        Primitive::Reshape { .. } => {
            out[0] = Some(grad.with_shape(operands[0].shape().to_vec()));
        }
        Primitive::Transpose => {
            out[0] = Some(transpose(grad)?);
        }
        Primitive::Softmax => {
            let width = *output.shape().last().unwrap_or(&1);
            let y = output.data();
            let mut data = vec![T::zero(); y.len()];
            for r in 0..y.len() / width {
                let ys = &y[r * width..(r + 1) * width];
                let gs = &g[r * width..(r + 1) * width];
                let dot: T = ys.iter().zip(gs).map(|(&a, &b)| a * b).sum();
                for c in 0..width {
                    data[r * width + c] = ys[c] * (gs[c] - dot);
                }
            }
            out[0] = Some(Tensor::from_parts(output.shape().to_vec(), data));
        }
    }
    for (slot, &need) in out.iter_mut().zip(needs) {
        if !need {
            *slot = None;
        }
    }
    Ok(out)
}

fn check_arity<T: Scalar>(prim: &Primitive, operands: &[&Tensor<T>]) -> Result<()> {
    match prim.arity() {
        Some(n) if operands.len() != n => Err(Error::invalid(
            prim.name(),
            format!("expected {n} operands, got {}", operands.len()),
        )),
        None if operands.is_empty() => Err(Error::invalid(prim.name(), "no operands")),
        _ => Ok(()),
    }
}

fn mismatch<T: Scalar>(op: &'static str, xs: &[&Tensor<T>]) -> Error {
    Error::ShapeMismatch {
        op,
        shapes: xs.iter().map(|x| x.shape().to_vec()).collect(),
    }
}

/// `(outer, dim, inner)` sizes around `axis`.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn gemm_acc<T: Scalar>(a: &[T], b: &[T], n: usize, k: usize, m: usize, out: &mut [T]) {
    for i in 0..n {
        let row = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == T::zero() {
                continue;
            }
            for (o, &bv) in row.iter_mut().zip(&b[p * m..(p + 1) * m]) {
                *o += aip * bv;
            }
        }
    }
}

fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.len() == 3 && sb.len() == 3 {
        let (bt, n, k) = (sa[0], sa[1], sa[2]);
        if sb[0] != bt || sb[1] != k {
            return Err(mismatch("matmul", &[a, b]));
        }
        let m = sb[2];
        let mut out = vec![T::zero(); bt * n * m];
        for t in 0..bt {
            gemm_acc(
                &a.data()[t * n * k..(t + 1) * n * k],
                &b.data()[t * k * m..(t + 1) * k * m],
                n,
                k,
                m,
                &mut out[t * n * m..(t + 1) * n * m],
            );
        }
        return Ok(Tensor::from_parts(vec![bt, n, m], out));
    }
    if sa.is_empty() || sb.len() != 2 || sa[sa.len() - 1] != sb[0] {
        return Err(mismatch("matmul", &[a, b]));
    }
    let k = sb[0];
    let m = sb[1];
    let n = a.len() / k;
    let mut out = vec![T::zero(); n * m];
    gemm_acc(a.data(), b.data(), n, k, m, &mut out);
    let mut shape = sa.to_vec();
    *shape.last_mut().unwrap() = m;
    Ok(Tensor::from_parts(shape, out))
}

fn matmul_backward<T: Scalar>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    grad: &Tensor<T>,
    need_a: bool,
    need_b: bool,
) -> (Option<Tensor<T>>, Option<Tensor<T>>) {
    let batched = a.rank() == 3 && b.rank() == 3;
    let (bt, n, k, m) = if batched {
        (a.shape()[0], a.shape()[1], a.shape()[2], b.shape()[2])
    } else {
        let k = b.shape()[0];
        (1, a.len() / k, k, b.shape()[1])
    };
    let g = grad.data();
    let da = need_a.then(|| {
        let mut out = vec![T::zero(); a.len()];
        for t in 0..bt {
            let bs = if batched { &b.data()[t * k * m..(t + 1) * k * m] } else { b.data() };
            for i in 0..n {
                let gi = &g[(t * n + i) * m..(t * n + i + 1) * m];
                for p in 0..k {
                    let brow = &bs[p * m..(p + 1) * m];
                    out[(t * n + i) * k + p] = gi.iter().zip(brow).map(|(&x, &y)| x * y).sum();
                }
            }
        }
        Tensor::from_parts(a.shape().to_vec(), out)
    });
    let db = need_b.then(|| {
        let mut out = vec![T::zero(); b.len()];
        for t in 0..bt {
            let dst = if batched { &mut out[t * k * m..(t + 1) * k * m] } else { &mut out[..] };
            for i in 0..n {
                let gi = &g[(t * n + i) * m..(t * n + i + 1) * m];
                for p in 0..k {
                    let aip = a.data()[(t * n + i) * k + p];
                    if aip == T::zero() {
                        continue;
                    }
                    for (d, &gv) in dst[p * m..(p + 1) * m].iter_mut().zip(gi) {
                        *d += aip * gv;
                    }
                }
            }
        }
        Tensor::from_parts(b.shape().to_vec(), out)
    });
    (da, db)
}

fn broadcast_binary<T: Scalar>(
    op: &'static str,
    a: &Tensor<T>,
    b: &Tensor<T>,
    f: impl Fn(T, T) -> T,
) -> Result<Tensor<T>> {
    let (sa, sb) = (a.shape(), b.shape());
    if sb.len() > sa.len() || sa[sa.len() - sb.len()..] != *sb {
        return Err(mismatch(op, &[a, b]));
    }
    let n = b.len();
    let data = a
        .data()
        .iter()
        .enumerate()
        .map(|(i, &x)| f(x, b.data()[i % n]))
        .collect();
    Ok(Tensor::from_parts(sa.to_vec(), data))
}

fn sum_to_suffix<T: Scalar>(grad: &Tensor<T>, shape: &[usize]) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let mut acc = vec![T::zero(); n];
    for (i, &g) in grad.data().iter().enumerate() {
        acc[i % n] += g;
    }
    Tensor::from_parts(shape.to_vec(), acc)
}

fn embedding_lookup<T: Scalar>(table: &Tensor<T>, indices: &[usize]) -> Result<Tensor<T>> {
    if table.rank() != 2 {
        return Err(mismatch("embedding_lookup", &[table]));
    }
    let (rows, width) = (table.shape()[0], table.shape()[1]);
    let mut data = Vec::with_capacity(indices.len() * width);
    for &idx in indices {
        if idx >= rows {
            return Err(Error::invalid(
                "embedding_lookup",
                format!("index {idx} outside table of {rows} rows"),
            ));
        }
        data.extend_from_slice(&table.data()[idx * width..(idx + 1) * width]);
    }
    Ok(Tensor::from_parts(vec![indices.len(), width], data))
}

fn reduce<T: Scalar>(
    op: &'static str,
    x: &Tensor<T>,
    axis: Option<usize>,
    mean: bool,
) -> Result<Tensor<T>> {
    match axis {
        None => {
            let s: T = x.data().iter().copied().sum();
            let v = if mean { s / T::of(x.len() as f64) } else { s };
            Ok(Tensor::scalar(v))
        }
        Some(ax) => {
            if ax >= x.rank() {
                return Err(Error::invalid(op, format!("axis {ax} on shape {:?}", x.shape())));
            }
            let (outer, dim, inner) = split_axis(x.shape(), ax);
            let mut data = vec![T::zero(); outer * inner];
            for o in 0..outer {
                for d in 0..dim {
                    for i in 0..inner {
                        data[o * inner + i] += x.data()[(o * dim + d) * inner + i];
                    }
                }
            }
            if mean {
                let scale = T::one() / T::of(dim as f64);
                data.iter_mut().for_each(|v| *v *= scale);
            }
            let mut shape = x.shape().to_vec();
            shape.remove(ax);
            Ok(Tensor::from_parts(shape, data))
        }
    }
}

fn softmax_row<T: Scalar>(row: &[T]) -> Vec<T> {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = row.iter().map(|&x| (x - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn softmax_cross_entropy<T: Scalar>(
    logits: &Tensor<T>,
    labels: &[usize],
    mask: &[bool],
) -> Result<Tensor<T>> {
    const OP: &str = "softmax_cross_entropy";
    if logits.rank() != 2 {
        return Err(mismatch(OP, &[logits]));
    }
    let (rows, classes) = (logits.shape()[0], logits.shape()[1]);
    if labels.len() != rows || mask.len() != rows {
        return Err(Error::invalid(
            OP,
            format!(
                "{rows} logit rows but {} labels and {} mask entries",
                labels.len(),
                mask.len()
            ),
        ));
    }
    let mut total = T::zero();
    let mut scored = 0usize;
    for (r, (&label, &m)) in labels.iter().zip(mask).enumerate() {
        if !m {
            continue;
        }
        if label >= classes {
            return Err(Error::invalid(OP, format!("label {label} outside 0..{classes}")));
        }
        let row = &logits.data()[r * classes..(r + 1) * classes];
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<T>().ln();
        total += lse - row[label];
        scored += 1;
    }
    if scored == 0 {
        return Err(Error::invalid(OP, "no scored rows"));
    }
    Ok(Tensor::scalar(total / T::of(scored as f64)))
}

fn concat<T: Scalar>(xs: &[&Tensor<T>], axis: usize) -> Result<Tensor<T>> {
    let first = xs[0].shape();
    if axis >= first.len() {
        return Err(Error::invalid("concat", format!("axis {axis} on shape {first:?}")));
    }
    for x in xs {
        let s = x.shape();
        if s.len() != first.len()
            || s.iter()
                .zip(first)
                .enumerate()
                .any(|(d, (a, b))| d != axis && a != b)
        {
            return Err(mismatch("concat", xs));
        }
    }
    let (outer, _, inner) = split_axis(first, axis);
    let total: usize = xs.iter().map(|x| x.shape()[axis]).sum();
    let mut data = Vec::with_capacity(outer * total * inner);
    for o in 0..outer {
        for x in xs {
            let w = x.shape()[axis] * inner;
            data.extend_from_slice(&x.data()[o * w..(o + 1) * w]);
        }
    }
    let mut shape = first.to_vec();
    shape[axis] = total;
    Ok(Tensor::from_parts(shape, data))
}

fn slice<T: Scalar>(x: &Tensor<T>, axis: usize, start: usize, end: usize) -> Result<Tensor<T>> {
    if axis >= x.rank() || start >= end || end > x.shape()[axis] {
        return Err(Error::invalid(
            "slice",
            format!("range {start}..{end} on axis {axis} of shape {:?}", x.shape()),
        ));
    }
    let (outer, dim, inner) = split_axis(x.shape(), axis);
    let width = end - start;
    let mut data = Vec::with_capacity(outer * width * inner);
    for o in 0..outer {
        let from = (o * dim + start) * inner;
        data.extend_from_slice(&x.data()[from..from + width * inner]);
    }
    let mut shape = x.shape().to_vec();
    shape[axis] = width;
    Ok(Tensor::from_parts(shape, data))
}

fn transpose<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let r = x.rank();
    if r < 2 {
        return Err(mismatch("transpose", &[x]));
    }
    let (n, m) = (x.shape()[r - 2], x.shape()[r - 1]);
    let batches = x.len() / (n * m).max(1);
    let mut data = vec![T::zero(); x.len()];
    for t in 0..batches {
        let base = t * n * m;
        for i in 0..n {
            for j in 0..m {
                data[base + j * n + i] = x.data()[base + i * m + j];
            }
        }
    }
    let mut shape = x.shape().to_vec();
    shape.swap(r - 2, r - 1);
    Ok(Tensor::from_parts(shape, data))
}

fn softmax<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let width = match x.shape().last() {
        Some(&w) if w > 0 => w,
        _ => return Err(mismatch("softmax", &[x])),
    };
    let mut data = Vec::with_capacity(x.len());
    for row in x.data().chunks(width) {
        data.extend(softmax_row(row));
    }
    Ok(Tensor::from_parts(x.shape().to_vec(), data))
}
