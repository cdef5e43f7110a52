//! Reductions and layout primitives.

use crate::autodiff::tape::{GradSink, Op, Tape, Var};
use crate::autodiff::tensor::{strides, Tensor};
use crate::error::{Error, Result};
use crate::float::Float;

/// Split `shape` around `axis` into (outer, len, inner) extents.
fn split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn check_axis(op: &'static str, shape: &[usize], axis: usize) -> Result<()> {
    if axis >= shape.len() {
        return Err(Error::InvalidArgument(format!(
            "{op}: axis {axis} out of range for shape {shape:?}"
        )));
    }
    Ok(())
}

fn permute_data<T: Float>(x: &Tensor<T>, perm: &[usize]) -> Tensor<T> {
    let shape = x.shape();
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let in_strides = strides(shape);
    let src: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let n = x.numel();
    let mut out = Vec::with_capacity(n);
    let rank = out_shape.len();
    let xd = x.data();
    if n == 0 {
        return Tensor::new(&out_shape, out).expect("permute");
    }
    let mut idx = vec![0usize; rank];
    let mut off = 0usize;
    for _ in 0..n {
        out.push(xd[off]);
        for d in (0..rank).rev() {
            idx[d] += 1;
            off += src[d];
            if idx[d] < out_shape[d] {
                break;
            }
            off -= src[d] * idx[d];
            idx[d] = 0;
        }
    }
    Tensor::new(&out_shape, out).expect("permute")
}

fn slice_data<T: Float>(x: &Tensor<T>, axis: usize, start: usize, len: usize) -> Tensor<T> {
    let (outer, n, inner) = split(x.shape(), axis);
    let mut shape = x.shape().to_vec();
    shape[axis] = len;
    let xd = x.data();
    let mut out = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let base = o * n * inner + start * inner;
        out.extend_from_slice(&xd[base..base + len * inner]);
    }
    Tensor::new(&shape, out).expect("slice")
}

fn pad_data<T: Float>(x: &Tensor<T>, axis: usize, before: usize, after: usize) -> Tensor<T> {
    let (outer, n, inner) = split(x.shape(), axis);
    let mut shape = x.shape().to_vec();
    let total = n + before + after;
    shape[axis] = total;
    let xd = x.data();
    let mut out = vec![T::zero(); outer * total * inner];
    for o in 0..outer {
        let dst = o * total * inner + before * inner;
        out[dst..dst + n * inner].copy_from_slice(&xd[o * n * inner..(o + 1) * n * inner]);
    }
    Tensor::new(&shape, out).expect("pad")
}

pub(crate) fn sum_axis_backward<T: Float>(x: Var, axis: usize, g: &Tensor<T>, sink: &mut GradSink<'_, T>) {
    if !sink.wants(x) {
        return;
    }
    let shape = sink.value(x).shape().to_vec();
    let (outer, n, inner) = split(&shape, axis);
    let gd = g.data();
    let mut out = vec![T::zero(); outer * n * inner];
    for o in 0..outer {
        for k in 0..n {
            let dst = (o * n + k) * inner;
            out[dst..dst + inner].copy_from_slice(&gd[o * inner..(o + 1) * inner]);
        }
    }
    sink.add(x, Tensor::new(&shape, out).expect("sum_axis grad"));
}

pub(crate) fn permute_backward<T: Float>(x: Var, perm: &[usize], g: &Tensor<T>, sink: &mut GradSink<'_, T>) {
    if !sink.wants(x) {
        return;
    }
    let mut inverse = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inverse[p] = i;
    }
    sink.add(x, permute_data(g, &inverse));
}

pub(crate) fn slice_backward<T: Float>(x: Var, axis: usize, start: usize, g: &Tensor<T>, sink: &mut GradSink<'_, T>) {
    if !sink.wants(x) {
        return;
    }
    let n = sink.value(x).shape()[axis];
    let after = n - start - g.shape()[axis];
    sink.add(x, pad_data(g, axis, start, after));
}

pub(crate) fn pad_backward<T: Float>(x: Var, axis: usize, before: usize, g: &Tensor<T>, sink: &mut GradSink<'_, T>) {
    if !sink.wants(x) {
        return;
    }
    let n = sink.value(x).shape()[axis];
    sink.add(x, slice_data(g, axis, before, n));
}

pub(crate) fn concat_backward<T: Float>(xs: &[Var], axis: usize, g: &Tensor<T>, sink: &mut GradSink<'_, T>) {
    let mut start = 0;
    for &x in xs {
        let n = sink.value(x).shape()[axis];
        if sink.wants(x) {
            let part = slice_data(g, axis, start, n);
            sink.add(x, part);
        }
        start += n;
    }
}

impl<T: Float> Tape<T> {
    /// Sum of all elements (a scalar).
    pub fn sum(&self, x: Var) -> Var {
        let value = self.with_value(x, |t| Tensor::scalar(t.data().iter().copied().sum()));
        self.push(value, Op::SumAll(x), self.any_grad(&[x]))
    }

    /// Mean of all elements (a scalar).
    pub fn mean(&self, x: Var) -> Var {
        let n = self.with_value(x, |t| t.numel()).max(1);
        let s = self.sum(x);
        self.scale(s, T::one() / T::lit(n as f64))
    }

    /// Sum along `axis`, keeping it with extent 1.
    pub fn sum_axis(&self, x: Var, axis: usize) -> Result<Var> {
        let value = self.with_value(x, |t| -> Result<Tensor<T>> {
            check_axis("sum_axis", t.shape(), axis)?;
            let (outer, n, inner) = split(t.shape(), axis);
            let mut shape = t.shape().to_vec();
            shape[axis] = 1;
            let td = t.data();
            let mut out = vec![T::zero(); outer * inner];
            for o in 0..outer {
                for k in 0..n {
                    let src = (o * n + k) * inner;
                    for (acc, &v) in out[o * inner..(o + 1) * inner].iter_mut().zip(&td[src..src + inner]) {
                        *acc += v;
                    }
                }
            }
            Tensor::new(&shape, out)
        })?;
        Ok(self.push(value, Op::SumAxis { x, axis }, self.any_grad(&[x])))
    }

    /// Mean along `axis`, keeping it with extent 1.
    pub fn mean_axis(&self, x: Var, axis: usize) -> Result<Var> {
        let n = self.with_value(x, |t| t.shape().get(axis).copied().unwrap_or(1)).max(1);
        let s = self.sum_axis(x, axis)?;
        Ok(self.scale(s, T::one() / T::lit(n as f64)))
    }

    pub fn reshape(&self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.with_value(x, |t| t.reshape(shape))?;
        Ok(self.push(value, Op::Reshape(x), self.any_grad(&[x])))
    }

    /// Reorder axes: output axis `i` is input axis `perm[i]`.
    pub fn permute(&self, x: Var, perm: &[usize]) -> Result<Var> {
        let value = self.with_value(x, |t| -> Result<Tensor<T>> {
            let mut seen = vec![false; t.rank()];
            if perm.len() != t.rank() || perm.iter().any(|&p| p >= t.rank() || std::mem::replace(&mut seen[p], true)) {
                return Err(Error::shape("permute", t.shape(), perm));
            }
            Ok(permute_data(t, perm))
        })?;
        Ok(self.push(
            value,
            Op::Permute {
                x,
                perm: perm.to_vec(),
            },
            self.any_grad(&[x]),
        ))
    }

    /// Swap the last two axes.
    pub fn transpose(&self, x: Var) -> Result<Var> {
        let rank = self.with_value(x, |t| t.rank());
        if rank < 2 {
            return Err(Error::InvalidArgument("transpose: rank < 2".into()));
        }
        let mut perm: Vec<usize> = (0..rank).collect();
        perm.swap(rank - 2, rank - 1);
        self.permute(x, &perm)
    }

    /// `x[.., start..start+len, ..]` along `axis`.
    pub fn slice(&self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let value = self.with_value(x, |t| -> Result<Tensor<T>> {
            check_axis("slice", t.shape(), axis)?;
            if start + len > t.shape()[axis] {
                return Err(Error::InvalidArgument(format!(
                    "slice: {start}..{} exceeds axis {axis} of shape {:?}",
                    start + len,
                    t.shape()
                )));
            }
            Ok(slice_data(t, axis, start, len))
        })?;
        Ok(self.push(value, Op::Slice { x, axis, start }, self.any_grad(&[x])))
    }

    /// Zero-pad along `axis`.
    pub fn pad(&self, x: Var, axis: usize, before: usize, after: usize) -> Result<Var> {
        let value = self.with_value(x, |t| -> Result<Tensor<T>> {
            check_axis("pad", t.shape(), axis)?;
            Ok(pad_data(t, axis, before, after))
        })?;
        Ok(self.push(value, Op::Pad { x, axis, before }, self.any_grad(&[x])))
    }

    pub fn concat(&self, xs: &[Var], axis: usize) -> Result<Var> {
        let Some(&first) = xs.first() else {
            return Err(Error::InvalidArgument("concat: no inputs".into()));
        };
        let base = self.shape(first);
        check_axis("concat", &base, axis)?;
        let mut total = 0;
        for &x in xs {
            let s = self.shape(x);
            let compatible = s.len() == base.len() && s.iter().zip(&base).enumerate().all(|(d, (a, b))| d == axis || a == b);
            if !compatible {
                return Err(Error::shape("concat", &base, &s));
            }
            total += s[axis];
        }
        let (outer, _, inner) = split(&base, axis);
        let mut shape = base.clone();
        shape[axis] = total;
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &x in xs {
                self.with_value(x, |t| {
                    let n = t.shape()[axis] * inner;
                    out.extend_from_slice(&t.data()[o * n..(o + 1) * n]);
                });
            }
        }
        let value = Tensor::new(&shape, out)?;
        Ok(self.push(
            value,
            Op::Concat {
                xs: xs.to_vec(),
                axis,
            },
            self.any_grad(xs),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arange(shape: &[usize]) -> Tensor<f64> {
        Tensor::from_fn(shape, |i| i as f64)
    }

    #[test]
    fn permute_matches_index_formula() {
        let tape = Tape::<f64>::new();
        let x = tape.constant(arange(&[2, 3, 4]));
        let y = tape.value(tape.permute(x, &[2, 0, 1]).unwrap());
        assert_eq!(y.shape(), &[4, 2, 3]);
        for c in 0..4 {
            for a in 0..2 {
                for b in 0..3 {
                    assert_eq!(y.data()[c * 6 + a * 3 + b], (a * 12 + b * 4 + c) as f64);
                }
            }
        }
    }

    #[test]
    fn slice_pad_concat_roundtrip() {
        let tape = Tape::<f64>::new();
        let x = tape.constant(arange(&[2, 5]));
        let a = tape.slice(x, 1, 0, 2).unwrap();
        let b = tape.slice(x, 1, 2, 3).unwrap();
        let c = tape.concat(&[a, b], 1).unwrap();
        assert_eq!(tape.value(c), tape.value(x));
        let p = tape.pad(a, 1, 1, 2).unwrap();
        assert_eq!(tape.value(p).data(), &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 5.0, 6.0, 0.0, 0.0]);
        assert!(tape.slice(x, 1, 4, 2).is_err());
        assert!(tape.slice(x, 2, 0, 1).is_err());
    }

    #[test]
    fn sum_and_mean_axis() {
        let tape = Tape::<f64>::new();
        let x = tape.constant(arange(&[2, 3]));
        assert_eq!(tape.value(tape.sum_axis(x, 0).unwrap()).data(), &[3.0, 5.0, 7.0]);
        assert_eq!(tape.value(tape.mean_axis(x, 1).unwrap()).data(), &[1.0, 4.0]);
        assert_eq!(tape.value(tape.mean(x)).item(), 2.5);
    }
}
