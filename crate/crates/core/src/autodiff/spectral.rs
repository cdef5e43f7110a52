//! Differentiable STFT, inverse STFT, phase and magnitude.
//!
//! Spectra on the tape use the channel-first layout `[batch, bins, frames]`.

use std::sync::Arc;

use crate::autodiff::tape::{GradSink, Op, Tape, Var};
use crate::autodiff::tensor::Tensor;
use crate::dsp::phase::phi;
use crate::dsp::StftPlan;
use crate::error::{Error, Result};
use crate::float::Float;

/// `frames × bins` (row-major) into `bins × frames`.
fn to_bins_major<T: Float>(src: &[T], frames: usize, bins: usize, dst: &mut [T]) {
    for t in 0..frames {
        for k in 0..bins {
            dst[k * frames + t] = src[t * bins + k];
        }
    }
}

fn to_frames_major<T: Float>(src: &[T], frames: usize, bins: usize, dst: &mut [T]) {
    for k in 0..bins {
        for t in 0..frames {
            dst[t * bins + k] = src[k * frames + t];
        }
    }
}

pub(crate) fn stft_backward<T: Float>(x: Var, plan: &StftPlan<T>, g: &Tensor<T>, sink: &mut GradSink<'_, T>) {
    if !sink.wants(x) {
        return;
    }
    let shape = sink.value(x).shape().to_vec();
    let (batch, len) = (shape[0], shape[1]);
    let (bins, frames) = (g.shape()[2], g.shape()[3]);
    let n = bins * frames;
    let mut gx = vec![T::zero(); batch * len];
    let (mut g_re, mut g_im) = (vec![T::zero(); n], vec![T::zero(); n]);
    for b in 0..batch {
        let gb = &g.data()[b * 2 * n..(b + 1) * 2 * n];
        to_frames_major(&gb[..n], frames, bins, &mut g_re);
        to_frames_major(&gb[n..], frames, bins, &mut g_im);
        plan.forward_adjoint(&g_re, &g_im, &mut gx[b * len..(b + 1) * len]);
    }
    sink.add(x, Tensor::new(&shape, gx).expect("stft grad"));
}

pub(crate) fn istft_backward<T: Float>(re: Var, im: Var, plan: &StftPlan<T>, g: &Tensor<T>, sink: &mut GradSink<'_, T>) {
    let shape = sink.value(re).shape().to_vec();
    let (batch, bins, frames) = (shape[0], shape[1], shape[2]);
    let len = g.shape()[1];
    let n = bins * frames;
    let (mut g_re, mut g_im) = (vec![T::zero(); batch * n], vec![T::zero(); batch * n]);
    let (mut acc_re, mut acc_im) = (vec![T::zero(); n], vec![T::zero(); n]);
    for b in 0..batch {
        acc_re.iter_mut().chain(acc_im.iter_mut()).for_each(|v| *v = T::zero());
        plan.inverse_adjoint(&g.data()[b * len..(b + 1) * len], frames, &mut acc_re, &mut acc_im);
        to_bins_major(&acc_re, frames, bins, &mut g_re[b * n..(b + 1) * n]);
        to_bins_major(&acc_im, frames, bins, &mut g_im[b * n..(b + 1) * n]);
    }
    sink.add(re, Tensor::new(&shape, g_re).expect("istft grad"));
    sink.add(im, Tensor::new(&shape, g_im).expect("istft grad"));
}

pub(crate) fn phi_backward<T: Float>(r: Var, i: Var, g: &Tensor<T>, sink: &mut GradSink<'_, T>) {
    let (rv, iv) = (sink.value(r).clone(), sink.value(i).clone());
    let mut gr = Vec::with_capacity(rv.numel());
    let mut gi = Vec::with_capacity(rv.numel());
    for ((&a, &b), &gv) in rv.data().iter().zip(iv.data()).zip(g.data()) {
        let d = a * a + b * b;
        if d > T::zero() {
            gr.push(-gv * b / d);
            gi.push(gv * a / d);
        } else {
            gr.push(T::zero());
            gi.push(T::zero());
        }
    }
    sink.add(r, Tensor::new(rv.shape(), gr).expect("phi grad"));
    sink.add(i, Tensor::new(rv.shape(), gi).expect("phi grad"));
}

pub(crate) fn complex_abs_backward<T: Float>(r: Var, i: Var, out: &Tensor<T>, g: &Tensor<T>, sink: &mut GradSink<'_, T>) {
    let (rv, iv) = (sink.value(r).clone(), sink.value(i).clone());
    let mut gr = Vec::with_capacity(rv.numel());
    let mut gi = Vec::with_capacity(rv.numel());
    for (((&a, &b), &m), &gv) in rv.data().iter().zip(iv.data()).zip(out.data()).zip(g.data()) {
        if m > T::zero() {
            gr.push(gv * a / m);
            gi.push(gv * b / m);
        } else {
            gr.push(T::zero());
            gi.push(T::zero());
        }
    }
    sink.add(r, Tensor::new(rv.shape(), gr).expect("abs grad"));
    sink.add(i, Tensor::new(rv.shape(), gi).expect("abs grad"));
}

impl<T: Float> Tape<T> {
    /// `x: [B, L]` → `[B, 2, bins, frames]` (real part first).
    pub fn stft(&self, x: Var, plan: &Arc<StftPlan<T>>) -> Result<Var> {
        let value = self.with_value(x, |t| -> Result<Tensor<T>> {
            if t.rank() != 2 || t.shape()[1] == 0 {
                return Err(Error::shape("stft", t.shape(), &[0, 0]));
            }
            let (batch, len) = (t.shape()[0], t.shape()[1]);
            let cfg = plan.config();
            let (bins, frames) = (cfg.bins(), cfg.frames_for(len));
            let n = bins * frames;
            let mut out = vec![T::zero(); batch * 2 * n];
            let (mut re, mut im) = (vec![T::zero(); n], vec![T::zero(); n]);
            for b in 0..batch {
                plan.forward_into(&t.data()[b * len..(b + 1) * len], &mut re, &mut im);
                let ob = &mut out[b * 2 * n..(b + 1) * 2 * n];
                let (o_re, o_im) = ob.split_at_mut(n);
                to_bins_major(&re, frames, bins, o_re);
                to_bins_major(&im, frames, bins, o_im);
            }
            Tensor::new(&[batch, 2, bins, frames], out)
        })?;
        Ok(self.push(
            value,
            Op::Stft {
                x,
                plan: Arc::clone(plan),
            },
            self.any_grad(&[x]),
        ))
    }

    /// `re, im: [B, bins, frames]` → `[B, frames · hop]`.
    pub fn istft(&self, re: Var, im: Var, plan: &Arc<StftPlan<T>>) -> Result<Var> {
        let (sr, si) = (self.shape(re), self.shape(im));
        let bins = plan.config().bins();
        if sr != si || sr.len() != 3 || sr[1] != bins || sr[2] == 0 {
            return Err(Error::shape("istft", &sr, &si));
        }
        let (batch, frames) = (sr[0], sr[2]);
        let len = plan.config().samples_for(frames);
        let n = bins * frames;
        let mut out = vec![T::zero(); batch * len];
        let (mut fr, mut fi) = (vec![T::zero(); n], vec![T::zero(); n]);
        self.with_value(re, |tr| {
            self.with_value(im, |ti| {
                for b in 0..batch {
                    to_frames_major(&tr.data()[b * n..(b + 1) * n], frames, bins, &mut fr);
                    to_frames_major(&ti.data()[b * n..(b + 1) * n], frames, bins, &mut fi);
                    plan.inverse_into(&fr, &fi, frames, &mut out[b * len..(b + 1) * len]);
                }
            })
        });
        let value = Tensor::new(&[batch, len], out)?;
        Ok(self.push(
            value,
            Op::Istft {
                re,
                im,
                plan: Arc::clone(plan),
            },
            self.any_grad(&[re, im]),
        ))
    }

    /// Element-wise quadrant-corrected phase of `r + i·j`.
    pub fn phi(&self, r: Var, i: Var) -> Result<Var> {
        let value = self.with_value(r, |tr| {
            self.with_value(i, |ti| -> Result<Tensor<T>> {
                if tr.shape() != ti.shape() {
                    return Err(Error::shape("phi", tr.shape(), ti.shape()));
                }
                let data = tr.data().iter().zip(ti.data()).map(|(&a, &b)| phi(a, b)).collect();
                Tensor::new(tr.shape(), data)
            })
        })?;
        Ok(self.push(value, Op::Phi { r, i }, self.any_grad(&[r, i])))
    }

    /// Element-wise `sqrt(r² + i²)`; the gradient at the origin is zero.
    pub fn complex_abs(&self, r: Var, i: Var) -> Result<Var> {
        let value = self.with_value(r, |tr| {
            self.with_value(i, |ti| -> Result<Tensor<T>> {
                if tr.shape() != ti.shape() {
                    return Err(Error::shape("complex_abs", tr.shape(), ti.shape()));
                }
                let data = tr.data().iter().zip(ti.data()).map(|(&a, &b)| a.hypot(b)).collect();
                Tensor::new(tr.shape(), data)
            })
        })?;
        Ok(self.push(value, Op::ComplexAbs { r, i }, self.any_grad(&[r, i])))
    }
}
