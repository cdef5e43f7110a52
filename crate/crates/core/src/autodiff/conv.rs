//! Matrix product and 1-D / 2-D convolutions (im2col + GEMM).

use crate::autodiff::tape::{GradSink, Op, Tape, Var};
use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};
use crate::float::{gemm, Float, MatRef};

/// Hyper-parameters of a 1-D convolution over `[batch, channels, time]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv1dSpec {
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
    pub groups: usize,
}

impl Default for Conv1dSpec {
    fn default() -> Self {
        Conv1dSpec {
            stride: 1,
            padding: 0,
            dilation: 1,
            groups: 1,
        }
    }
}

impl Conv1dSpec {
    /// Stride 1 with "same" padding for an odd kernel.
    pub fn same(kernel: usize) -> Self {
        Conv1dSpec {
            padding: kernel / 2,
            ..Default::default()
        }
    }

    pub fn output_len(&self, len: usize, kernel: usize) -> Option<usize> {
        let span = self.dilation * (kernel - 1) + 1;
        let padded = len + 2 * self.padding;
        (padded >= span).then(|| (padded - span) / self.stride + 1)
    }
}

/// Hyper-parameters of a 2-D convolution over `[batch, channels, height, width]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2dSpec {
    pub stride: (usize, usize),
    pub padding: (usize, usize),
}

impl Default for Conv2dSpec {
    fn default() -> Self {
        Conv2dSpec {
            stride: (1, 1),
            padding: (0, 0),
        }
    }
}

impl Conv2dSpec {
    pub fn output_hw(&self, h: usize, w: usize, kh: usize, kw: usize) -> Option<(usize, usize)> {
        let ph = h + 2 * self.padding.0;
        let pw = w + 2 * self.padding.1;
        (ph >= kh && pw >= kw).then(|| ((ph - kh) / self.stride.0 + 1, (pw - kw) / self.stride.1 + 1))
    }
}

struct Geom1 {
    batch: usize,
    cin: usize,
    len: usize,
    cout: usize,
    kernel: usize,
    out_len: usize,
}

fn geom1(x: &[usize], w: &[usize], b: Option<&[usize]>, spec: &Conv1dSpec) -> Result<Geom1> {
    if x.len() != 3 || w.len() != 3 || spec.groups == 0 || spec.stride == 0 || spec.dilation == 0 {
        return Err(Error::shape("conv1d", x, w));
    }
    let (batch, cin, len) = (x[0], x[1], x[2]);
    let (cout, cin_g, kernel) = (w[0], w[1], w[2]);
    if cin % spec.groups != 0 || cout % spec.groups != 0 || cin / spec.groups != cin_g || kernel == 0 {
        return Err(Error::shape("conv1d", x, w));
    }
    if let Some(b) = b {
        if b != [cout] {
            return Err(Error::shape("conv1d bias", w, b));
        }
    }
    let out_len = spec.output_len(len, kernel).ok_or_else(|| Error::shape("conv1d", x, w))?;
    Ok(Geom1 {
        batch,
        cin,
        len,
        cout,
        kernel,
        out_len,
    })
}

/// Fill `cols` (`[cin_g * kernel, out_len]`) for one batch item and group.
fn im2col1<T: Float>(x: &[T], g: &Geom1, spec: &Conv1dSpec, c0: usize, cin_g: usize, cols: &mut [T]) {
    for c in 0..cin_g {
        let row = &x[(c0 + c) * g.len..(c0 + c + 1) * g.len];
        for k in 0..g.kernel {
            let dst = &mut cols[(c * g.kernel + k) * g.out_len..(c * g.kernel + k + 1) * g.out_len];
            let shift = (k * spec.dilation) as isize - spec.padding as isize;
            for (t, d) in dst.iter_mut().enumerate() {
                let i = (t * spec.stride) as isize + shift;
                *d = if i >= 0 && (i as usize) < g.len { row[i as usize] } else { T::zero() };
            }
        }
    }
}

fn col2im1<T: Float>(cols: &[T], g: &Geom1, spec: &Conv1dSpec, c0: usize, cin_g: usize, gx: &mut [T]) {
    for c in 0..cin_g {
        let row = &mut gx[(c0 + c) * g.len..(c0 + c + 1) * g.len];
        for k in 0..g.kernel {
            let src = &cols[(c * g.kernel + k) * g.out_len..(c * g.kernel + k + 1) * g.out_len];
            let shift = (k * spec.dilation) as isize - spec.padding as isize;
            for (t, &s) in src.iter().enumerate() {
                let i = (t * spec.stride) as isize + shift;
                if i >= 0 && (i as usize) < g.len {
                    row[i as usize] += s;
                }
            }
        }
    }
}

fn conv1d_forward<T: Float>(x: &Tensor<T>, w: &Tensor<T>, b: Option<&Tensor<T>>, spec: &Conv1dSpec) -> Result<Tensor<T>> {
    let g = geom1(x.shape(), w.shape(), b.map(|t| t.shape()), spec)?;
    let groups = spec.groups;
    let (cin_g, cout_g) = (g.cin / groups, g.cout / groups);
    let rows = cin_g * g.kernel;
    let mut out = vec![T::zero(); g.batch * g.cout * g.out_len];
    let mut cols = vec![T::zero(); rows * g.out_len];
    let (xd, wd) = (x.data(), w.data());
    for bi in 0..g.batch {
        let xb = &xd[bi * g.cin * g.len..(bi + 1) * g.cin * g.len];
        let ob = &mut out[bi * g.cout * g.out_len..(bi + 1) * g.cout * g.out_len];
        for gi in 0..groups {
            im2col1(xb, &g, spec, gi * cin_g, cin_g, &mut cols);
            let wg = &wd[gi * cout_g * rows..(gi + 1) * cout_g * rows];
            let og = &mut ob[gi * cout_g * g.out_len..(gi + 1) * cout_g * g.out_len];
            gemm(T::one(), MatRef::new(wg, cout_g, rows), MatRef::new(&cols, rows, g.out_len), T::zero(), og);
        }
        if let Some(b) = b {
            for (c, &bv) in b.data().iter().enumerate() {
                ob[c * g.out_len..(c + 1) * g.out_len].iter_mut().for_each(|v| *v += bv);
            }
        }
    }
    Tensor::new(&[g.batch, g.cout, g.out_len], out)
}

pub(crate) fn conv1d_backward<T: Float>(
    x: Var,
    w: Var,
    b: Option<Var>,
    spec: &Conv1dSpec,
    gout: &Tensor<T>,
    sink: &mut GradSink<'_, T>,
) {
    let (xv, wv) = (sink.value(x).clone(), sink.value(w).clone());
    let g = geom1(xv.shape(), wv.shape(), None, spec).expect("conv1d geometry");
    let groups = spec.groups;
    let (cin_g, cout_g) = (g.cin / groups, g.cout / groups);
    let rows = cin_g * g.kernel;
    let (want_x, want_w) = (sink.wants(x), sink.wants(w));
    let mut gx = vec![T::zero(); if want_x { xv.numel() } else { 0 }];
    let mut gw = vec![T::zero(); if want_w { wv.numel() } else { 0 }];
    let mut cols = vec![T::zero(); rows * g.out_len];
    let (xd, wd, gd) = (xv.data(), wv.data(), gout.data());
    for bi in 0..g.batch {
        let xb = &xd[bi * g.cin * g.len..(bi + 1) * g.cin * g.len];
        let gb = &gd[bi * g.cout * g.out_len..(bi + 1) * g.cout * g.out_len];
        for gi in 0..groups {
            let gg = &gb[gi * cout_g * g.out_len..(gi + 1) * cout_g * g.out_len];
            if want_w {
                im2col1(xb, &g, spec, gi * cin_g, cin_g, &mut cols);
                let gwg = &mut gw[gi * cout_g * rows..(gi + 1) * cout_g * rows];
                gemm(
                    T::one(),
                    MatRef::new(gg, cout_g, g.out_len),
                    MatRef::new(&cols, rows, g.out_len).t(),
                    T::one(),
                    gwg,
                );
            }
            if want_x {
                let wg = &wd[gi * cout_g * rows..(gi + 1) * cout_g * rows];
                gemm(
                    T::one(),
                    MatRef::new(wg, cout_g, rows).t(),
                    MatRef::new(gg, cout_g, g.out_len),
                    T::zero(),
                    &mut cols,
                );
                let gxb = &mut gx[bi * g.cin * g.len..(bi + 1) * g.cin * g.len];
                col2im1(&cols, &g, spec, gi * cin_g, cin_g, gxb);
            }
        }
    }
    if want_x {
        sink.add(x, Tensor::new(xv.shape(), gx).expect("conv1d gx"));
    }
    if want_w {
        sink.add(w, Tensor::new(wv.shape(), gw).expect("conv1d gw"));
    }
    if let Some(b) = b {
        if sink.wants(b) {
            let mut gbias = vec![T::zero(); g.cout];
            for bi in 0..g.batch {
                for (c, acc) in gbias.iter_mut().enumerate() {
                    let s = (bi * g.cout + c) * g.out_len;
                    *acc += gd[s..s + g.out_len].iter().copied().sum::<T>();
                }
            }
            sink.add(b, Tensor::new(&[g.cout], gbias).expect("conv1d gb"));
        }
    }
}

struct Geom2 {
    batch: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
}

fn geom2(x: &[usize], w: &[usize], b: Option<&[usize]>, spec: &Conv2dSpec) -> Result<Geom2> {
    if x.len() != 4 || w.len() != 4 || x[1] != w[1] || spec.stride.0 == 0 || spec.stride.1 == 0 {
        return Err(Error::shape("conv2d", x, w));
    }
    if let Some(b) = b {
        if b != [w[0]] {
            return Err(Error::shape("conv2d bias", w, b));
        }
    }
    let (oh, ow) = spec
        .output_hw(x[2], x[3], w[2], w[3])
        .ok_or_else(|| Error::shape("conv2d", x, w))?;
    Ok(Geom2 {
        batch: x[0],
        cin: x[1],
        h: x[2],
        w: x[3],
        cout: w[0],
        kh: w[2],
        kw: w[3],
        oh,
        ow,
    })
}

/// In-bounds output column range `[lo, hi)` for kernel offset `k` along one axis.
fn valid_range(out: usize, input: usize, stride: usize, pad: usize, k: usize) -> (usize, usize) {
    let lo = if pad > k { (pad - k).div_ceil(stride) } else { 0 };
    let hi = if input + pad > k { ((input + pad - k - 1) / stride + 1).min(out) } else { 0 };
    (lo.min(hi), hi)
}

/// Walk the im2col layout as contiguous runs. `f(dst, src, len, stride)` gets the
/// input offset of an in-bounds run in `src`, or `None` for a run of padding taps.
fn rows2(g: &Geom2, spec: &Conv2dSpec, mut f: impl FnMut(usize, Option<usize>, usize, usize)) {
    let n_out = g.oh * g.ow;
    let (sy, sx) = spec.stride;
    let (py, px) = spec.padding;
    for c in 0..g.cin {
        for ky in 0..g.kh {
            let (oy_lo, oy_hi) = valid_range(g.oh, g.h, sy, py, ky);
            for kx in 0..g.kw {
                let base = ((c * g.kh + ky) * g.kw + kx) * n_out;
                let (ox_lo, ox_hi) = valid_range(g.ow, g.w, sx, px, kx);
                f(base, None, oy_lo * g.ow, 1);
                for oy in oy_lo..oy_hi {
                    let iy = oy * sy + ky - py;
                    let d = base + oy * g.ow;
                    f(d, None, ox_lo, 1);
                    if ox_hi > ox_lo {
                        let ix = ox_lo * sx + kx - px;
                        f(d + ox_lo, Some((c * g.h + iy) * g.w + ix), ox_hi - ox_lo, sx);
                    }
                    f(d + ox_hi, None, g.ow - ox_hi, 1);
                }
                f(base + oy_hi * g.ow, None, (g.oh - oy_hi) * g.ow, 1);
            }
        }
    }
}

fn im2col2<T: Float>(g: &Geom2, spec: &Conv2dSpec, x: &[T], cols: &mut [T]) {
    rows2(g, spec, |d, s, n, st| {
        let dst = &mut cols[d..d + n];
        match s {
            None => dst.fill(T::zero()),
            Some(s) if st == 1 => dst.copy_from_slice(&x[s..s + n]),
            Some(s) => {
                for (v, &xv) in dst.iter_mut().zip(x[s..].iter().step_by(st)) {
                    *v = xv;
                }
            }
        }
    });
}

fn col2im2<T: Float>(g: &Geom2, spec: &Conv2dSpec, cols: &[T], gx: &mut [T]) {
    rows2(g, spec, |d, s, n, st| {
        let Some(s) = s else { return };
        for (a, &v) in gx[s..].iter_mut().step_by(st).zip(&cols[d..d + n]) {
            *a += v;
        }
    });
}

fn conv2d_forward<T: Float>(x: &Tensor<T>, w: &Tensor<T>, b: Option<&Tensor<T>>, spec: &Conv2dSpec) -> Result<Tensor<T>> {
    let g = geom2(x.shape(), w.shape(), b.map(|t| t.shape()), spec)?;
    let rows = g.cin * g.kh * g.kw;
    let n_out = g.oh * g.ow;
    let in_len = g.cin * g.h * g.w;
    let mut out = vec![T::zero(); g.batch * g.cout * n_out];
    let mut cols = vec![T::zero(); rows * n_out];
    for bi in 0..g.batch {
        let xb = &x.data()[bi * in_len..(bi + 1) * in_len];
        im2col2(&g, spec, xb, &mut cols);
        let ob = &mut out[bi * g.cout * n_out..(bi + 1) * g.cout * n_out];
        gemm(T::one(), MatRef::new(w.data(), g.cout, rows), MatRef::new(&cols, rows, n_out), T::zero(), ob);
        if let Some(b) = b {
            for (c, &bv) in b.data().iter().enumerate() {
                ob[c * n_out..(c + 1) * n_out].iter_mut().for_each(|v| *v += bv);
            }
        }
    }
    Tensor::new(&[g.batch, g.cout, g.oh, g.ow], out)
}

pub(crate) fn conv2d_backward<T: Float>(
    x: Var,
    w: Var,
    b: Option<Var>,
    spec: &Conv2dSpec,
    gout: &Tensor<T>,
    sink: &mut GradSink<'_, T>,
) {
    let (xv, wv) = (sink.value(x).clone(), sink.value(w).clone());
    let g = geom2(xv.shape(), wv.shape(), None, spec).expect("conv2d geometry");
    let rows = g.cin * g.kh * g.kw;
    let n_out = g.oh * g.ow;
    let in_len = g.cin * g.h * g.w;
    let (want_x, want_w) = (sink.wants(x), sink.wants(w));
    let mut gx = vec![T::zero(); if want_x { xv.numel() } else { 0 }];
    let mut gw = vec![T::zero(); if want_w { wv.numel() } else { 0 }];
    let mut cols = vec![T::zero(); rows * n_out];
    let gd = gout.data();
    for bi in 0..g.batch {
        let gb = &gd[bi * g.cout * n_out..(bi + 1) * g.cout * n_out];
        if want_w {
            let xb = &xv.data()[bi * in_len..(bi + 1) * in_len];
            im2col2(&g, spec, xb, &mut cols);
            gemm(
                T::one(),
                MatRef::new(gb, g.cout, n_out),
                MatRef::new(&cols, rows, n_out).t(),
                T::one(),
                &mut gw,
            );
        }
        if want_x {
            gemm(
                T::one(),
                MatRef::new(wv.data(), g.cout, rows).t(),
                MatRef::new(gb, g.cout, n_out),
                T::zero(),
                &mut cols,
            );
            let gxb = &mut gx[bi * in_len..(bi + 1) * in_len];
            col2im2(&g, spec, &cols, gxb);
        }
    }
    if want_x {
        sink.add(x, Tensor::new(xv.shape(), gx).expect("conv2d gx"));
    }
    if want_w {
        sink.add(w, Tensor::new(wv.shape(), gw).expect("conv2d gw"));
    }
    if let Some(b) = b {
        if sink.wants(b) {
            let mut gbias = vec![T::zero(); g.cout];
            for bi in 0..g.batch {
                for (c, acc) in gbias.iter_mut().enumerate() {
                    let s = (bi * g.cout + c) * n_out;
                    *acc += gd[s..s + n_out].iter().copied().sum::<T>();
                }
            }
            sink.add(b, Tensor::new(&[g.cout], gbias).expect("conv2d gb"));
        }
    }
}

pub(crate) fn matmul_backward<T: Float>(a: Var, b: Var, g: &Tensor<T>, sink: &mut GradSink<'_, T>) {
    let (av, bv) = (sink.value(a).clone(), sink.value(b).clone());
    let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
    if sink.wants(a) {
        let mut ga = vec![T::zero(); m * k];
        gemm(T::one(), MatRef::new(g.data(), m, n), MatRef::new(bv.data(), k, n).t(), T::zero(), &mut ga);
        sink.add(a, Tensor::new(&[m, k], ga).expect("matmul ga"));
    }
    if sink.wants(b) {
        let mut gb = vec![T::zero(); k * n];
        gemm(T::one(), MatRef::new(av.data(), m, k).t(), MatRef::new(g.data(), m, n), T::zero(), &mut gb);
        sink.add(b, Tensor::new(&[k, n], gb).expect("matmul gb"));
    }
}

impl<T: Float> Tape<T> {
    /// `[m, k] × [k, n] → [m, n]`.
    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", &sa, &sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![T::zero(); m * n];
        self.with_value(a, |ta| {
            self.with_value(b, |tb| {
                gemm(T::one(), MatRef::new(ta.data(), m, k), MatRef::new(tb.data(), k, n), T::zero(), &mut out)
            })
        });
        let value = Tensor::new(&[m, n], out)?;
        Ok(self.push(value, Op::Matmul { a, b }, self.any_grad(&[a, b])))
    }

    /// `x: [B, Cin, L]`, `w: [Cout, Cin / groups, K]`, `b: [Cout]`.
    pub fn conv1d(&self, x: Var, w: Var, b: Option<Var>, spec: Conv1dSpec) -> Result<Var> {
        let value = self.with_value(x, |tx| {
            self.with_value(w, |tw| match b {
                Some(b) => self.with_value(b, |tb| conv1d_forward(tx, tw, Some(tb), &spec)),
                None => conv1d_forward(tx, tw, None, &spec),
            })
        })?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        Ok(self.push(value, Op::Conv1d { x, w, b, spec }, self.any_grad(&inputs)))
    }

    /// `x: [B, Cin, H, W]`, `w: [Cout, Cin, KH, KW]`, `b: [Cout]`.
    pub fn conv2d(&self, x: Var, w: Var, b: Option<Var>, spec: Conv2dSpec) -> Result<Var> {
        let value = self.with_value(x, |tx| {
            self.with_value(w, |tw| match b {
                Some(b) => self.with_value(b, |tb| conv2d_forward(tx, tw, Some(tb), &spec)),
                None => conv2d_forward(tx, tw, None, &spec),
            })
        })?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        Ok(self.push(value, Op::Conv2d { x, w, b, spec }, self.any_grad(&inputs)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct-sum reference convolution.
    fn naive_conv1d(x: &Tensor<f64>, w: &Tensor<f64>, spec: &Conv1dSpec) -> Vec<f64> {
        let (bsz, cin, len) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let (cout, cin_g, k) = (w.shape()[0], w.shape()[1], w.shape()[2]);
        let cout_g = cout / spec.groups;
        let out_len = spec.output_len(len, k).unwrap();
        let mut out = vec![0.0; bsz * cout * out_len];
        for b in 0..bsz {
            for o in 0..cout {
                let grp = o / cout_g;
                for t in 0..out_len {
                    let mut acc = 0.0;
                    for c in 0..cin_g {
                        let ci = grp * cin_g + c;
                        for j in 0..k {
                            let i = (t * spec.stride + j * spec.dilation) as isize - spec.padding as isize;
                            if i >= 0 && (i as usize) < len {
                                acc += w.data()[(o * cin_g + c) * k + j] * x.data()[(b * cin + ci) * len + i as usize];
                            }
                        }
                    }
                    out[(b * cout + o) * out_len + t] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn conv1d_matches_direct_sum() {
        let specs = [
            Conv1dSpec::same(3),
            Conv1dSpec {
                stride: 2,
                padding: 1,
                dilation: 2,
                groups: 2,
            },
            Conv1dSpec {
                groups: 4,
                ..Conv1dSpec::same(7)
            },
        ];
        for spec in specs {
            let k = if spec.groups == 4 { 7 } else { 3 };
            let x = Tensor::from_fn(&[2, 4, 11], |i| ((i * 37) % 17) as f64 - 8.0);
            let w = Tensor::from_fn(&[4, 4 / spec.groups, k], |i| ((i * 13) % 7) as f64 * 0.25 - 0.7);
            let tape = Tape::<f64>::new();
            let (xv, wv) = (tape.constant(x.clone()), tape.constant(w.clone()));
            let y = tape.conv1d(xv, wv, None, spec).unwrap();
            let got = tape.value(y);
            let want = naive_conv1d(&x, &w, &spec);
            for (a, b) in got.data().iter().zip(&want) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv2d_strided_shape_and_values() {
        let tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::from_fn(&[1, 1, 10, 3], |i| i as f64));
        let w = tape.constant(Tensor::new(&[1, 1, 5, 1], vec![1.0; 5]).unwrap());
        let spec = Conv2dSpec {
            stride: (3, 1),
            padding: (2, 0),
        };
        let y = tape.value(tape.conv2d(x, w, None, spec).unwrap());
        assert_eq!(y.shape(), &[1, 1, 4, 3]);
        // first output row sums input rows 0..=2 (two padded rows)
        assert_eq!(y.data()[0], 0.0 + 3.0 + 6.0);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let tape = Tape::<f32>::new();
        let x = tape.constant(Tensor::zeros(&[1, 3, 8]));
        let w = tape.constant(Tensor::zeros(&[4, 2, 3]));
        let err = tape.conv1d(x, w, None, Conv1dSpec::default()).unwrap_err().to_string();
        assert!(err.contains("conv1d"), "{err}");
        assert!(tape.matmul(x, w).is_err());
    }
}
