//! Short-time Fourier analysis and overlap-add synthesis.
//!
//! Frames are centered: frame `t` is centered on sample `t * hop` of the
//! unpadded signal, the signal is extended by reflection on both sides, and a
//! signal of `len` samples yields `ceil(len / hop)` frames. The inverse
//! returns exactly `frames * hop` samples.
//!
//! Besides the forward transforms, [`StftPlan`] exposes the adjoints of both
//! linear maps. The autodiff engine uses them as backward passes.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::dsp::spectrogram::ComplexSpectrogram;
use crate::error::{Error, Result};
use crate::float::Float;

/// Analysis window shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    /// Periodic Hann window.
    #[default]
    Hann,
    Rectangular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StftConfig {
    pub n_fft: usize,
    pub hop: usize,
    pub win_length: usize,
    #[serde(default)]
    pub window: Window,
    #[serde(default = "default_centered")]
    pub centered: bool,
}

fn default_centered() -> bool {
    true
}

impl Default for StftConfig {
    fn default() -> Self {
        StftConfig {
            n_fft: 1024,
            hop: 256,
            win_length: 1024,
            window: Window::Hann,
            centered: true,
        }
    }
}

impl StftConfig {
    pub fn new(n_fft: usize, hop: usize, win_length: usize) -> Self {
        StftConfig {
            n_fft,
            hop,
            win_length,
            ..Default::default()
        }
    }

    pub fn bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// Number of frames produced for a signal of `len` samples.
    pub fn frames_for(&self, len: usize) -> usize {
        if self.centered {
            len.div_ceil(self.hop)
        } else if len < self.n_fft {
            0
        } else {
            1 + (len - self.n_fft) / self.hop
        }
    }

    /// Number of samples produced by the inverse for `frames` frames.
    pub fn samples_for(&self, frames: usize) -> usize {
        if self.centered {
            frames * self.hop
        } else if frames == 0 {
            0
        } else {
            (frames - 1) * self.hop + self.n_fft
        }
    }

    /// Window samples zero-padded (centered) to `n_fft`.
    pub fn window_samples(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.n_fft];
        let offset = (self.n_fft - self.win_length) / 2;
        for n in 0..self.win_length {
            w[offset + n] = match self.window {
                Window::Hann => {
                    let x = 2.0 * std::f64::consts::PI * n as f64 / self.win_length as f64;
                    0.5 - 0.5 * x.cos()
                }
                Window::Rectangular => 1.0,
            };
        }
        w
    }

    pub fn validate(&self) -> Result<()> {
        if self.hop == 0 || self.n_fft < 2 || self.n_fft % 2 != 0 {
            return Err(Error::InvalidStft(format!(
                "n_fft must be even and >= 2, hop > 0 (n_fft={}, hop={})",
                self.n_fft, self.hop
            )));
        }
        if !(self.hop <= self.win_length && self.win_length <= self.n_fft) {
            return Err(Error::InvalidStft(format!(
                "require hop <= win_length <= n_fft (hop={}, win_length={}, n_fft={})",
                self.hop, self.win_length, self.n_fft
            )));
        }
        // constant overlap-add over one hop period
        let w = self.window_samples();
        let sums: Vec<f64> = (0..self.hop)
            .map(|n| w.iter().skip(n).step_by(self.hop).sum())
            .collect();
        let first = sums[0];
        let max = sums.iter().cloned().fold(f64::MIN, f64::max);
        if first <= 0.0 || sums.iter().any(|s| (s - first).abs() > 1e-9 * max) {
            return Err(Error::InvalidStft(format!(
                "{:?} window of length {} is not COLA at hop {}",
                self.window, self.win_length, self.hop
            )));
        }
        Ok(())
    }

    fn pad(&self) -> usize {
        if self.centered {
            self.n_fft / 2
        } else {
            0
        }
    }
}

/// Mirror an index into `[0, len)` (reflection without repeating the edge sample).
pub(crate) fn reflect_index(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let mut r = i.rem_euclid(period);
    if r >= len as isize {
        r = period - r;
    }
    r as usize
}

/// Precomputed window, FFT plans and helpers for one [`StftConfig`].
pub struct StftPlan<T: Float> {
    cfg: StftConfig,
    window: Vec<T>,
    fwd: Arc<dyn Fft<T>>,
    inv: Arc<dyn Fft<T>>,
}

impl<T: Float> StftPlan<T> {
    pub fn new(cfg: &StftConfig) -> Result<Self> {
        cfg.validate()?;
        let mut planner = FftPlanner::<T>::new();
        Ok(StftPlan {
            cfg: *cfg,
            window: cfg.window_samples().into_iter().map(T::lit).collect(),
            fwd: planner.plan_fft_forward(cfg.n_fft),
            inv: planner.plan_fft_inverse(cfg.n_fft),
        })
    }

    pub fn config(&self) -> &StftConfig {
        &self.cfg
    }

    /// Source sample index for position `p` of the padded signal.
    fn source(&self, p: usize, len: usize) -> Option<usize> {
        let i = p as isize - self.cfg.pad() as isize;
        if self.cfg.centered {
            Some(reflect_index(i, len))
        } else if (0..len as isize).contains(&i) {
            Some(i as usize)
        } else {
            None
        }
    }

    /// Forward transform of one signal into `frames × bins` real/imag buffers.
    pub fn forward_into(&self, x: &[T], re: &mut [T], im: &mut [T]) {
        let n = self.cfg.n_fft;
        let bins = self.cfg.bins();
        let frames = self.cfg.frames_for(x.len());
        debug_assert_eq!(re.len(), frames * bins);
        let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
        let mut scratch = vec![Complex::new(T::zero(), T::zero()); self.fwd.get_inplace_scratch_len()];
        for t in 0..frames {
            for (k, slot) in buf.iter_mut().enumerate() {
                let v = self.source(t * self.cfg.hop + k, x.len()).map_or(T::zero(), |s| x[s]);
                *slot = Complex::new(v * self.window[k], T::zero());
            }
            self.fwd.process_with_scratch(&mut buf, &mut scratch);
            re[t * bins..(t + 1) * bins]
                .iter_mut()
                .zip(&buf[..bins])
                .for_each(|(r, c)| *r = c.re);
            im[t * bins..(t + 1) * bins]
                .iter_mut()
                .zip(&buf[..bins])
                .for_each(|(r, c)| *r = c.im);
        }
    }

    /// Adjoint of [`forward_into`](Self::forward_into): accumulates into `gx` (length = signal length).
    pub fn forward_adjoint(&self, g_re: &[T], g_im: &[T], gx: &mut [T]) {
        let n = self.cfg.n_fft;
        let bins = self.cfg.bins();
        let len = gx.len();
        let frames = self.cfg.frames_for(len);
        let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
        let mut scratch = vec![Complex::new(T::zero(), T::zero()); self.inv.get_inplace_scratch_len()];
        for t in 0..frames {
            buf.iter_mut().for_each(|c| *c = Complex::new(T::zero(), T::zero()));
            for k in 0..bins {
                buf[k] = Complex::new(g_re[t * bins + k], g_im[t * bins + k]);
            }
            // unnormalized inverse: sum_k G_k e^{+i 2 pi k n / N}
            self.inv.process_with_scratch(&mut buf, &mut scratch);
            for (k, c) in buf.iter().enumerate() {
                if let Some(s) = self.source(t * self.cfg.hop + k, len) {
                    gx[s] += c.re * self.window[k];
                }
            }
        }
    }

    /// Window-square overlap envelope over the padded output.
    fn envelope(&self, frames: usize) -> Vec<T> {
        let n = self.cfg.n_fft;
        let total = (frames.max(1) - 1) * self.cfg.hop + n;
        let mut env = vec![T::zero(); total];
        for t in 0..frames {
            for k in 0..n {
                env[t * self.cfg.hop + k] += self.window[k] * self.window[k];
            }
        }
        env
    }

    /// Overlap-add inverse of `frames × bins` buffers into `out` (length `samples_for(frames)`).
    pub fn inverse_into(&self, re: &[T], im: &[T], frames: usize, out: &mut [T]) {
        let n = self.cfg.n_fft;
        let bins = self.cfg.bins();
        let pad = self.cfg.pad();
        let env = self.envelope(frames);
        let mut acc = vec![T::zero(); env.len()];
        let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
        let mut scratch = vec![Complex::new(T::zero(), T::zero()); self.inv.get_inplace_scratch_len()];
        let scale = T::one() / T::from_usize(n).unwrap();
        for t in 0..frames {
            for k in 0..bins {
                let edge = k == 0 || k == bins - 1;
                let imag = if edge { T::zero() } else { im[t * bins + k] };
                buf[k] = Complex::new(re[t * bins + k], imag);
                if !edge {
                    buf[n - k] = Complex::new(re[t * bins + k], -imag);
                }
            }
            self.inv.process_with_scratch(&mut buf, &mut scratch);
            for k in 0..n {
                acc[t * self.cfg.hop + k] += buf[k].re * scale * self.window[k];
            }
        }
        let tiny = T::lit(1e-11);
        for (i, o) in out.iter_mut().enumerate() {
            let e = env.get(pad + i).copied().unwrap_or_else(T::zero);
            *o = if e > tiny { acc[pad + i] / e } else { T::zero() };
        }
    }

    /// Adjoint of [`inverse_into`](Self::inverse_into): accumulates into `g_re`, `g_im`.
    pub fn inverse_adjoint(&self, g_out: &[T], frames: usize, g_re: &mut [T], g_im: &mut [T]) {
        let n = self.cfg.n_fft;
        let bins = self.cfg.bins();
        let pad = self.cfg.pad();
        let env = self.envelope(frames);
        let mut g_acc = vec![T::zero(); env.len()];
        let tiny = T::lit(1e-11);
        for (i, g) in g_out.iter().enumerate() {
            let e = env.get(pad + i).copied().unwrap_or_else(T::zero);
            if e > tiny {
                g_acc[pad + i] = *g / e;
            }
        }
        let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
        let mut scratch = vec![Complex::new(T::zero(), T::zero()); self.fwd.get_inplace_scratch_len()];
        let nf = T::from_usize(n).unwrap();
        let two = T::lit(2.0);
        for t in 0..frames {
            for k in 0..n {
                buf[k] = Complex::new(g_acc[t * self.cfg.hop + k] * self.window[k], T::zero());
            }
            self.fwd.process_with_scratch(&mut buf, &mut scratch);
            for k in 0..bins {
                let edge = k == 0 || k == bins - 1;
                let c = if edge { T::one() } else { two } / nf;
                g_re[t * bins + k] += c * buf[k].re;
                if !edge {
                    g_im[t * bins + k] += c * buf[k].im;
                }
            }
        }
    }
}

/// Complex STFT of `samples`.
pub fn stft<T: Float>(samples: &[T], cfg: &StftConfig) -> Result<ComplexSpectrogram<T>> {
    if samples.is_empty() {
        return Err(Error::EmptyWaveform);
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("stft input".into()));
    }
    let plan = StftPlan::new(cfg)?;
    let frames = cfg.frames_for(samples.len());
    if frames == 0 {
        return Err(Error::TooShort {
            len: samples.len(),
            min: cfg.n_fft,
        });
    }
    let bins = cfg.bins();
    let mut re = vec![T::zero(); frames * bins];
    let mut im = vec![T::zero(); frames * bins];
    plan.forward_into(samples, &mut re, &mut im);
    ComplexSpectrogram::from_parts(frames, bins, re, im)
}

/// Overlap-add inverse STFT with window-square normalization.
pub fn istft<T: Float>(spec: &ComplexSpectrogram<T>, cfg: &StftConfig) -> Result<Vec<T>> {
    if spec.bins() != cfg.bins() {
        return Err(Error::shape("istft", &[spec.frames(), spec.bins()], &[spec.frames(), cfg.bins()]));
    }
    if spec.frames() == 0 {
        return Err(Error::InvalidArgument("istft of zero frames".into()));
    }
    let plan = StftPlan::new(cfg)?;
    let mut out = vec![T::zero(); cfg.samples_for(spec.frames())];
    plan.inverse_into(spec.real(), spec.imag(), spec.frames(), &mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reflect_index_mirrors_without_repeating_edges() {
        let got: Vec<usize> = (-4..9).map(|i| reflect_index(i, 4)).collect();
        assert_eq!(got, vec![2, 3, 2, 1, 0, 1, 2, 3, 2, 1, 0, 1, 2]);
        assert_eq!(reflect_index(-7, 1), 0);
    }

    #[test]
    fn config_validation() {
        assert!(StftConfig::default().validate().is_ok());
        assert!(StftConfig::new(1024, 2048, 1024).validate().is_err());
        assert!(StftConfig::new(1024, 256, 2048).validate().is_err());
        // Hann at hop = 3/4 window is not COLA
        assert!(StftConfig::new(1024, 768, 1024).validate().is_err());
        let rect = StftConfig {
            window: Window::Rectangular,
            ..Default::default()
        };
        assert!(rect.validate().is_ok());
    }

    #[test]
    fn frame_counts() {
        let cfg = StftConfig::default();
        assert_eq!(cfg.frames_for(8192), 32);
        assert_eq!(cfg.frames_for(8193), 33);
        assert_eq!(cfg.frames_for(1), 1);
        assert_eq!(cfg.samples_for(32), 8192);
    }

    #[test]
    fn empty_and_non_finite_inputs_are_rejected() {
        let cfg = StftConfig::default();
        assert!(matches!(stft::<f64>(&[], &cfg), Err(Error::EmptyWaveform)));
        assert!(matches!(stft(&[0.0, f64::NAN], &cfg), Err(Error::NonFinite(_))));
    }

    #[test]
    fn istft_rejects_bin_mismatch() {
        let spec = ComplexSpectrogram::<f64>::zeros(2, 257);
        assert!(istft(&spec, &StftConfig::default()).is_err());
    }

    /// <A x, y> == <x, A^T y> for both transforms.
    #[test]
    fn adjoints_satisfy_inner_product_identity() {
        let cfg = StftConfig::new(64, 16, 64);
        let plan = StftPlan::<f64>::new(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &len in &[1usize, 5, 40, 127, 160] {
            let frames = cfg.frames_for(len);
            let bins = cfg.bins();
            let x: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let yr: Vec<f64> = (0..frames * bins).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let yi: Vec<f64> = (0..frames * bins).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut ar = vec![0.0; frames * bins];
            let mut ai = vec![0.0; frames * bins];
            plan.forward_into(&x, &mut ar, &mut ai);
            let lhs: f64 = ar.iter().zip(&yr).map(|(a, b)| a * b).sum::<f64>()
                + ai.iter().zip(&yi).map(|(a, b)| a * b).sum::<f64>();
            let mut gx = vec![0.0; len];
            plan.forward_adjoint(&yr, &yi, &mut gx);
            let rhs: f64 = gx.iter().zip(&x).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()), "stft len {len}: {lhs} vs {rhs}");

            let samples = cfg.samples_for(frames);
            let z: Vec<f64> = (0..samples).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut w = vec![0.0; samples];
            plan.inverse_into(&yr, &yi, frames, &mut w);
            let lhs: f64 = w.iter().zip(&z).map(|(a, b)| a * b).sum();
            let mut gr = vec![0.0; frames * bins];
            let mut gi = vec![0.0; frames * bins];
            plan.inverse_adjoint(&z, frames, &mut gr, &mut gi);
            let rhs: f64 = gr.iter().zip(&yr).map(|(a, b)| a * b).sum::<f64>()
                + gi.iter().zip(&yi).map(|(a, b)| a * b).sum::<f64>();
            assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()), "istft len {len}: {lhs} vs {rhs}");
        }
    }
}
