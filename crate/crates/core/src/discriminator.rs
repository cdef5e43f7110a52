//! Adversarial ensemble: multi-period (MPD) and multi-resolution (MRD)
//! sub-discriminators. Every sub returns its score map and the output of
//! each of its convolutions for feature matching.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Conv2dSpec, ParamStore, Tape, Var};
use crate::dsp::{StftConfig, StftPlan};
use crate::error::{Error, Result};
use crate::float::Float;
use crate::generator::Preset;
use crate::nn::Conv2d;

/// Leaky-ReLU slope used throughout the discriminators.
pub const LEAKY_SLOPE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorConfig {
    pub periods: Vec<usize>,
    /// `(n_fft, hop, win_length)` per MRD sub.
    pub resolutions: Vec<(usize, usize, usize)>,
    /// Output channels of the five strided MPD convolutions.
    pub mpd_channels: [usize; 5],
    /// Output channels of the five MRD convolutions.
    pub mrd_channels: [usize; 5],
}

impl DiscriminatorConfig {
    pub const PERIODS: [usize; 5] = [2, 3, 5, 7, 11];
    pub const RESOLUTIONS: [(usize, usize, usize); 3] = [(512, 128, 512), (1024, 256, 1024), (2048, 512, 2048)];

    pub fn preset(preset: Preset) -> Self {
        let (mpd_channels, mrd_channels) = match preset {
            Preset::Full => ([32, 128, 512, 1024, 1024], [32, 64, 128, 256, 512]),
            Preset::Desk => ([8, 16, 32, 32, 32], [8, 8, 8, 8, 8]),
        };
        DiscriminatorConfig {
            periods: Self::PERIODS.to_vec(),
            resolutions: Self::RESOLUTIONS.to_vec(),
            mpd_channels,
            mrd_channels,
        }
    }

    /// Number of sub-discriminators.
    pub fn len(&self) -> usize {
        self.periods.len() + self.resolutions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Shortest accepted waveform: the largest MRD window.
    pub fn min_samples(&self) -> usize {
        self.resolutions.iter().map(|r| r.2).max().unwrap_or(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Config("discriminator ensemble is empty".into()));
        }
        if self.periods.iter().any(|&p| p == 0) {
            return Err(Error::Config("MPD periods must be positive".into()));
        }
        for &(n_fft, hop, win) in &self.resolutions {
            StftConfig::new(n_fft, hop, win).validate()?;
        }
        if self.mpd_channels.contains(&0) || self.mrd_channels.contains(&0) {
            return Err(Error::Config("discriminator channels must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct ConvStack {
    convs: Vec<Conv2d>,
    post: Conv2d,
}

impl ConvStack {
    /// Returns `(score, features)`; features are every conv output in order.
    fn forward<T: Float>(&self, tape: &Tape<T>, store: &ParamStore<T>, mut h: Var) -> Result<(Var, Vec<Var>)> {
        let mut features = Vec::with_capacity(self.convs.len() + 1);
        for conv in &self.convs {
            h = tape.leaky_relu(conv.forward(tape, store, h)?, T::lit(LEAKY_SLOPE));
            features.push(h);
        }
        let score = self.post.forward(tape, store, h)?;
        features.push(score);
        Ok((score, features))
    }
}

fn mpd_stack<T: Float>(store: &mut ParamStore<T>, name: &str, ch: &[usize; 5], rng: &mut ChaCha8Rng) -> ConvStack {
    let mut convs = Vec::new();
    let mut cin = 1;
    for (i, &cout) in ch.iter().enumerate() {
        let stride = if i < 4 { 3 } else { 1 };
        let spec = Conv2dSpec {
            stride: (stride, 1),
            padding: (2, 0),
        };
        convs.push(Conv2d::new(store, &format!("{name}.convs.{i}"), (cin, cout), (5, 1), spec, rng));
        cin = cout;
    }
    let post_spec = Conv2dSpec {
        stride: (1, 1),
        padding: (1, 0),
    };
    let post = Conv2d::new(store, &format!("{name}.post"), (cin, 1), (3, 1), post_spec, rng);
    ConvStack { convs, post }
}

fn mrd_stack<T: Float>(store: &mut ParamStore<T>, name: &str, ch: &[usize; 5], rng: &mut ChaCha8Rng) -> ConvStack {
    let mut convs = Vec::new();
    let mut cin = 1;
    for (i, &cout) in ch.iter().enumerate() {
        let (kernel, spec) = match i {
            0 => ((3, 9), Conv2dSpec { stride: (1, 1), padding: (1, 4) }),
            1..=3 => ((3, 9), Conv2dSpec { stride: (1, 2), padding: (1, 4) }),
            _ => ((3, 3), Conv2dSpec { stride: (1, 1), padding: (1, 1) }),
        };
        convs.push(Conv2d::new(store, &format!("{name}.convs.{i}"), (cin, cout), kernel, spec, rng));
        cin = cout;
    }
    let post_spec = Conv2dSpec {
        stride: (1, 1),
        padding: (1, 1),
    };
    let post = Conv2d::new(store, &format!("{name}.post"), (cin, 1), (3, 3), post_spec, rng);
    ConvStack { convs, post }
}

/// Score map and per-layer features of one sub-discriminator.
#[derive(Debug, Clone)]
pub struct SubOutput {
    pub score: Var,
    pub features: Vec<Var>,
}

/// The full MPD + MRD ensemble with its parameters.
pub struct Discriminator<T: Float> {
    cfg: DiscriminatorConfig,
    store: ParamStore<T>,
    mpd: Vec<ConvStack>,
    mrd: Vec<ConvStack>,
    plans: Vec<Arc<StftPlan<T>>>,
}

impl<T: Float> Discriminator<T> {
    pub fn new(cfg: DiscriminatorConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let mpd = cfg
            .periods
            .iter()
            .map(|p| mpd_stack(&mut store, &format!("mpd.p{p}"), &cfg.mpd_channels, &mut rng))
            .collect();
        let mrd = cfg
            .resolutions
            .iter()
            .map(|r| mrd_stack(&mut store, &format!("mrd.n{}", r.0), &cfg.mrd_channels, &mut rng))
            .collect();
        let plans = cfg
            .resolutions
            .iter()
            .map(|&(n, h, w)| StftPlan::new(&StftConfig::new(n, h, w)).map(Arc::new))
            .collect::<Result<_>>()?;
        Ok(Discriminator {
            cfg,
            store,
            mpd,
            mrd,
            plans,
        })
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    /// Number of conv layers (= feature count) of each sub, in ensemble order.
    pub fn layers_per_sub(&self) -> Vec<usize> {
        self.mpd.iter().chain(&self.mrd).map(|s| s.convs.len() + 1).collect()
    }

    fn check_len(&self, tape: &Tape<T>, x: Var) -> Result<(usize, usize)> {
        let s = tape.shape(x);
        if s.len() != 2 {
            return Err(Error::shape("discriminator input", &s, &[0, 0]));
        }
        let min = self.cfg.min_samples();
        if s[1] < min {
            return Err(Error::TooShort { len: s[1], min });
        }
        Ok((s[0], s[1]))
    }

    /// `[B, L]` zero-padded to a multiple of `period` and folded to `[B, 1, L/p, p]`.
    pub fn mpd_input(&self, tape: &Tape<T>, x: Var, period: usize) -> Result<Var> {
        let (b, len) = self.check_len(tape, x)?;
        let padded = len.div_ceil(period) * period;
        let x = if padded > len { tape.pad(x, 1, 0, padded - len)? } else { x };
        tape.reshape(x, &[b, 1, padded / period, period])
    }

    /// Amplitude spectrogram `[B, 1, frames, bins]` of MRD sub `index`.
    pub fn mrd_input(&self, tape: &Tape<T>, x: Var, index: usize) -> Result<Var> {
        let (b, _) = self.check_len(tape, x)?;
        let plan = &self.plans[index];
        let spec = tape.stft(x, plan)?;
        let s = tape.shape(spec);
        let (bins, frames) = (s[2], s[3]);
        let re = tape.reshape(tape.slice(spec, 1, 0, 1)?, &[b, bins, frames])?;
        let im = tape.reshape(tape.slice(spec, 1, 1, 1)?, &[b, bins, frames])?;
        let mag = tape.complex_abs(re, im)?;
        let mag = tape.permute(mag, &[0, 2, 1])?;
        tape.reshape(mag, &[b, 1, frames, bins])
    }

    /// Run every sub-discriminator on `x: [B, L]`; MPD subs first, then MRD subs.
    pub fn forward(&self, tape: &Tape<T>, x: Var) -> Result<Vec<SubOutput>> {
        self.check_len(tape, x)?;
        let mut out = Vec::with_capacity(self.cfg.len());
        for (stack, &p) in self.mpd.iter().zip(&self.cfg.periods) {
            let h = self.mpd_input(tape, x, p)?;
            let (score, features) = stack.forward(tape, &self.store, h)?;
            out.push(SubOutput { score, features });
        }
        for (i, stack) in self.mrd.iter().enumerate() {
            let h = self.mrd_input(tape, x, i)?;
            let (score, features) = stack.forward(tape, &self.store, h)?;
            out.push(SubOutput { score, features });
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;
    use rand::Rng;

    fn wave(len: usize, seed: u64) -> Tensor<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(&[1, len], |_| rng.gen_range(-0.5..0.5))
    }

    #[test]
    fn ensemble_has_eight_subs_with_full_feature_lists() {
        let d = Discriminator::<f32>::new(DiscriminatorConfig::preset(Preset::Desk), 0).unwrap();
        let tape = Tape::no_grad();
        let x = tape.constant(wave(8192, 1));
        let out = d.forward(&tape, x).unwrap();
        assert_eq!(out.len(), 8);
        for (sub, layers) in out.iter().zip(d.layers_per_sub()) {
            assert_eq!(sub.features.len(), layers);
            assert_eq!(layers, 6);
            assert_eq!(*sub.features.last().unwrap(), sub.score);
            assert!(tape.value(sub.score).all_finite());
        }
    }

    #[test]
    fn deterministic_scores() {
        let d = Discriminator::<f32>::new(DiscriminatorConfig::preset(Preset::Desk), 3).unwrap();
        let run = || {
            let tape = Tape::no_grad();
            let x = tape.constant(wave(4096, 2));
            let out = d.forward(&tape, x).unwrap();
            out.iter().map(|s| tape.value(s.score)).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn too_short_input_names_minimum() {
        let d = Discriminator::<f32>::new(DiscriminatorConfig::preset(Preset::Desk), 0).unwrap();
        let tape = Tape::no_grad();
        let x = tape.constant(wave(1000, 1));
        match d.forward(&tape, x) {
            Err(Error::TooShort { len, min }) => assert_eq!((len, min), (1000, 2048)),
            other => panic!("unexpected {:?}", other.map(|v| v.len())),
        }
    }

    #[test]
    fn mpd_folds_with_zero_padding() {
        let d = Discriminator::<f64>::new(DiscriminatorConfig::preset(Preset::Desk), 0).unwrap();
        let tape = Tape::no_grad();
        let x = tape.constant(Tensor::from_fn(&[1, 2050], |i| i as f64 + 1.0));
        let h = tape.value(d.mpd_input(&tape, x, 3).unwrap());
        assert_eq!(h.shape(), &[1, 1, 684, 3]);
        assert_eq!(&h.data()[..3], &[1.0, 2.0, 3.0]);
        assert_eq!(&h.data()[2049..], &[2050.0, 0.0, 0.0]);
    }

    #[test]
    fn mrd_input_ignores_sign() {
        let d = Discriminator::<f64>::new(DiscriminatorConfig::preset(Preset::Desk), 0).unwrap();
        let tape = Tape::no_grad();
        let w = wave(4096, 5).cast::<f64>();
        let x = tape.constant(w.clone());
        let nx = tape.constant(w.map(|v| -v));
        for i in 0..3 {
            let a = tape.value(d.mrd_input(&tape, x, i).unwrap());
            let b = tape.value(d.mrd_input(&tape, nx, i).unwrap());
            assert_eq!(a, b);
        }
    }
}
