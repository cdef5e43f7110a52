//! Adversarial training loop.
//!
//! Each step updates the discriminator on the hinge loss with the generator
//! output detached, then updates the generator on the weighted sum of the
//! amplitude, phase, STFT-spectrum and waveform losses against the freshly
//! updated, frozen discriminator. Both sides use AdamW with a per-epoch
//! exponential learning-rate decay.

mod adamw;
mod checkpoint;
mod data;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use adamw::{AdamW, AdamWState};
pub use checkpoint::{
    checkpoint_bytes, checkpoint_from_bytes, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use data::{make_batch, Batch, CropSampler};

use crate::autodiff::{Tape, Var};
use crate::config::RunConfig;
use crate::discriminator::{Discriminator, SubOutput};
use crate::dsp::{MelFilterbank, StftConfig, StftPlan, AMP_FLOOR};
use crate::error::{Error, Result};
use crate::float::Float;
use crate::generator::{Generator, GeneratorOutput, Preset};
use crate::losses::{
    amplitude_loss, feature_matching_loss, gan_loss_discriminator, gan_loss_generator, generator_total, mel_loss,
    phase_loss, stft_spectrum_loss, GanKind, LossParts, LossReport, LossWeights, MelTransform,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Must be a multiple of the STFT hop.
    pub crop_samples: usize,
    pub lr: f64,
    pub betas: (f64, f64),
    pub weight_decay: f64,
    /// Multiplied into the learning rate once per epoch.
    pub lr_decay: f64,
    pub max_steps: u64,
    pub seed: u64,
    pub preset: Preset,
    /// Steps between checkpoints written by the command-line trainer (0 = only at the end).
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            crop_samples: 8192,
            lr: 2e-4,
            betas: (0.8, 0.99),
            weight_decay: 0.01,
            lr_decay: 0.999,
            max_steps: 1_000_000,
            seed: 1234,
            preset: Preset::Full,
            checkpoint_every: 10_000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, stft: &StftConfig) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.batch_size == 0 {
            return fail("batch_size must be positive".into());
        }
        if self.crop_samples == 0 || self.crop_samples % stft.hop != 0 {
            return fail(format!(
                "crop_samples {} must be a positive multiple of the hop {}",
                self.crop_samples, stft.hop
            ));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return fail(format!("lr must be positive, got {}", self.lr));
        }
        let (b1, b2) = self.betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return fail(format!("betas must lie in [0, 1), got ({b1}, {b2})"));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0 && self.lr * self.weight_decay < 1.0) {
            return fail(format!("invalid weight_decay {}", self.weight_decay));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return fail(format!("lr_decay must lie in (0, 1], got {}", self.lr_decay));
        }
        if self.seed > i64::MAX as u64 {
            return fail("seed must fit in a signed 64-bit integer".into());
        }
        Ok(())
    }

    pub fn optimizer(&self) -> AdamW {
        AdamW {
            beta1: self.betas.0,
            beta2: self.betas.1,
            weight_decay: self.weight_decay,
            ..AdamW::default()
        }
    }

    pub fn lr_at(&self, epoch: u64) -> f64 {
        lr_schedule(self.lr, self.lr_decay, epoch)
    }
}

/// `base · decay^epoch`.
pub fn lr_schedule(base: f64, decay: f64, epoch: u64) -> f64 {
    base * decay.powf(epoch as f64)
}

/// Log-amplitude, phase and real/imaginary spectra of a target waveform, as constants.
#[derive(Debug, Clone, Copy)]
pub struct SpectralTargets {
    pub log_amplitude: Var,
    pub phase: Var,
    pub real: Var,
    pub imag: Var,
}

impl SpectralTargets {
    pub fn new<T: Float>(tape: &Tape<T>, audio: Var, plan: &Arc<StftPlan<T>>) -> Result<Self> {
        let audio = tape.detach(audio);
        let spec = tape.stft(audio, plan)?;
        let s = tape.shape(spec);
        let shape = [s[0], s[2], s[3]];
        let real = tape.reshape(tape.slice(spec, 1, 0, 1)?, &shape)?;
        let imag = tape.reshape(tape.slice(spec, 1, 1, 1)?, &shape)?;
        let mag = tape.complex_abs(real, imag)?;
        let log_amplitude = tape.log(tape.clamp_min(mag, T::lit(AMP_FLOOR)));
        let phase = tape.phi(real, imag)?;
        Ok(SpectralTargets {
            log_amplitude,
            phase,
            real,
            imag,
        })
    }
}

/// Everything the generator loss needs besides the generator itself.
pub struct GeneratorObjective<'a, T: Float> {
    pub discriminator: &'a Discriminator<T>,
    pub mel: &'a MelTransform<T>,
    pub plan: &'a Arc<StftPlan<T>>,
    pub weights: LossWeights,
    pub gan: GanKind,
}

fn scalar<T: Float>(tape: &Tape<T>, v: Var) -> f64 {
    tape.value(v).item().as_f64()
}

fn scores(subs: &[SubOutput]) -> Vec<Var> {
    subs.iter().map(|s| s.score).collect()
}

impl<T: Float> GeneratorObjective<'_, T> {
    /// Weighted generator loss of `out` against the target waveform `audio: [B, L]`.
    pub fn evaluate(&self, tape: &Tape<T>, out: &GeneratorOutput, audio: Var) -> Result<(Var, LossParts)> {
        let target = SpectralTargets::new(tape, audio, self.plan)?;
        let l_a = amplitude_loss(tape, out.log_amplitude, target.log_amplitude)?;
        let l_p = phase_loss(tape, out.phase, target.phase)?;
        let l_s = stft_spectrum_loss(tape, (out.real, out.imag), (target.real, target.imag), self.plan)?;
        let l_mel = mel_loss(tape, self.mel, out.waveform, audio)?;
        let real = self.discriminator.forward(tape, audio)?;
        let fake = self.discriminator.forward(tape, out.waveform)?;
        let l_fm = feature_matching_loss(tape, &real, &fake)?;
        let l_adv = gan_loss_generator(tape, &scores(&fake), self.gan)?;
        let l_w = tape.add(tape.add(l_mel, l_fm)?, l_adv)?;
        let w = &self.weights;
        let mut total = tape.scale(l_a, T::lit(w.amplitude));
        for (term, weight) in [(l_p.total, w.phase), (l_s.total, w.stft), (l_w, w.waveform)] {
            total = tape.add(total, tape.scale(term, T::lit(weight)))?;
        }
        let parts = LossParts {
            amplitude: scalar(tape, l_a),
            instantaneous_phase: scalar(tape, l_p.instantaneous),
            group_delay: scalar(tape, l_p.group_delay),
            phase_time_difference: scalar(tape, l_p.time_difference),
            consistency: scalar(tape, l_s.consistency),
            real_l1: scalar(tape, l_s.real_l1),
            imag_l1: scalar(tape, l_s.imag_l1),
            mel: scalar(tape, l_mel),
            feature_matching: scalar(tape, l_fm),
            adversarial: scalar(tape, l_adv),
        };
        Ok((total, parts))
    }
}

/// Models, optimizer states and position of a run; what a checkpoint holds.
pub struct TrainState<T: Float> {
    pub config: RunConfig,
    pub generator: Generator<T>,
    pub discriminator: Discriminator<T>,
    pub g_opt: AdamWState<T>,
    pub d_opt: AdamWState<T>,
    pub step: u64,
    pub epoch: u64,
    /// Position inside the current epoch.
    pub cursor: u64,
}

impl<T: Float> TrainState<T> {
    /// Fresh models; the generator is seeded with `seed`, the discriminator with `seed + 1`.
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let seed = config.train.seed;
        let generator = Generator::new(config.generator_config(), seed)?;
        let discriminator = Discriminator::new(config.discriminator_config(), seed.wrapping_add(1))?;
        Ok(TrainState {
            g_opt: AdamWState::new(generator.params()),
            d_opt: AdamWState::new(discriminator.params()),
            config,
            generator,
            discriminator,
            step: 0,
            epoch: 0,
            cursor: 0,
        })
    }
}

/// Runs training steps over an in-memory set of clips.
pub struct Trainer<T: Float> {
    state: TrainState<T>,
    clips: Vec<Vec<T>>,
    sampler: CropSampler,
    fb: MelFilterbank,
    mel: MelTransform<T>,
}

impl<T: Float> Trainer<T> {
    pub fn new(config: RunConfig, clips: Vec<Vec<T>>) -> Result<Self> {
        Self::from_state(TrainState::new(config)?, clips)
    }

    /// Continue from a saved state; sampling resumes where it stopped.
    pub fn from_state(state: TrainState<T>, clips: Vec<Vec<T>>) -> Result<Self> {
        let cfg = &state.config;
        let lens = clips.iter().map(Vec::len).collect();
        let sampler = CropSampler::resume(cfg.train.seed, lens, state.epoch, state.cursor as usize)?;
        let fb = cfg.filterbank()?;
        let mel = MelTransform::new(&fb, Arc::clone(state.generator.plan()))?;
        Ok(Trainer {
            state,
            clips,
            sampler,
            fb,
            mel,
        })
    }

    pub fn state(&self) -> &TrainState<T> {
        &self.state
    }

    pub fn into_state(self) -> TrainState<T> {
        self.state
    }

    pub fn generator(&self) -> &Generator<T> {
        &self.state.generator
    }

    pub fn discriminator(&self) -> &Discriminator<T> {
        &self.state.discriminator
    }

    pub fn step_count(&self) -> u64 {
        self.state.step
    }

    pub fn epoch(&self) -> u64 {
        self.state.epoch
    }

    /// Learning rate of the next step.
    pub fn lr(&self) -> f64 {
        self.state.config.train.lr_at(self.state.epoch)
    }

    /// Draw the next batch and advance the sampler.
    pub fn next_batch(&mut self) -> Result<Batch<T>> {
        let t = &self.state.config.train;
        let picks = self.sampler.next(t.batch_size, t.crop_samples, self.state.config.stft.hop);
        self.state.epoch = self.sampler.epoch;
        self.state.cursor = self.sampler.cursor as u64;
        make_batch(&self.clips, &picks, t.crop_samples, &self.fb, &self.state.config.stft)
    }

    /// One full step on the next batch.
    pub fn step(&mut self) -> Result<LossReport> {
        let lr = self.lr();
        let batch = self.next_batch()?;
        self.train_step_with_lr(&batch, lr)
    }

    /// Discriminator update followed by generator update on `batch`.
    pub fn train_step(&mut self, batch: &Batch<T>) -> Result<LossReport> {
        let lr = self.lr();
        self.train_step_with_lr(batch, lr)
    }

    fn train_step_with_lr(&mut self, batch: &Batch<T>, lr: f64) -> Result<LossReport> {
        let tape = Tape::new();
        let mel = tape.constant(batch.mel.clone());
        let audio = tape.constant(batch.audio.clone());
        let out = self.state.generator.forward(&tape, mel)?;
        let l_d = self.discriminator_phase(&tape, out.waveform, audio, lr)?;

        let st = &mut self.state;
        st.discriminator.params_mut().set_frozen(true);
        let objective = GeneratorObjective {
            discriminator: &st.discriminator,
            mel: &self.mel,
            plan: st.generator.plan(),
            weights: st.config.loss,
            gan: st.config.gan,
        };
        let evaluated = objective.evaluate(&tape, &out, audio);
        st.discriminator.params_mut().set_frozen(false);
        let (total, parts) = evaluated?;
        let mut report = generator_total(&parts, &st.config.loss);
        report.discriminator = l_d;
        if let Some(name) = report.first_non_finite() {
            return Err(Error::NumericAbort(name.into()));
        }
        let grads = tape.backward(total)?;
        let g = st.generator.params_mut();
        g.zero_grad();
        g.accumulate(&grads);
        st.g_opt.update(g, &st.config.train.optimizer(), lr)?;
        st.step += 1;
        Ok(report)
    }

    /// Discriminator-only update; the generator is left untouched. Returns `L_D`.
    pub fn discriminator_step(&mut self, batch: &Batch<T>) -> Result<f64> {
        let lr = self.lr();
        let tape = Tape::new();
        let mel = tape.constant(batch.mel.clone());
        let audio = tape.constant(batch.audio.clone());
        let out = self.state.generator.forward(&tape, mel)?;
        self.discriminator_phase(&tape, out.waveform, audio, lr)
    }

    fn discriminator_phase(&mut self, tape: &Tape<T>, fake: Var, audio: Var, lr: f64) -> Result<f64> {
        let st = &mut self.state;
        let fake = tape.detach(fake);
        let real_out = st.discriminator.forward(tape, audio)?;
        let fake_out = st.discriminator.forward(tape, fake)?;
        let l_d = gan_loss_discriminator(tape, &scores(&real_out), &scores(&fake_out), st.config.gan)?;
        let value = scalar(tape, l_d);
        if !value.is_finite() {
            return Err(Error::NumericAbort("L_D".into()));
        }
        let grads = tape.backward(l_d)?;
        let g = st.generator.params_mut();
        g.zero_grad();
        g.accumulate(&grads);
        if g.grad_norm_sq() != 0.0 {
            return Err(Error::InvalidArgument("generator received gradient from the discriminator loss".into()));
        }
        let d = st.discriminator.params_mut();
        d.zero_grad();
        d.accumulate(&grads);
        st.d_opt.update(d, &st.config.train.optimizer(), lr)?;
        Ok(value)
    }

    /// L1 log-mel distance between `audio` and its resynthesis from its own mel.
    pub fn mel_loss_on(&self, audio: &[T]) -> Result<f64> {
        let (clip, resynth) = self.analysis_synthesis(audio)?;
        let tape = Tape::no_grad();
        let n = clip.len();
        let a = tape.constant(crate::autodiff::Tensor::new(&[1, n], resynth)?);
        let b = tape.constant(crate::autodiff::Tensor::new(&[1, n], clip)?);
        Ok(scalar(&tape, mel_loss(&tape, &self.mel, a, b)?))
    }

    /// `(reference, resynthesis)`: `audio` zero-padded to a whole number of
    /// frames and the generator output for its mel-spectrogram.
    pub fn analysis_synthesis(&self, audio: &[T]) -> Result<(Vec<T>, Vec<T>)> {
        let hop = self.state.config.stft.hop;
        let mut clip = audio.to_vec();
        clip.resize(audio.len().div_ceil(hop) * hop, T::zero());
        let mel = crate::dsp::mel_spectrogram(&clip, &self.fb, &self.state.config.stft)?;
        let out = self.state.generator.generate(&mel)?;
        Ok((clip, out))
    }
}

#[cfg(test)]
mod tests;
