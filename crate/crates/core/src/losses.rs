//! Training objectives: amplitude, phase, STFT-spectrum and waveform losses,
//! the hinge GAN losses and their weighted combination.
//!
//! Spectra are `[B, bins, frames]` tensors on a [`Tape`].

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::discriminator::SubOutput;
use crate::dsp::{MelFilterbank, StftPlan, AMP_FLOOR};
use crate::error::{Error, Result};
use crate::float::Float;

/// Weights of the four generator loss groups.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub amplitude: f64,
    pub phase: f64,
    pub stft: f64,
    pub waveform: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            amplitude: 45.0,
            phase: 100.0,
            stft: 20.0,
            waveform: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.amplitude, self.phase, self.stft, self.waveform];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config(format!("loss weights must be finite and >= 0: {all:?}")));
        }
        Ok(())
    }
}

/// Adversarial objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GanKind {
    #[default]
    Hinge,
    LeastSquares,
}

fn same_shape<T: Float>(tape: &Tape<T>, op: &'static str, a: Var, b: Var) -> Result<()> {
    let (sa, sb) = (tape.shape(a), tape.shape(b));
    if sa != sb {
        return Err(Error::shape(op, &sa, &sb));
    }
    Ok(())
}

/// Mean squared error.
pub fn amplitude_loss<T: Float>(tape: &Tape<T>, pred: Var, target: Var) -> Result<Var> {
    same_shape(tape, "amplitude_loss", pred, target)?;
    Ok(tape.mean(tape.square(tape.sub(pred, target)?)?))
}

/// Mean absolute error.
pub fn l1_loss<T: Float>(tape: &Tape<T>, pred: Var, target: Var) -> Result<Var> {
    same_shape(tape, "l1_loss", pred, target)?;
    Ok(tape.mean(tape.abs(tape.sub(pred, target)?)))
}

/// Adjacent difference along `axis` (one element shorter), or `None` if the axis has < 2 entries.
fn adjacent_diff<T: Float>(tape: &Tape<T>, x: Var, axis: usize) -> Result<Option<Var>> {
    let n = tape.shape(x)[axis];
    if n < 2 {
        return Ok(None);
    }
    let hi = tape.slice(x, axis, 1, n - 1)?;
    let lo = tape.slice(x, axis, 0, n - 1)?;
    Ok(Some(tape.sub(hi, lo)?))
}

#[derive(Debug, Clone, Copy)]
pub struct PhaseLoss {
    pub instantaneous: Var,
    pub group_delay: Var,
    pub time_difference: Var,
    pub total: Var,
}

/// Instantaneous-phase, group-delay and phase-time-difference losses under the
/// anti-wrapping distance. The bin axis is second-to-last, frames last.
pub fn phase_loss<T: Float>(tape: &Tape<T>, pred: Var, target: Var) -> Result<PhaseLoss> {
    same_shape(tape, "phase_loss", pred, target)?;
    let rank = tape.shape(pred).len();
    if rank < 2 {
        return Err(Error::shape("phase_loss", &tape.shape(pred), &[0, 0]));
    }
    let aw_mean = |d: Var| tape.mean(tape.anti_wrap(d));
    let instantaneous = aw_mean(tape.sub(pred, target)?);
    let term = |axis: usize| -> Result<Var> {
        match (adjacent_diff(tape, pred, axis)?, adjacent_diff(tape, target, axis)?) {
            (Some(p), Some(t)) => Ok(aw_mean(tape.sub(p, t)?)),
            _ => Ok(tape.scalar(T::zero())),
        }
    };
    let group_delay = term(rank - 2)?;
    let time_difference = term(rank - 1)?;
    let total = tape.add(tape.add(instantaneous, group_delay)?, time_difference)?;
    Ok(PhaseLoss {
        instantaneous,
        group_delay,
        time_difference,
        total,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct StftLoss {
    pub consistency: Var,
    pub real_l1: Var,
    pub imag_l1: Var,
    pub total: Var,
}

/// `stft(istft(re, im))`; gradients flow through both transforms.
pub fn consistent_projection<T: Float>(tape: &Tape<T>, re: Var, im: Var, plan: &Arc<StftPlan<T>>) -> Result<(Var, Var)> {
    let shape = tape.shape(re);
    let wave = tape.istft(re, im, plan)?;
    let spec = tape.stft(wave, plan)?;
    let cre = tape.reshape(tape.slice(spec, 1, 0, 1)?, &shape)?;
    let cim = tape.reshape(tape.slice(spec, 1, 1, 1)?, &shape)?;
    Ok((cre, cim))
}

/// Consistency term plus real- and imaginary-part L1 distances to the target.
pub fn stft_spectrum_loss<T: Float>(
    tape: &Tape<T>,
    (re, im): (Var, Var),
    (target_re, target_im): (Var, Var),
    plan: &Arc<StftPlan<T>>,
) -> Result<StftLoss> {
    same_shape(tape, "stft_spectrum_loss", re, target_re)?;
    same_shape(tape, "stft_spectrum_loss", im, target_im)?;
    same_shape(tape, "stft_spectrum_loss", re, im)?;
    let (cre, cim) = consistent_projection(tape, re, im, plan)?;
    let dr = tape.square(tape.sub(re, cre)?)?;
    let di = tape.square(tape.sub(im, cim)?)?;
    let consistency = tape.mean(tape.add(dr, di)?);
    let real_l1 = l1_loss(tape, re, target_re)?;
    let imag_l1 = l1_loss(tape, im, target_im)?;
    let total = tape.add(tape.add(consistency, real_l1)?, imag_l1)?;
    Ok(StftLoss {
        consistency,
        real_l1,
        imag_l1,
        total,
    })
}

/// Differentiable log-mel spectrogram `[B, n_mels, frames]` of `[B, L]` waveforms.
pub struct MelTransform<T: Float> {
    filterbank: Tensor<T>,
    plan: Arc<StftPlan<T>>,
}

impl<T: Float> MelTransform<T> {
    pub fn new(fb: &MelFilterbank, plan: Arc<StftPlan<T>>) -> Result<Self> {
        if fb.bins() != plan.config().bins() {
            return Err(Error::shape("mel transform", &[fb.n_mels(), fb.bins()], &[plan.config().bins()]));
        }
        let w = fb.weights();
        let filterbank = Tensor::new(&[w.rows(), w.cols()], w.as_slice().iter().map(|&v| T::lit(v)).collect())?;
        Ok(MelTransform { filterbank, plan })
    }

    pub fn forward(&self, tape: &Tape<T>, wave: Var) -> Result<Var> {
        let spec = tape.stft(wave, &self.plan)?;
        let s = tape.shape(spec);
        let (b, bins, frames) = (s[0], s[2], s[3]);
        let re = tape.reshape(tape.slice(spec, 1, 0, 1)?, &[b, bins, frames])?;
        let im = tape.reshape(tape.slice(spec, 1, 1, 1)?, &[b, bins, frames])?;
        let mag = tape.complex_abs(re, im)?;
        // [B, bins, frames] -> [bins, B * frames] for one matrix product
        let flat = tape.reshape(tape.permute(mag, &[1, 0, 2])?, &[bins, b * frames])?;
        let fb = tape.constant(self.filterbank.clone());
        let mel = tape.matmul(fb, flat)?;
        let n_mels = self.filterbank.shape()[0];
        let mel = tape.permute(tape.reshape(mel, &[n_mels, b, frames])?, &[1, 0, 2])?;
        Ok(tape.log(tape.clamp_min(mel, T::lit(AMP_FLOOR))))
    }
}

/// L1 distance between log-mel spectrograms of two waveforms.
pub fn mel_loss<T: Float>(tape: &Tape<T>, mel: &MelTransform<T>, pred: Var, target: Var) -> Result<Var> {
    same_shape(tape, "mel_loss", pred, target)?;
    let a = mel.forward(tape, pred)?;
    let b = mel.forward(tape, target)?;
    l1_loss(tape, a, b)
}

/// Per layer mean absolute difference, summed over layers and sub-discriminators.
pub fn feature_matching_loss<T: Float>(tape: &Tape<T>, real: &[SubOutput], fake: &[SubOutput]) -> Result<Var> {
    if real.is_empty() || real.len() != fake.len() {
        return Err(Error::InvalidArgument(format!(
            "feature matching: {} real vs {} fake sub-discriminators",
            real.len(),
            fake.len()
        )));
    }
    let mut terms = Vec::new();
    for (r, f) in real.iter().zip(fake) {
        if r.features.is_empty() || r.features.len() != f.features.len() {
            return Err(Error::InvalidArgument(format!(
                "feature matching: {} real vs {} fake layers",
                r.features.len(),
                f.features.len()
            )));
        }
        for (&a, &b) in r.features.iter().zip(&f.features) {
            terms.push(l1_loss(tape, a, b)?);
        }
    }
    sum_all(tape, &terms)
}

fn sum_all<T: Float>(tape: &Tape<T>, terms: &[Var]) -> Result<Var> {
    let mut acc = terms[0];
    for &t in &terms[1..] {
        acc = tape.add(acc, t)?;
    }
    Ok(acc)
}

fn mean_over_subs<T: Float>(tape: &Tape<T>, terms: &[Var]) -> Result<Var> {
    let s = sum_all(tape, terms)?;
    Ok(tape.scale(s, T::one() / T::lit(terms.len() as f64)))
}

/// `(1/L) Σ mean(max(0, 1 − D(x̂)))`, or `(1/L) Σ mean((1 − D)²)` for least squares.
pub fn gan_loss_generator<T: Float>(tape: &Tape<T>, fake: &[Var], kind: GanKind) -> Result<Var> {
    if fake.is_empty() {
        return Err(Error::InvalidArgument("generator GAN loss of zero scores".into()));
    }
    let terms = fake
        .iter()
        .map(|&d| {
            let m = tape.add_scalar(tape.neg(d), T::one());
            Ok(match kind {
                GanKind::Hinge => tape.mean(tape.relu(m)),
                GanKind::LeastSquares => tape.mean(tape.square(m)?),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    mean_over_subs(tape, &terms)
}

/// `(1/L) Σ [mean max(0, 1 − D(x)) + mean max(0, 1 + D(x̂))]`.
pub fn gan_loss_discriminator<T: Float>(tape: &Tape<T>, real: &[Var], fake: &[Var], kind: GanKind) -> Result<Var> {
    if real.is_empty() || real.len() != fake.len() {
        return Err(Error::InvalidArgument(format!(
            "discriminator GAN loss: {} real vs {} fake scores",
            real.len(),
            fake.len()
        )));
    }
    let terms = real
        .iter()
        .zip(fake)
        .map(|(&r, &f)| {
            let (a, b) = match kind {
                GanKind::Hinge => (
                    tape.mean(tape.relu(tape.add_scalar(tape.neg(r), T::one()))),
                    tape.mean(tape.relu(tape.add_scalar(f, T::one()))),
                ),
                GanKind::LeastSquares => (
                    tape.mean(tape.square(tape.add_scalar(r, -T::one()))?),
                    tape.mean(tape.square(f)?),
                ),
            };
            tape.add(a, b)
        })
        .collect::<Result<Vec<_>>>()?;
    mean_over_subs(tape, &terms)
}

/// Scalar loss values of one training step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossReport {
    pub amplitude: f64,
    pub instantaneous_phase: f64,
    pub group_delay: f64,
    pub phase_time_difference: f64,
    pub phase: f64,
    pub consistency: f64,
    pub real_l1: f64,
    pub imag_l1: f64,
    pub stft: f64,
    pub mel: f64,
    pub feature_matching: f64,
    pub adversarial: f64,
    pub waveform: f64,
    pub generator: f64,
    pub discriminator: f64,
}

/// Already-evaluated loss components before weighting.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub amplitude: f64,
    pub instantaneous_phase: f64,
    pub group_delay: f64,
    pub phase_time_difference: f64,
    pub consistency: f64,
    pub real_l1: f64,
    pub imag_l1: f64,
    pub mel: f64,
    pub feature_matching: f64,
    pub adversarial: f64,
}

impl LossParts {
    pub fn phase(&self) -> f64 {
        self.instantaneous_phase + self.group_delay + self.phase_time_difference
    }

    pub fn stft(&self) -> f64 {
        self.consistency + self.real_l1 + self.imag_l1
    }

    pub fn waveform(&self) -> f64 {
        self.mel + self.feature_matching + self.adversarial
    }
}

/// Weighted generator total with every sub-term carried along.
pub fn generator_total(parts: &LossParts, w: &LossWeights) -> LossReport {
    let (phase, stft, waveform) = (parts.phase(), parts.stft(), parts.waveform());
    LossReport {
        amplitude: parts.amplitude,
        instantaneous_phase: parts.instantaneous_phase,
        group_delay: parts.group_delay,
        phase_time_difference: parts.phase_time_difference,
        phase,
        consistency: parts.consistency,
        real_l1: parts.real_l1,
        imag_l1: parts.imag_l1,
        stft,
        mel: parts.mel,
        feature_matching: parts.feature_matching,
        adversarial: parts.adversarial,
        waveform,
        generator: w.amplitude * parts.amplitude + w.phase * phase + w.stft * stft + w.waveform * waveform,
        discriminator: 0.0,
    }
}

impl LossReport {
    /// `(name, value)` of every term, in log order.
    pub fn terms(&self) -> [(&'static str, f64); 15] {
        [
            ("L_G", self.generator),
            ("L_A", self.amplitude),
            ("L_P", self.phase),
            ("L_S", self.stft),
            ("L_W", self.waveform),
            ("L_D", self.discriminator),
            ("IP", self.instantaneous_phase),
            ("GD", self.group_delay),
            ("PTD", self.phase_time_difference),
            ("consistency", self.consistency),
            ("real_l1", self.real_l1),
            ("imag_l1", self.imag_l1),
            ("mel", self.mel),
            ("fm", self.feature_matching),
            ("adv", self.adversarial),
        ]
    }

    /// Name of the first non-finite sub-term (leaf terms before aggregates).
    pub fn first_non_finite(&self) -> Option<&'static str> {
        let t = self.terms();
        t[6..].iter().chain(&t[..6]).find(|(_, v)| !v.is_finite()).map(|(n, _)| *n)
    }

    /// `step=<n> lr=<v> L_G=<v> L_A=<v> L_P=<v> L_S=<v> L_W=<v> L_D=<v>`.
    pub fn log_line(&self, step: u64, lr: f64) -> String {
        let mut s = format!("step={step} lr={lr:e}");
        for (name, v) in &self.terms()[..6] {
            s.push_str(&format!(" {name}={v}"));
        }
        s
    }
}

impl fmt::Display for LossReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.terms().iter().map(|(n, v)| format!("{n}={v}")).collect();
        f.write_str(&parts.join(" "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::StftConfig;
    use std::f64::consts::PI;

    fn t(shape: &[usize], v: Vec<f64>) -> Tensor<f64> {
        Tensor::new(shape, v).unwrap()
    }

    #[test]
    fn amplitude_examples() {
        let tape = Tape::<f64>::new();
        let a = tape.constant(Tensor::from_fn(&[2, 3], |i| i as f64));
        assert_eq!(tape.value(amplitude_loss(&tape, a, a).unwrap()).item(), 0.0);
        let b = tape.add_scalar(a, 1.0);
        assert_eq!(tape.value(amplitude_loss(&tape, b, a).unwrap()).item(), 1.0);
        let p = tape.constant(t(&[1], vec![2.0]));
        let z = tape.constant(t(&[1], vec![0.0]));
        assert_eq!(tape.value(amplitude_loss(&tape, p, z).unwrap()).item(), 4.0);
        let bad = tape.constant(Tensor::zeros(&[3, 2]));
        assert!(amplitude_loss(&tape, a, bad).is_err());
    }

    #[test]
    fn phase_loss_hand_example() {
        let tape = Tape::<f64>::new();
        // bins = 2, frames = 1
        let target = tape.constant(t(&[2, 1], vec![0.0, 0.0]));
        let pred = tape.constant(t(&[2, 1], vec![PI / 2.0, PI / 2.0]));
        let l = phase_loss(&tape, pred, target).unwrap();
        assert!((tape.value(l.instantaneous).item() - PI / 2.0).abs() < 1e-15);
        assert_eq!(tape.value(l.group_delay).item(), 0.0);
        assert_eq!(tape.value(l.time_difference).item(), 0.0);
        assert!((tape.value(l.total).item() - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn phase_loss_identity_and_wrap() {
        let tape = Tape::<f64>::new();
        let x = Tensor::from_fn(&[1, 4, 5], |i| ((i * 7919) % 13) as f64 * 0.4 - 2.4);
        let a = tape.constant(x.clone());
        assert_eq!(tape.value(phase_loss(&tape, a, a).unwrap().total).item(), 0.0);
        let b = tape.constant(x.map(|v| v + 2.0 * PI));
        assert!(tape.value(phase_loss(&tape, b, a).unwrap().total).item() < 1e-12);
    }

    #[test]
    fn stft_loss_examples() {
        let cfg = StftConfig::new(64, 16, 64);
        let plan = Arc::new(StftPlan::<f64>::new(&cfg).unwrap());
        let tape = Tape::<f64>::new();
        let w = tape.constant(Tensor::from_fn(&[1, 256], |i| (i as f64 * 0.37).sin()));
        let s = tape.stft(w, &plan).unwrap();
        let re = tape.reshape(tape.slice(s, 1, 0, 1).unwrap(), &[1, 33, 16]).unwrap();
        let im = tape.reshape(tape.slice(s, 1, 1, 1).unwrap(), &[1, 33, 16]).unwrap();
        let l = stft_spectrum_loss(&tape, (re, im), (re, im), &plan).unwrap();
        assert!(tape.value(l.consistency).item() < 1e-20);
        assert_eq!(tape.value(l.real_l1).item(), 0.0);
        assert_eq!(tape.value(l.imag_l1).item(), 0.0);
    }

    #[test]
    fn hinge_examples() {
        let tape = Tape::<f64>::new();
        let zeros = tape.constant(Tensor::zeros(&[4]));
        assert_eq!(tape.value(gan_loss_generator(&tape, &[zeros, zeros], GanKind::Hinge).unwrap()).item(), 1.0);
        assert_eq!(
            tape.value(gan_loss_discriminator(&tape, &[zeros], &[zeros], GanKind::Hinge).unwrap()).item(),
            2.0
        );
        let high = tape.constant(Tensor::full(&[3], 1.5));
        let low = tape.constant(Tensor::full(&[3], -1.0));
        assert_eq!(tape.value(gan_loss_generator(&tape, &[high], GanKind::Hinge).unwrap()).item(), 0.0);
        assert_eq!(
            tape.value(gan_loss_discriminator(&tape, &[high], &[low], GanKind::Hinge).unwrap()).item(),
            0.0
        );
        let one = tape.constant(Tensor::full(&[2], 1.0));
        let neg = tape.constant(Tensor::full(&[2], -1.0));
        assert_eq!(tape.value(gan_loss_generator(&tape, &[one, neg], GanKind::Hinge).unwrap()).item(), 1.0);
        let half = tape.constant(Tensor::full(&[1], 0.5));
        assert_eq!(
            tape.value(gan_loss_discriminator(&tape, &[half], &[half], GanKind::Hinge).unwrap()).item(),
            2.0
        );
        assert!(gan_loss_generator(&tape, &[], GanKind::Hinge).is_err());
        assert!(gan_loss_discriminator(&tape, &[half], &[], GanKind::Hinge).is_err());
    }

    #[test]
    fn least_squares_smoke() {
        let tape = Tape::<f64>::new();
        let one = tape.constant(Tensor::full(&[2], 1.0));
        let zero = tape.constant(Tensor::zeros(&[2]));
        assert_eq!(tape.value(gan_loss_generator(&tape, &[one], GanKind::LeastSquares).unwrap()).item(), 0.0);
        assert_eq!(
            tape.value(gan_loss_discriminator(&tape, &[one], &[zero], GanKind::LeastSquares).unwrap()).item(),
            0.0
        );
    }

    #[test]
    fn weighted_total() {
        let parts = LossParts {
            amplitude: 1.0,
            instantaneous_phase: 2.0,
            consistency: 3.0,
            mel: 4.0,
            ..Default::default()
        };
        let w = LossWeights {
            amplitude: 1.0,
            phase: 1.0,
            stft: 1.0,
            waveform: 1.0,
        };
        assert_eq!(generator_total(&parts, &w).generator, 10.0);
        assert_eq!(generator_total(&LossParts::default(), &LossWeights::default()).generator, 0.0);
        let no_phase = LossWeights { phase: 0.0, ..w };
        let more_phase = LossParts {
            group_delay: 100.0,
            ..parts
        };
        assert_eq!(
            generator_total(&parts, &no_phase).generator,
            generator_total(&more_phase, &no_phase).generator
        );
        assert!(LossWeights { stft: -1.0, ..w }.validate().is_err());
    }

    #[test]
    fn log_line_layout_and_nan_detection() {
        let mut r = LossReport {
            generator: 1.5,
            ..Default::default()
        };
        let line = r.log_line(3, 2e-4);
        assert!(line.starts_with("step=3 lr=2e-4 L_G=1.5 L_A=0 L_P=0 L_S=0 L_W=0 L_D=0"), "{line}");
        assert_eq!(r.first_non_finite(), None);
        r.group_delay = f64::NAN;
        r.phase = f64::NAN;
        assert_eq!(r.first_non_finite(), Some("GD"));
    }
}
