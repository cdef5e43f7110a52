//! Mel-to-waveform generator: an amplitude spectrum predictor (ASP) and a
//! phase spectrum predictor (PSP) run in parallel at frame rate, and the
//! waveform is recovered by inverse STFT.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Conv1dSpec, ParamStore, Tape, Tensor, Var};
use crate::dsp::{LogAmplitudeSpectrogram, Matrix, MelSpectrogram, PhaseSpectrogram, StftConfig, StftPlan};
use crate::error::{Error, Result};
use crate::float::Float;
use crate::nn::{trace, ConvNeXtV2Block, Conv1d, LayerNorm, ShapeTrace};

/// Kernel size of the input and output convolutions of both towers.
pub const IO_KERNEL: usize = 7;

/// Model size presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// 512 channels, 1536 hidden, 8 blocks per tower.
    Full,
    /// 64 channels, 192 hidden, 4 blocks per tower.
    Desk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GeneratorConfig {
    pub n_mels: usize,
    pub channels: usize,
    pub hidden: usize,
    pub blocks: usize,
    pub stft: StftConfig,
}

impl GeneratorConfig {
    pub fn preset(preset: Preset, n_mels: usize, stft: StftConfig) -> Self {
        let (channels, hidden, blocks) = match preset {
            Preset::Full => (512, 1536, 8),
            Preset::Desk => (64, 192, 4),
        };
        GeneratorConfig {
            n_mels,
            channels,
            hidden,
            blocks,
            stft,
        }
    }

    pub fn full() -> Self {
        Self::preset(Preset::Full, 80, StftConfig::default())
    }

    pub fn desk() -> Self {
        Self::preset(Preset::Desk, 80, StftConfig::default())
    }

    pub fn bins(&self) -> usize {
        self.stft.bins()
    }

    fn validate(&self) -> Result<()> {
        self.stft.validate()?;
        if self.n_mels == 0 || self.channels == 0 || self.hidden == 0 {
            return Err(Error::Config("generator widths must be positive".into()));
        }
        Ok(())
    }
}

/// Input conv, ConvNeXt v2 stack and final layer norm shared by both towers.
#[derive(Debug, Clone)]
struct Trunk {
    conv_in: Conv1d,
    blocks: Vec<ConvNeXtV2Block>,
    norm: LayerNorm,
}

impl Trunk {
    fn new<T: Float>(store: &mut ParamStore<T>, name: &str, cfg: &GeneratorConfig, rng: &mut ChaCha8Rng) -> Self {
        let conv_in = Conv1d::new(
            store,
            &format!("{name}.conv_in"),
            cfg.n_mels,
            cfg.channels,
            IO_KERNEL,
            Conv1dSpec::same(IO_KERNEL),
            true,
            rng,
        );
        let blocks = (0..cfg.blocks)
            .map(|i| ConvNeXtV2Block::new(store, &format!("{name}.blocks.{i}"), cfg.channels, cfg.hidden, rng))
            .collect();
        let norm = LayerNorm::new(store, &format!("{name}.norm"), cfg.channels);
        Trunk { conv_in, blocks, norm }
    }

    fn forward<T: Float>(
        &self,
        tape: &Tape<T>,
        store: &ParamStore<T>,
        mel: Var,
        name: &str,
        tr: &mut Option<&mut ShapeTrace>,
    ) -> Result<Var> {
        let mut h = self.conv_in.forward(tape, store, mel)?;
        trace(tr, &format!("{name}.conv_in"), tape, h);
        for (i, block) in self.blocks.iter().enumerate() {
            let mut inner = ShapeTrace::default();
            let traced = tr.is_some();
            h = block.forward_traced(tape, store, h, traced.then_some(&mut inner))?;
            if let Some(t) = tr.as_deref_mut() {
                for (n, s) in inner.entries {
                    t.entries.push((format!("{name}.blocks.{i}.{n}"), s));
                }
            }
        }
        let h = self.norm.forward(tape, store, h)?;
        trace(tr, &format!("{name}.norm"), tape, h);
        Ok(h)
    }
}

/// Tensors produced by one generator forward pass. Spectra are `[B, bins, frames]`.
#[derive(Debug, Clone, Copy)]
pub struct GeneratorOutput {
    pub log_amplitude: Var,
    pub phase: Var,
    pub real: Var,
    pub imag: Var,
    /// `[B, frames · hop]`.
    pub waveform: Var,
}

/// The generator together with its parameters.
pub struct Generator<T: Float> {
    cfg: GeneratorConfig,
    store: ParamStore<T>,
    asp: Trunk,
    asp_out: Conv1d,
    psp: Trunk,
    psp_real: Conv1d,
    psp_imag: Conv1d,
    plan: Arc<StftPlan<T>>,
}

impl<T: Float> Generator<T> {
    /// Freshly initialized generator; all randomness derives from `seed`.
    pub fn new(cfg: GeneratorConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let bins = cfg.bins();
        let head = |store: &mut ParamStore<T>, name: &str, rng: &mut ChaCha8Rng| {
            Conv1d::new(store, name, cfg.channels, bins, IO_KERNEL, Conv1dSpec::same(IO_KERNEL), true, rng)
        };
        let asp = Trunk::new(&mut store, "asp", &cfg, &mut rng);
        let asp_out = head(&mut store, "asp.conv_out", &mut rng);
        let psp = Trunk::new(&mut store, "psp", &cfg, &mut rng);
        let psp_real = head(&mut store, "psp.conv_real", &mut rng);
        let psp_imag = head(&mut store, "psp.conv_imag", &mut rng);
        Ok(Generator {
            plan: Arc::new(StftPlan::new(&cfg.stft)?),
            cfg,
            store,
            asp,
            asp_out,
            psp,
            psp_real,
            psp_imag,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    pub fn plan(&self) -> &Arc<StftPlan<T>> {
        &self.plan
    }

    pub fn num_parameters(&self) -> usize {
        self.store.num_elements()
    }

    fn check_mel(&self, shape: &[usize]) -> Result<()> {
        if shape.len() != 3 || shape[1] != self.cfg.n_mels || shape[2] == 0 {
            return Err(Error::shape("generator input", shape, &[0, self.cfg.n_mels, 0]));
        }
        Ok(())
    }

    /// Log-amplitude spectrum from `mel: [B, n_mels, frames]`.
    pub fn asp_forward(&self, tape: &Tape<T>, mel: Var) -> Result<Var> {
        self.check_mel(&tape.shape(mel))?;
        let h = self.asp.forward(tape, &self.store, mel, "asp", &mut None)?;
        self.asp_out.forward(tape, &self.store, h)
    }

    /// `(R, I)` head outputs before the phase formula.
    pub fn psp_heads(&self, tape: &Tape<T>, mel: Var) -> Result<(Var, Var)> {
        self.check_mel(&tape.shape(mel))?;
        let h = self.psp.forward(tape, &self.store, mel, "psp", &mut None)?;
        Ok((
            self.psp_real.forward(tape, &self.store, h)?,
            self.psp_imag.forward(tape, &self.store, h)?,
        ))
    }

    pub fn forward(&self, tape: &Tape<T>, mel: Var) -> Result<GeneratorOutput> {
        self.forward_impl(tape, mel, None)
    }

    /// Forward pass that also records the shape of every intermediate activation.
    pub fn forward_traced(&self, tape: &Tape<T>, mel: Var, tr: &mut ShapeTrace) -> Result<GeneratorOutput> {
        self.forward_impl(tape, mel, Some(tr))
    }

    fn forward_impl(&self, tape: &Tape<T>, mel: Var, mut tr: Option<&mut ShapeTrace>) -> Result<GeneratorOutput> {
        self.check_mel(&tape.shape(mel))?;
        let s = &self.store;
        let ha = self.asp.forward(tape, s, mel, "asp", &mut tr)?;
        let log_amplitude = self.asp_out.forward(tape, s, ha)?;
        trace(&mut tr, "asp.conv_out", tape, log_amplitude);
        let hp = self.psp.forward(tape, s, mel, "psp", &mut tr)?;
        let r = self.psp_real.forward(tape, s, hp)?;
        trace(&mut tr, "psp.conv_real", tape, r);
        let i = self.psp_imag.forward(tape, s, hp)?;
        trace(&mut tr, "psp.conv_imag", tape, i);
        let phase = tape.phi(r, i)?;
        trace(&mut tr, "psp.phase", tape, phase);
        let amp = tape.exp(log_amplitude);
        let real = tape.mul(amp, tape.cos(phase))?;
        let imag = tape.mul(amp, tape.sin(phase))?;
        trace(&mut tr, "spectrum.real", tape, real);
        trace(&mut tr, "spectrum.imag", tape, imag);
        let waveform = tape.istft(real, imag, &self.plan)?;
        Ok(GeneratorOutput {
            log_amplitude,
            phase,
            real,
            imag,
            waveform,
        })
    }

    /// Predicted `frames × bins` log-amplitude and phase spectra.
    pub fn predict_spectra(&self, mel: &MelSpectrogram<T>) -> Result<(LogAmplitudeSpectrogram<T>, PhaseSpectrogram<T>)> {
        let tape = Tape::no_grad();
        let m = tape.constant(matrix_to_channels(&mel.0));
        let out = self.forward(&tape, m)?;
        Ok((
            LogAmplitudeSpectrogram(channels_to_matrix(&tape.value(out.log_amplitude), 0)?),
            PhaseSpectrogram(channels_to_matrix(&tape.value(out.phase), 0)?),
        ))
    }

    /// Waveform of `frames · hop` samples for a `frames × n_mels` mel-spectrogram.
    pub fn generate(&self, mel: &MelSpectrogram<T>) -> Result<Vec<T>> {
        let tape = Tape::no_grad();
        let m = tape.constant(matrix_to_channels(&mel.0));
        let out = self.forward(&tape, m)?;
        Ok(tape.value(out.waveform).to_vec())
    }
}

/// `frames × C` matrix into a `[1, C, frames]` tensor.
pub fn matrix_to_channels<T: Float>(m: &Matrix<T>) -> Tensor<T> {
    let (frames, cols) = (m.rows(), m.cols());
    let data = m.as_slice();
    Tensor::from_fn(&[1, cols, frames], |i| data[(i % frames) * cols + i / frames])
}

/// Item `b` of a `[B, C, frames]` tensor as a `frames × C` matrix.
pub fn channels_to_matrix<T: Float>(t: &Tensor<T>, b: usize) -> Result<Matrix<T>> {
    let s = t.shape();
    if s.len() != 3 || b >= s[0] {
        return Err(Error::shape("channels_to_matrix", s, &[b]));
    }
    let (c, frames) = (s[1], s[2]);
    let base = &t.data()[b * c * frames..(b + 1) * c * frames];
    let data = (0..frames * c).map(|i| base[(i % c) * frames + i / c]).collect();
    Matrix::new(frames, c, data)
}
