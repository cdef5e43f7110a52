//! Run configuration: every tunable of a run in one TOML file.
//!
//! Unknown keys are rejected and every value is validated on load. Missing
//! sections take their defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::discriminator::DiscriminatorConfig;
use crate::dsp::{MelFilterbank, StftConfig, DEFAULT_SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::generator::{GeneratorConfig, Preset};
use crate::losses::{GanKind, LossWeights};
use crate::train::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MelConfig {
    pub n_mels: usize,
    pub f_min: f64,
    pub f_max: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        MelConfig {
            n_mels: 80,
            f_min: 0.0,
            f_max: 8000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscriminatorSection {
    pub periods: Vec<usize>,
    /// `[n_fft, hop, win_length]` per resolution.
    pub resolutions: Vec<[usize; 3]>,
}

impl Default for DiscriminatorSection {
    fn default() -> Self {
        DiscriminatorSection {
            periods: DiscriminatorConfig::PERIODS.to_vec(),
            resolutions: DiscriminatorConfig::RESOLUTIONS.iter().map(|&(a, b, c)| [a, b, c]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub sample_rate: u32,
    pub stft: StftConfig,
    pub mel: MelConfig,
    pub loss: LossWeights,
    pub gan: GanKind,
    pub train: TrainConfig,
    pub discriminator: DiscriminatorSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            sample_rate: DEFAULT_SAMPLE_RATE,
            stft: StftConfig::default(),
            mel: MelConfig::default(),
            loss: LossWeights::default(),
            gan: GanKind::default(),
            train: TrainConfig::default(),
            discriminator: DiscriminatorSection::default(),
        }
    }
}

impl RunConfig {
    /// Defaults with the small model preset.
    pub fn desk() -> Self {
        let mut c = Self::default();
        c.train.preset = Preset::Desk;
        c
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(Error::Config("sample_rate must be positive".into()));
        }
        self.stft.validate()?;
        self.filterbank()?;
        self.loss.validate()?;
        self.train.validate(&self.stft)?;
        let d = self.discriminator_config();
        d.validate()?;
        if self.train.crop_samples < d.min_samples() {
            return Err(Error::Config(format!(
                "crop_samples {} is shorter than the largest discriminator window {}",
                self.train.crop_samples,
                d.min_samples()
            )));
        }
        Ok(())
    }

    pub fn filterbank(&self) -> Result<MelFilterbank> {
        MelFilterbank::new(self.mel.n_mels, self.stft.n_fft, self.sample_rate, self.mel.f_min, self.mel.f_max)
    }

    pub fn generator_config(&self) -> GeneratorConfig {
        GeneratorConfig::preset(self.train.preset, self.mel.n_mels, self.stft)
    }

    pub fn discriminator_config(&self) -> DiscriminatorConfig {
        let mut d = DiscriminatorConfig::preset(self.train.preset);
        d.periods = self.discriminator.periods.clone();
        d.resolutions = self.discriminator.resolutions.iter().map(|r| (r[0], r[1], r[2])).collect();
        d
    }

    /// Parse and validate.
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let c: RunConfig = toml::from_str(s).map_err(|e| Error::Config(e.message().to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path)?;
        Self::from_toml_str(&s).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
        RunConfig::desk().validate().unwrap();
    }

    #[test]
    fn empty_file_is_defaults() {
        assert_eq!(RunConfig::from_toml_str("").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml_str("bogus = 1").is_err());
        assert!(RunConfig::from_toml_str("[train]\nbatchsize = 4").is_err());
        assert!(RunConfig::from_toml_str("[stft]\nnfft = 4").is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(RunConfig::from_toml_str("[train]\ncrop_samples = 8000").is_err());
        assert!(RunConfig::from_toml_str("[train]\ncrop_samples = 1024").is_err());
        assert!(RunConfig::from_toml_str("[stft]\nn_fft = 1024\nhop = 256\nwin_length = 2048").is_err());
        assert!(RunConfig::from_toml_str("[mel]\nf_max = 20000.0").is_err());
        assert!(RunConfig::from_toml_str("sample_rate = 0").is_err());
        assert!(RunConfig::from_toml_str("[discriminator]\nperiods = [0]").is_err());
    }

    #[test]
    fn partial_sections_fill_defaults() {
        let c = RunConfig::from_toml_str("[train]\npreset = \"desk\"\nmax_steps = 7").unwrap();
        assert_eq!(c.train.preset, Preset::Desk);
        assert_eq!(c.train.max_steps, 7);
        assert_eq!(c.train.batch_size, 16);
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        let c = RunConfig::desk();
        c.save(&p).unwrap();
        assert_eq!(RunConfig::load(&p).unwrap(), c);
    }

    proptest! {
        #[test]
        fn load_save_load_is_idempotent(
            lr in 1e-6f64..1e-2,
            wd in 0.0f64..0.1,
            seed in 0u64..(i64::MAX as u64),
            steps in 0u64..1_000_000,
            amp in 0.0f64..100.0,
            desk in any::<bool>(),
        ) {
            let mut c = RunConfig::default();
            c.train.lr = lr;
            c.train.weight_decay = wd;
            c.train.seed = seed;
            c.train.max_steps = steps;
            c.loss.amplitude = amp;
            c.train.preset = if desk { Preset::Desk } else { Preset::Full };
            let once = RunConfig::from_toml_str(&c.to_toml_string().unwrap()).unwrap();
            let text = once.to_toml_string().unwrap();
            let twice = RunConfig::from_toml_str(&text).unwrap();
            prop_assert_eq!(&once, &c);
            prop_assert_eq!(&once, &twice);
            prop_assert_eq!(text, twice.to_toml_string().unwrap());
        }
    }
}
