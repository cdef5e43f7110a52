use crate::error::{Error, Result};
use crate::float::Float;

/// Mono audio at a fixed sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform<T: Float = f32> {
    samples: Vec<T>,
    sample_rate: u32,
}

pub const DEFAULT_SAMPLE_RATE: u32 = 22_050;

impl<T: Float> Waveform<T> {
    pub fn new(samples: Vec<T>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("waveform sample {i}")));
        }
        Ok(Waveform { samples, sample_rate })
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<T> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Precision conversion (e.g. `f64` extraction ↔ `f32` training).
    pub fn cast<U: Float>(&self) -> Waveform<U> {
        Waveform {
            samples: self.samples.iter().map(|v| U::lit(v.as_f64())).collect(),
            sample_rate: self.sample_rate,
        }
    }
}
