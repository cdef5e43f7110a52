//! HTK-scale triangular filterbank and log-mel features.

use crate::dsp::spectrogram::{Matrix, AMP_FLOOR};
use crate::dsp::stft::{stft, StftConfig};
use crate::error::{Error, Result};
use crate::float::Float;

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// `n_mels × bins` non-negative weights (peak-normalized triangles, no area normalization).
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    weights: Matrix<f64>,
    f_min: f64,
    f_max: f64,
}

impl MelFilterbank {
    pub fn new(n_mels: usize, n_fft: usize, sample_rate: u32, f_min: f64, f_max: f64) -> Result<Self> {
        let nyquist = sample_rate as f64 / 2.0;
        if n_mels == 0 || !(0.0 <= f_min && f_min < f_max && f_max <= nyquist) {
            return Err(Error::InvalidArgument(format!(
                "mel filterbank needs n_mels > 0 and 0 <= f_min < f_max <= {nyquist} (got {n_mels}, {f_min}, {f_max})"
            )));
        }
        let bins = n_fft / 2 + 1;
        let (lo, hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
            .collect();
        let mut w = vec![0.0; n_mels * bins];
        for m in 0..n_mels {
            let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
            for k in 0..bins {
                let f = k as f64 * sample_rate as f64 / n_fft as f64;
                let rise = (f - left) / (center - left);
                let fall = (right - f) / (right - center);
                w[m * bins + k] = rise.min(fall).max(0.0);
            }
            if w[m * bins..(m + 1) * bins].iter().all(|&v| v == 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "mel filter {m} ({left:.1}-{right:.1} Hz) covers no FFT bin; use fewer mels or a larger n_fft"
                )));
            }
        }
        Ok(MelFilterbank {
            weights: Matrix::new(n_mels, bins, w)?,
            f_min,
            f_max,
        })
    }

    pub fn n_mels(&self) -> usize {
        self.weights.rows()
    }

    pub fn bins(&self) -> usize {
        self.weights.cols()
    }

    pub fn weights(&self) -> &Matrix<f64> {
        &self.weights
    }

    pub fn f_min(&self) -> f64 {
        self.f_min
    }

    pub fn f_max(&self) -> f64 {
        self.f_max
    }

    /// `log(max(fb · magnitude, AMP_FLOOR))` for a `frames × bins` magnitude matrix.
    pub fn apply_log<T: Float>(&self, magnitude: &Matrix<T>) -> Result<MelSpectrogram<T>> {
        if magnitude.cols() != self.bins() {
            return Err(Error::shape("mel filterbank", &magnitude.shape(), &self.weights.shape()));
        }
        let floor = T::lit(AMP_FLOOR);
        let mels = self.n_mels();
        let mut out = Vec::with_capacity(magnitude.rows() * mels);
        for t in 0..magnitude.rows() {
            let row = magnitude.row(t);
            for m in 0..mels {
                let e: T = self
                    .weights
                    .row(m)
                    .iter()
                    .zip(row)
                    .filter(|(w, _)| **w != 0.0)
                    .map(|(&w, &a)| T::lit(w) * a)
                    .sum();
                out.push(e.max(floor).ln());
            }
        }
        Ok(MelSpectrogram(Matrix::new(magnitude.rows(), mels, out)?))
    }
}

/// `frames × n_mels` natural-log mel energies.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram<T: Float = f32>(pub Matrix<T>);

impl<T: Float> MelSpectrogram<T> {
    pub fn frames(&self) -> usize {
        self.0.rows()
    }

    pub fn n_mels(&self) -> usize {
        self.0.cols()
    }
}

pub fn mel_spectrogram<T: Float>(samples: &[T], fb: &MelFilterbank, cfg: &StftConfig) -> Result<MelSpectrogram<T>> {
    if fb.bins() != cfg.bins() {
        return Err(Error::shape("mel_spectrogram", &[fb.n_mels(), fb.bins()], &[cfg.bins()]));
    }
    let spec = stft(samples, cfg)?;
    fb.apply_log(&spec.magnitude())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_fb() -> MelFilterbank {
        MelFilterbank::new(80, 1024, 22050, 0.0, 8000.0).unwrap()
    }

    #[test]
    fn filterbank_shape_and_support() {
        let fb = default_fb();
        assert_eq!(fb.weights().shape(), [80, 513]);
        assert!(fb.weights().as_slice().iter().all(|&w| w >= 0.0));
        for m in 0..80 {
            assert!(fb.weights().row(m).iter().any(|&w| w > 0.0));
        }
        // nothing above f_max: bin 372 is 8010 Hz
        let top = (8000.0 * 1024.0 / 22050.0) as usize + 1;
        for m in 0..80 {
            assert!(fb.weights().row(m)[top..].iter().all(|&w| w == 0.0));
        }
        // peak-normalized triangles
        let peak = fb.weights().as_slice().iter().cloned().fold(0.0, f64::max);
        assert!(peak <= 1.0 && peak > 0.9);
    }

    #[test]
    fn mel_scale_roundtrip() {
        for hz in [0.0, 100.0, 1000.0, 8000.0] {
            assert!((mel_to_hz(hz_to_mel(hz)) - hz).abs() < 1e-9);
        }
        assert!((hz_to_mel(1000.0) - 999.9855).abs() < 1e-3);
    }

    #[test]
    fn too_many_mels_is_an_error() {
        assert!(MelFilterbank::new(400, 256, 22050, 0.0, 8000.0).is_err());
        assert!(MelFilterbank::new(80, 1024, 22050, 0.0, 12000.0).is_err());
    }

    #[test]
    fn silence_maps_to_floor() {
        let fb = default_fb();
        let mel = mel_spectrogram(&vec![0.0f64; 4096], &fb, &StftConfig::default()).unwrap();
        assert_eq!(mel.frames(), 16);
        assert!(mel.0.as_slice().iter().all(|&v| v == AMP_FLOOR.ln()));
    }

    #[test]
    fn bin_mismatch_is_an_error() {
        let fb = default_fb();
        assert!(mel_spectrogram(&[0.0f64; 100], &fb, &StftConfig::new(512, 128, 512)).is_err());
    }
}
