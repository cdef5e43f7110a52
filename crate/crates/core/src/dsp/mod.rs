//! Deterministic signal processing: STFT/ISTFT, mel features, and phase utilities.

pub mod mel;
pub mod phase;
pub mod spectrogram;
pub mod stft;
pub mod waveform;

pub use mel::{mel_spectrogram, MelFilterbank, MelSpectrogram};
pub use phase::{anti_wrap, phi, sgn_star};
pub use spectrogram::{
    log_amplitude, phase_of, reconstruct_complex, ComplexSpectrogram, LogAmplitudeSpectrogram, Matrix,
    PhaseSpectrogram, AMP_FLOOR,
};
pub use stft::{istft, stft, StftConfig, StftPlan, Window};
pub use waveform::{Waveform, DEFAULT_SAMPLE_RATE};
