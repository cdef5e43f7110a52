//! Neural vocoder that predicts log-amplitude and wrapped-phase spectra in
//! parallel from mel-spectrograms and reconstructs the waveform by inverse STFT.
//!
//! The crate is self-contained: a small reverse-mode autodiff engine
//! ([`autodiff`]) drives the generator ([`generator`]), the adversarial
//! ensemble ([`discriminator`]) and the training loop ([`train`]).

pub mod autodiff;
pub mod cli;
pub mod config;
pub mod discriminator;
pub mod dsp;
pub mod error;
pub mod float;
pub mod generator;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod nn;
pub mod train;

pub use error::{Error, Result};
pub use float::Float;
