//! C ABI over the vocoder.
//!
//! Every fallible function returns an [`Apnet2Status`]; on failure a message is
//! kept per thread and can be read with [`apnet2_last_error`]. Handles are
//! opaque, created by `apnet2_vocoder_new*` and released with
//! [`apnet2_vocoder_free`]. A vocoder handle may be shared between threads for
//! inference.
//!
//! Mel buffers are row-major `[frames][n_mels]`; waveforms are mono `float`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use apnet2::config::RunConfig;
use apnet2::dsp::{anti_wrap, mel_spectrogram, phi, Matrix, MelFilterbank, MelSpectrogram};
use apnet2::generator::Generator;
use apnet2::train::load_checkpoint;
use apnet2::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Apnet2Status {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// Bad length, size or preset value.
    InvalidArgument = 2,
    /// The output buffer is smaller than the required length.
    BufferTooSmall = 3,
    /// File could not be opened or read.
    Io = 4,
    /// Malformed or incompatible file contents.
    Format = 5,
    /// Non-finite input or output.
    Numeric = 6,
    /// Internal failure; the message carries details.
    Internal = 7,
}

/// Model size.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Apnet2Preset {
    Full = 0,
    Desk = 1,
}

/// Inference handle: configuration, mel filterbank and generator weights.
pub struct Apnet2Vocoder {
    config: RunConfig,
    fb: MelFilterbank,
    generator: Generator<f32>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior NUL");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> Apnet2Status {
    match e {
        Error::Io(_) => Apnet2Status::Io,
        Error::NonFinite(_) | Error::NumericAbort(_) => Apnet2Status::Numeric,
        Error::Wav { .. }
        | Error::UnsupportedCodec { .. }
        | Error::SampleRateMismatch { .. }
        | Error::Config(_)
        | Error::Manifest(_)
        | Error::ArrayFormat(_)
        | Error::CheckpointVersion { .. }
        | Error::CheckpointChecksum
        | Error::Checkpoint(_) => Apnet2Status::Format,
        Error::Shape { .. }
        | Error::InvalidArgument(_)
        | Error::InvalidStft(_)
        | Error::EmptyWaveform
        | Error::TooShort { .. }
        | Error::Undefined(_) => Apnet2Status::InvalidArgument,
        _ => Apnet2Status::Internal,
    }
}

enum Failure {
    Status(Apnet2Status, String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

/// Run `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> Apnet2Status {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => Apnet2Status::Ok,
        Ok(Err(Failure::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            Apnet2Status::Internal
        }
    }
}

fn null(what: &str) -> Failure {
    Failure::Status(Apnet2Status::NullPointer, format!("{what} is null"))
}

unsafe fn vocoder<'a>(v: *const Apnet2Vocoder) -> Result<&'a Apnet2Vocoder, Failure> {
    v.as_ref().ok_or_else(|| null("vocoder"))
}

unsafe fn input<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn output<'a, T>(p: *mut T, capacity: usize, needed: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    if capacity < needed {
        return Err(Failure::Status(
            Apnet2Status::BufferTooSmall,
            format!("{what} holds {capacity} values, {needed} required"),
        ));
    }
    Ok(std::slice::from_raw_parts_mut(p, needed))
}

fn build(config: RunConfig, generator: Option<Generator<f32>>) -> Result<Box<Apnet2Vocoder>, Failure> {
    config.validate()?;
    let fb = config.filterbank()?;
    let generator = match generator {
        Some(g) => g,
        None => Generator::new(config.generator_config(), config.train.seed)?,
    };
    Ok(Box::new(Apnet2Vocoder { config, fb, generator }))
}

unsafe fn store(out: *mut *mut Apnet2Vocoder, v: Box<Apnet2Vocoder>) {
    *out = Box::into_raw(v);
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn apnet2_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn apnet2_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Freshly initialized (untrained) vocoder of the given preset.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn apnet2_vocoder_new(preset: Apnet2Preset, seed: u64, out: *mut *mut Apnet2Vocoder) -> Apnet2Status {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let mut config = match preset {
            Apnet2Preset::Full => RunConfig::default(),
            Apnet2Preset::Desk => RunConfig::desk(),
        };
        config.train.seed = seed;
        store(out, build(config, None)?);
        Ok(())
    })
}

/// Vocoder with the generator weights and configuration of a training checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated UTF-8 string; `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn apnet2_vocoder_load(path: *const c_char, out: *mut *mut Apnet2Vocoder) -> Apnet2Status {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Failure::Status(Apnet2Status::InvalidArgument, "path is not UTF-8".into()))?;
        let state = load_checkpoint::<f32>(Path::new(path))?;
        store(out, build(state.config, Some(state.generator))?);
        Ok(())
    })
}

/// Release a handle; null is ignored.
///
/// # Safety
/// `v` must come from `apnet2_vocoder_new`/`apnet2_vocoder_load` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn apnet2_vocoder_free(v: *mut Apnet2Vocoder) {
    if !v.is_null() {
        drop(Box::from_raw(v));
    }
}

/// Sample rate in Hz, or 0 for a null handle.
///
/// # Safety
/// `v` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn apnet2_vocoder_sample_rate(v: *const Apnet2Vocoder) -> u32 {
    v.as_ref().map_or(0, |v| v.config.sample_rate)
}

/// Mel bands per frame, or 0 for a null handle.
///
/// # Safety
/// `v` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn apnet2_vocoder_n_mels(v: *const Apnet2Vocoder) -> usize {
    v.as_ref().map_or(0, |v| v.config.mel.n_mels)
}

/// Samples per frame, or 0 for a null handle.
///
/// # Safety
/// `v` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn apnet2_vocoder_hop(v: *const Apnet2Vocoder) -> usize {
    v.as_ref().map_or(0, |v| v.config.stft.hop)
}

/// Frame count of the mel of an `n_samples` waveform, or 0 for a null handle.
///
/// # Safety
/// `v` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn apnet2_vocoder_frames_for(v: *const Apnet2Vocoder, n_samples: usize) -> usize {
    v.as_ref().map_or(0, |v| v.config.stft.frames_for(n_samples))
}

/// Log-mel spectrogram of `samples` into `mel_out` (`frames * n_mels` values);
/// the frame count is written to `frames_out`.
///
/// # Safety
/// `samples` must hold `n_samples` floats and `mel_out` `mel_capacity` floats.
#[no_mangle]
pub unsafe extern "C" fn apnet2_vocoder_mel(
    v: *const Apnet2Vocoder,
    samples: *const f32,
    n_samples: usize,
    mel_out: *mut f32,
    mel_capacity: usize,
    frames_out: *mut usize,
) -> Apnet2Status {
    guard(|| {
        let v = vocoder(v)?;
        let x = input(samples, n_samples, "samples")?;
        if frames_out.is_null() {
            return Err(null("frames_out"));
        }
        let mel = mel_spectrogram(x, &v.fb, &v.config.stft)?;
        let dst = output(mel_out, mel_capacity, mel.0.as_slice().len(), "mel_out")?;
        dst.copy_from_slice(mel.0.as_slice());
        *frames_out = mel.frames();
        Ok(())
    })
}

/// Waveform for `frames` mel frames (`frames * hop` samples) into `wave_out`.
///
/// # Safety
/// `mel` must hold `frames * n_mels` floats and `wave_out` `wave_capacity` floats.
#[no_mangle]
pub unsafe extern "C" fn apnet2_vocoder_generate(
    v: *const Apnet2Vocoder,
    mel: *const f32,
    frames: usize,
    wave_out: *mut f32,
    wave_capacity: usize,
) -> Apnet2Status {
    guard(|| {
        let v = vocoder(v)?;
        let n_mels = v.config.mel.n_mels;
        if frames == 0 {
            return Err(Failure::Status(Apnet2Status::InvalidArgument, "frames is 0".into()));
        }
        let len = frames
            .checked_mul(n_mels)
            .ok_or_else(|| Failure::Status(Apnet2Status::InvalidArgument, "frames too large".into()))?;
        let m = input(mel, len, "mel")?;
        if let Some(i) = m.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("mel value {i}")).into());
        }
        let needed = v.config.stft.samples_for(frames);
        let dst = output(wave_out, wave_capacity, needed, "wave_out")?;
        let spec = MelSpectrogram(Matrix::new(frames, n_mels, m.to_vec())?);
        let wave = v.generator.generate(&spec)?;
        dst.copy_from_slice(&wave);
        Ok(())
    })
}

/// Principal phase of `re + i·im` in `(-π, π]`, with `phi(0, 0) = 0`.
#[no_mangle]
pub extern "C" fn apnet2_phi(re: f64, im: f64) -> f64 {
    phi(re, im)
}

/// Distance of `x` to the nearest multiple of `2π`, in `[0, π]`.
#[no_mangle]
pub extern "C" fn apnet2_anti_wrap(x: f64) -> f64 {
    anti_wrap(x)
}

/// Signal-to-noise ratio in dB of `estimate` against `reference` (both `n` samples).
///
/// # Safety
/// Both arrays must hold `n` floats; `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn apnet2_snr(reference: *const f32, estimate: *const f32, n: usize, out: *mut f64) -> Apnet2Status {
    guard(|| {
        let a = input(reference, n, "reference")?;
        let b = input(estimate, n, "estimate")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = apnet2::metrics::snr(a, b)?;
        Ok(())
    })
}
