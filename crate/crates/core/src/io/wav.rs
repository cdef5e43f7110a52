//! Mono 16-bit PCM WAV. Samples map to `[-1, 1)` by `/ 32768`; writing
//! rounds to nearest and clamps.

use std::path::Path;

use crate::dsp::Waveform;
use crate::error::{Error, Result};
use crate::float::Float;

const SCALE: f64 = 32768.0;

fn wav_err(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::Io(io),
        hound::Error::Unsupported => Error::UnsupportedCodec {
            path: path.to_path_buf(),
            reason: "not integer PCM".into(),
        },
        other => Error::Wav {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    }
}

/// Read a mono 16-bit PCM file. With `expected_rate`, any other rate is an error.
pub fn read_wav<T: Float>(path: impl AsRef<Path>, expected_rate: Option<u32>) -> Result<Waveform<T>> {
    let path = path.as_ref();
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    // the file opened, so read failures mean malformed content
    let malformed = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::Wav {
            path: path.to_path_buf(),
            reason: io.to_string(),
        },
        e => wav_err(path, e),
    };
    let reader = hound::WavReader::new(file).map_err(malformed)?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::UnsupportedCodec {
            path: path.to_path_buf(),
            reason: format!("{:?} {}-bit; only 16-bit integer PCM is supported", spec.sample_format, spec.bits_per_sample),
        });
    }
    if spec.channels != 1 {
        return Err(Error::Wav {
            path: path.to_path_buf(),
            reason: format!("{} channels; only mono is supported", spec.channels),
        });
    }
    if let Some(expected) = expected_rate {
        if spec.sample_rate != expected {
            return Err(Error::SampleRateMismatch {
                expected,
                found: spec.sample_rate,
            });
        }
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| T::lit(v as f64 / SCALE)).map_err(malformed))
        .collect::<Result<Vec<T>>>()?;
    Waveform::new(samples, spec.sample_rate)
}

/// Write `w` as mono 16-bit PCM.
pub fn write_wav<T: Float>(path: impl AsRef<Path>, w: &Waveform<T>) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| wav_err(path, e))?;
    for &s in w.samples() {
        let q = (s.as_f64() * SCALE).round().clamp(-SCALE, SCALE - 1.0) as i16;
        writer.write_sample(q).map_err(|e| wav_err(path, e))?;
    }
    writer.finalize().map_err(|e| wav_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write_raw(path: &Path, channels: u16, bits: u16, fmt: hound::SampleFormat, rate: u32) {
        let spec = hound::WavSpec {
            channels,
            sample_rate: rate,
            bits_per_sample: bits,
            sample_format: fmt,
        };
        let mut w = hound::WavWriter::create(path, spec).unwrap();
        for i in 0..(10 * channels as i32) {
            match (fmt, bits) {
                (hound::SampleFormat::Float, _) => w.write_sample(i as f32 * 0.01).unwrap(),
                (_, 8) => w.write_sample(i as i8).unwrap(),
                _ => w.write_sample(i as i16).unwrap(),
            }
        }
        w.finalize().unwrap();
    }

    #[test]
    fn full_scale_value() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 22050,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&p, spec).unwrap();
        for v in [32767i16, -32768, 0, 1] {
            w.write_sample(v).unwrap();
        }
        w.finalize().unwrap();
        let r = read_wav::<f64>(&p, Some(22050)).unwrap();
        assert_eq!(r.samples(), &[32767.0 / 32768.0, -1.0, 0.0, 1.0 / 32768.0]);
        assert!((r.samples()[0] - 0.99997).abs() < 1e-5);
    }

    #[test]
    fn write_clamps_and_rounds() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.wav");
        let w = Waveform::new(vec![2.0f64, -2.0, 0.4 / 32768.0, 0.6 / 32768.0, -0.6 / 32768.0], 22050).unwrap();
        write_wav(&p, &w).unwrap();
        let ints: Vec<i16> = hound::WavReader::open(&p).unwrap().into_samples().map(|s| s.unwrap()).collect();
        assert_eq!(ints, vec![32767, -32768, 0, 1, -1]);
    }

    #[test]
    fn rejects_unsupported_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let p8 = dir.path().join("8.wav");
        write_raw(&p8, 1, 8, hound::SampleFormat::Int, 22050);
        assert!(matches!(read_wav::<f32>(&p8, None), Err(Error::UnsupportedCodec { .. })));
        let pf = dir.path().join("f.wav");
        write_raw(&pf, 1, 32, hound::SampleFormat::Float, 22050);
        assert!(matches!(read_wav::<f32>(&pf, None), Err(Error::UnsupportedCodec { .. })));
        let ps = dir.path().join("s.wav");
        write_raw(&ps, 2, 16, hound::SampleFormat::Int, 22050);
        assert!(matches!(read_wav::<f32>(&ps, None), Err(Error::Wav { .. })));
        let pr = dir.path().join("r.wav");
        write_raw(&pr, 1, 16, hound::SampleFormat::Int, 16000);
        assert!(matches!(
            read_wav::<f32>(&pr, Some(22050)),
            Err(Error::SampleRateMismatch { expected: 22050, found: 16000 })
        ));
        assert!(read_wav::<f32>(&pr, None).is_ok());
        let bad = dir.path().join("bad.wav");
        std::fs::write(&bad, b"RIFF\x04\x00\x00\x00WAVEjunk").unwrap();
        assert!(matches!(read_wav::<f32>(&bad, None), Err(Error::Wav { .. })));
        assert!(matches!(read_wav::<f32>(dir.path().join("none.wav"), None), Err(Error::Io(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn roundtrip_within_quantization(samples in proptest::collection::vec(-1.0f64..1.0, 1..400)) {
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("r.wav");
            write_wav(&p, &Waveform::new(samples.clone(), 22050).unwrap()).unwrap();
            let back = read_wav::<f64>(&p, Some(22050)).unwrap();
            prop_assert_eq!(back.len(), samples.len());
            for (a, b) in samples.iter().zip(back.samples()) {
                prop_assert!((a - b).abs() <= 1.0 / 32768.0);
            }
        }
    }
}
