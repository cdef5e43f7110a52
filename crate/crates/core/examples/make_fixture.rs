//! Writes the bundled 1-second speech-like fixture clip.
//!
//! `cargo run --example make_fixture -- <out.wav>`
//!
//! Two vowels with gliding pitch and formant envelopes, a fricative burst in
//! between and a quiet tail. Fully deterministic.

use std::f64::consts::PI;

use apnet2::dsp::{Waveform, DEFAULT_SAMPLE_RATE};
use apnet2::io::write_wav;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn formant_gain(f: f64, formants: &[(f64, f64)]) -> f64 {
    formants
        .iter()
        .map(|&(fc, bw)| 1.0 / (1.0 + ((f - fc) / bw).powi(2)))
        .sum::<f64>()
        * (-f / 4000.0).exp()
}

fn vowel(out: &mut [f64], start: usize, len: usize, f0: (f64, f64), formants: &[(f64, f64)], sr: f64) {
    let mut phase = 0.0;
    for i in 0..len {
        let t = i as f64 / len as f64;
        let f = f0.0 + (f0.1 - f0.0) * t;
        phase += 2.0 * PI * f / sr;
        let fade = (i.min(len - 1 - i) as f64 / (0.015 * sr)).min(1.0);
        let mut s = 0.0;
        let mut k = 1;
        while k as f64 * f < 5000.0 {
            s += formant_gain(k as f64 * f, formants) * (k as f64 * phase).sin() / (k as f64).sqrt();
            k += 1;
        }
        out[start + i] += fade * s;
    }
}

fn main() -> apnet2::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "tests/data/speech_1s.wav".into());
    let sr = DEFAULT_SAMPLE_RATE as f64;
    let n = DEFAULT_SAMPLE_RATE as usize;
    let mut x = vec![0.0; n];
    let mut rng = ChaCha8Rng::seed_from_u64(20240521);

    vowel(&mut x, 0, 7700, (110.0, 140.0), &[(750.0, 90.0), (1200.0, 110.0), (2600.0, 160.0)], sr);
    // fricative: differenced noise, i.e. high-pass tilted
    let (fs, fl) = (7700, 2200);
    let mut prev = 0.0;
    for i in 0..fl {
        let w: f64 = rng.gen_range(-1.0..1.0);
        let fade = (i.min(fl - 1 - i) as f64 / (0.01 * sr)).min(1.0);
        x[fs + i] += 0.35 * fade * (w - prev);
        prev = w;
    }
    vowel(&mut x, 9900, 8800, (140.0, 100.0), &[(300.0, 60.0), (2300.0, 140.0), (3000.0, 180.0)], sr);
    for v in x.iter_mut().skip(18700) {
        *v += 0.002 * rng.gen_range(-1.0..1.0);
    }

    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let x: Vec<f64> = x.iter().map(|v| 0.5 * v / peak).collect();
    write_wav(&path, &Waveform::new(x, DEFAULT_SAMPLE_RATE)?)?;
    println!("wrote {path}");
    Ok(())
}
