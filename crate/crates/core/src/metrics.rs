//! Objective quality metrics: SNR, log-amplitude-spectrum RMSE, mel-cepstral
//! distortion, YIN-style F0 tracking with F0-RMSE and V/UV error, and the
//! real-time factor.

use std::fmt::Write as _;

use crate::dsp::{stft, MelFilterbank, StftConfig, AMP_FLOOR};
use crate::error::{Error, Result};
use crate::float::Float;

/// SNR reported when the residual vanishes (or the ratio exceeds it).
pub const SNR_CEILING_DB: f64 = 100.0;
/// Mel-cepstral coefficients compared by [`mcd`], excluding `c0`.
pub const MCD_ORDER: usize = 13;

fn same_len(op: &'static str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::shape(op, &[a], &[b]));
    }
    Ok(())
}

/// `10 log10(Σ ref² / Σ (ref − est)²)`, saturating at [`SNR_CEILING_DB`].
pub fn snr<T: Float>(reference: &[T], estimate: &[T]) -> Result<f64> {
    same_len("snr", reference.len(), estimate.len())?;
    let signal: f64 = reference.iter().map(|v| v.as_f64().powi(2)).sum();
    if signal == 0.0 {
        return Err(Error::Undefined("SNR of an all-zero reference".into()));
    }
    let noise: f64 = reference
        .iter()
        .zip(estimate)
        .map(|(a, b)| (a.as_f64() - b.as_f64()).powi(2))
        .sum();
    if noise == 0.0 {
        return Ok(SNR_CEILING_DB);
    }
    Ok((10.0 * (signal / noise).log10()).min(SNR_CEILING_DB))
}

fn log_magnitudes<T: Float>(x: &[T], cfg: &StftConfig) -> Result<Vec<f64>> {
    let x: Vec<f64> = x.iter().map(|v| v.as_f64()).collect();
    let spec = stft(&x, cfg)?;
    Ok(spec.magnitude().as_slice().iter().map(|m| m.max(AMP_FLOOR).ln()).collect())
}

/// RMS over all frames and bins of `20 log10 |S_ref| − 20 log10 |S_est|`
/// (magnitudes floored at `1e-5`).
pub fn las_rmse<T: Float>(reference: &[T], estimate: &[T], cfg: &StftConfig) -> Result<f64> {
    same_len("las_rmse", reference.len(), estimate.len())?;
    let a = log_magnitudes(reference, cfg)?;
    let b = log_magnitudes(estimate, cfg)?;
    if a.is_empty() {
        return Err(Error::EmptyWaveform);
    }
    let k = 20.0 / std::f64::consts::LN_10;
    let ms = a.iter().zip(&b).map(|(x, y)| (k * (x - y)).powi(2)).sum::<f64>() / a.len() as f64;
    Ok(ms.sqrt())
}

/// Orthonormal DCT-II of `x`, first `n` coefficients.
pub fn dct2(x: &[f64], n: usize) -> Vec<f64> {
    let m = x.len() as f64;
    (0..n)
        .map(|k| {
            let s: f64 = x
                .iter()
                .enumerate()
                .map(|(i, &v)| v * (std::f64::consts::PI * k as f64 * (i as f64 + 0.5) / m).cos())
                .sum();
            s * if k == 0 { (1.0 / m).sqrt() } else { (2.0 / m).sqrt() }
        })
        .collect()
}

/// Per-frame mel-cepstra `c_0 ..= c_order` of a waveform.
pub fn mel_cepstra<T: Float>(x: &[T], fb: &MelFilterbank, cfg: &StftConfig, order: usize) -> Result<Vec<Vec<f64>>> {
    let x: Vec<f64> = x.iter().map(|v| v.as_f64()).collect();
    let mel = crate::dsp::mel_spectrogram(&x, fb, cfg)?;
    Ok((0..mel.frames()).map(|f| dct2(mel.0.row(f), order + 1)).collect())
}

/// `(10/ln 10)·√2 · mean_t √Σ_{d=1..D} (c_d − ĉ_d)²` over paired cepstral frames.
pub fn mcd_from_cepstra(reference: &[Vec<f64>], estimate: &[Vec<f64>]) -> Result<f64> {
    same_len("mcd", reference.len(), estimate.len())?;
    if reference.is_empty() {
        return Err(Error::EmptyWaveform);
    }
    let k = 10.0 / std::f64::consts::LN_10 * std::f64::consts::SQRT_2;
    let total: f64 = reference
        .iter()
        .zip(estimate)
        .map(|(a, b)| {
            a.iter()
                .zip(b)
                .skip(1)
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .sum();
    Ok(k * total / reference.len() as f64)
}

/// Mel-cepstral distortion over [`MCD_ORDER`] coefficients, `c0` excluded.
pub fn mcd<T: Float>(reference: &[T], estimate: &[T], fb: &MelFilterbank, cfg: &StftConfig) -> Result<f64> {
    same_len("mcd", reference.len(), estimate.len())?;
    let a = mel_cepstra(reference, fb, cfg, MCD_ORDER)?;
    let b = mel_cepstra(estimate, fb, cfg, MCD_ORDER)?;
    mcd_from_cepstra(&a, &b)
}

/// Per-frame F0 in Hz (0 when unvoiced).
#[derive(Debug, Clone, PartialEq)]
pub struct F0Track {
    pub f0: Vec<f64>,
    pub voiced: Vec<bool>,
}

impl F0Track {
    pub fn len(&self) -> usize {
        self.f0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YinConfig {
    pub threshold: f64,
    pub f_min: f64,
    pub f_max: f64,
    /// Frames whose RMS is below this are unvoiced without analysis.
    pub silence_rms: f64,
}

impl Default for YinConfig {
    fn default() -> Self {
        YinConfig {
            threshold: 0.15,
            f_min: 60.0,
            f_max: 500.0,
            silence_rms: 1e-4,
        }
    }
}

/// YIN pitch track on the frame grid of `cfg`: frame `t` integrates over
/// `n_fft` samples centered on sample `t · hop`, with zeros outside the signal.
pub fn f0_estimate<T: Float>(x: &[T], sample_rate: u32, cfg: &StftConfig, yin: &YinConfig) -> F0Track {
    let sr = sample_rate as f64;
    let w = cfg.n_fft;
    let tau_min = ((sr / yin.f_max).floor() as usize).max(2);
    let tau_max = (sr / yin.f_min).ceil() as usize;
    let frames = cfg.frames_for(x.len());
    let at = |i: isize| -> f64 {
        if i < 0 || i as usize >= x.len() {
            0.0
        } else {
            x[i as usize].as_f64()
        }
    };
    let mut track = F0Track {
        f0: vec![0.0; frames],
        voiced: vec![false; frames],
    };
    let mut seg = vec![0.0; w + tau_max + 1];
    let mut d = vec![0.0; tau_max + 2];
    for t in 0..frames {
        let start = (t * cfg.hop) as isize - (w / 2) as isize;
        for (j, s) in seg.iter_mut().enumerate() {
            *s = at(start + j as isize);
        }
        let energy: f64 = seg[..w].iter().map(|v| v * v).sum::<f64>() / w as f64;
        if energy.sqrt() < yin.silence_rms {
            continue;
        }
        for (tau, dv) in d.iter_mut().enumerate().take(tau_max + 2).skip(1) {
            if tau + w > seg.len() {
                *dv = f64::INFINITY;
                continue;
            }
            *dv = (0..w).map(|j| (seg[j] - seg[j + tau]).powi(2)).sum();
        }
        // cumulative mean normalized difference
        let mut cmnd = vec![1.0; tau_max + 2];
        let mut running = 0.0;
        for tau in 1..=tau_max {
            running += d[tau];
            cmnd[tau] = if running > 0.0 { d[tau] * tau as f64 / running } else { 1.0 };
        }
        let Some(mut tau) = (tau_min..=tau_max).find(|&tau| cmnd[tau] < yin.threshold) else {
            continue;
        };
        while tau < tau_max && cmnd[tau + 1] < cmnd[tau] {
            tau += 1;
        }
        let (a, b, c) = (cmnd[tau - 1], cmnd[tau], cmnd[tau + 1]);
        let denom = a - 2.0 * b + c;
        let shift = if tau < tau_max && denom.abs() > 1e-12 { 0.5 * (a - c) / denom } else { 0.0 };
        let f0 = sr / (tau as f64 + shift.clamp(-1.0, 1.0));
        if (yin.f_min..=yin.f_max).contains(&f0) {
            track.f0[t] = f0;
            track.voiced[t] = true;
        }
    }
    track
}

/// RMS of `1200 log2(f̂ / f)` over frames voiced in both tracks; `None` if there are none.
pub fn f0_rmse_cents(reference: &F0Track, estimate: &F0Track) -> Result<Option<f64>> {
    same_len("f0_rmse", reference.len(), estimate.len())?;
    let diffs: Vec<f64> = reference
        .f0
        .iter()
        .zip(&estimate.f0)
        .zip(reference.voiced.iter().zip(&estimate.voiced))
        .filter(|(_, (a, b))| **a && **b)
        .map(|((f, g), _)| 1200.0 * (g / f).log2())
        .collect();
    if diffs.is_empty() {
        return Ok(None);
    }
    Ok(Some((diffs.iter().map(|d| d * d).sum::<f64>() / diffs.len() as f64).sqrt()))
}

/// Percentage of frames whose voicing decisions differ.
pub fn vuv_error(reference: &F0Track, estimate: &F0Track) -> Result<f64> {
    same_len("vuv_error", reference.len(), estimate.len())?;
    if reference.is_empty() {
        return Err(Error::EmptyWaveform);
    }
    let wrong = reference.voiced.iter().zip(&estimate.voiced).filter(|(a, b)| a != b).count();
    Ok(100.0 * wrong as f64 / reference.len() as f64)
}

/// Real-time factor and its reciprocal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rtf {
    pub rtf: f64,
    pub multiple: f64,
}

impl std::fmt::Display for Rtf {
    /// `0.021 (47.73×)`.
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.3} ({:.2}×)", self.rtf, self.multiple)
    }
}

/// `rtf = generation / audio`, `multiple = audio / generation`.
pub fn rtf(generation_secs: f64, audio_secs: f64) -> Result<Rtf> {
    if !(generation_secs > 0.0 && audio_secs > 0.0 && generation_secs.is_finite() && audio_secs.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "RTF needs positive durations, got {generation_secs} s and {audio_secs} s"
        )));
    }
    Ok(Rtf {
        rtf: generation_secs / audio_secs,
        multiple: audio_secs / generation_secs,
    })
}

/// Metrics of one reference/estimate pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub snr_db: f64,
    pub las_rmse_db: f64,
    pub mcd_db: f64,
    /// `None` when no frame is voiced in both signals.
    pub f0_rmse_cents: Option<f64>,
    pub vuv_error_pct: f64,
    pub rtf: Option<Rtf>,
}

impl MetricReport {
    pub fn snr_saturated(&self) -> bool {
        self.snr_db >= SNR_CEILING_DB
    }

    /// Every metric of `reference` against `estimate`.
    pub fn compute<T: Float>(
        reference: &[T],
        estimate: &[T],
        sample_rate: u32,
        fb: &MelFilterbank,
        cfg: &StftConfig,
    ) -> Result<Self> {
        let yin = YinConfig::default();
        let fr = f0_estimate(reference, sample_rate, cfg, &yin);
        let fe = f0_estimate(estimate, sample_rate, cfg, &yin);
        Ok(MetricReport {
            snr_db: snr(reference, estimate)?,
            las_rmse_db: las_rmse(reference, estimate, cfg)?,
            mcd_db: mcd(reference, estimate, fb, cfg)?,
            f0_rmse_cents: f0_rmse_cents(&fr, &fe)?,
            vuv_error_pct: vuv_error(&fr, &fe)?,
            rtf: None,
        })
    }

    /// Mean of each metric; F0-RMSE averages only the defined values.
    pub fn mean(reports: &[MetricReport]) -> Option<MetricReport> {
        if reports.is_empty() {
            return None;
        }
        let n = reports.len() as f64;
        let avg = |f: fn(&MetricReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        let f0: Vec<f64> = reports.iter().filter_map(|r| r.f0_rmse_cents).collect();
        Some(MetricReport {
            snr_db: avg(|r| r.snr_db),
            las_rmse_db: avg(|r| r.las_rmse_db),
            mcd_db: avg(|r| r.mcd_db),
            f0_rmse_cents: (!f0.is_empty()).then(|| f0.iter().sum::<f64>() / f0.len() as f64),
            vuv_error_pct: avg(|r| r.vuv_error_pct),
            rtf: None,
        })
    }

    fn fields(&self) -> Vec<(&'static str, String)> {
        let snr = if self.snr_saturated() {
            format!("{SNR_CEILING_DB:.2}(sat)")
        } else {
            format!("{:.2}", self.snr_db)
        };
        let mut v = vec![
            ("snr_db", snr),
            ("las_rmse_db", format!("{:.3}", self.las_rmse_db)),
            ("mcd_db", format!("{:.3}", self.mcd_db)),
            (
                "f0_rmse_cents",
                self.f0_rmse_cents.map_or("undefined".to_string(), |c| format!("{c:.2}")),
            ),
            ("vuv_error_pct", format!("{:.2}", self.vuv_error_pct)),
        ];
        if let Some(r) = self.rtf {
            v.push(("rtf", format!("{:.3}", r.rtf)));
            v.push(("rtf_multiple", format!("{:.2}", r.multiple)));
        }
        v
    }

    /// `<row>.<metric>=<value>` lines.
    pub fn name_values(&self, row: &str) -> String {
        self.fields().iter().map(|(k, v)| format!("{row}.{k}={v}\n")).collect()
    }
}

/// Aligned plain-text table with one row per `(label, report)`.
pub fn metrics_table(rows: &[(String, MetricReport)]) -> String {
    let header = ["", "SNR(dB)", "LAS-RMSE(dB)", "MCD(dB)", "F0-RMSE(cents)", "V/UV(%)"];
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|(label, r)| {
            let mut c = vec![label.clone()];
            c.extend(r.fields().into_iter().take(5).map(|(_, v)| v));
            c
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|i| cells.iter().map(|r| r[i].chars().count()).chain([header[i].len()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    let mut line = |cols: Vec<&str>| {
        let parts: Vec<String> = cols
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, &w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(header.to_vec());
    for r in &cells {
        line(r.iter().map(String::as_str).collect());
    }
    out
}
