//! Command-line front end: `features`, `train`, `synth`, `eval` and `bench`.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric abort.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::dsp::{log_amplitude, mel_spectrogram, phase_of, stft, Matrix, MelSpectrogram, Waveform, AMP_FLOOR};
use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::io::{read_array, read_wav, write_array, write_wav, Array, ArrayData, Manifest, Split};
use crate::metrics::{metrics_table, rtf, MetricReport, Rtf};
use crate::train::{load_checkpoint, save_checkpoint, Trainer};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "apnet2", version, about = "Mel-spectrogram vocoder with parallel amplitude and phase prediction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write mel, log-amplitude and phase arrays (.apna, f64) for each input.
    Features {
        config: PathBuf,
        #[arg(required = true)]
        wavs: Vec<PathBuf>,
        /// Output directory (default: next to each input).
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Train on the `train` split of a manifest.
    Train {
        config: PathBuf,
        manifest: PathBuf,
        /// Directory for checkpoints and the training log.
        #[arg(long, default_value = "run")]
        out_dir: PathBuf,
        /// Continue from a checkpoint instead of a fresh initialization.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Generate a waveform from a wav (analysis-synthesis) or a `[frames, n_mels]` .apna mel.
    Synth {
        config: PathBuf,
        checkpoint: PathBuf,
        input: PathBuf,
        output: PathBuf,
    },
    /// Paired metrics between same-named wav files of two directories.
    Eval {
        config: PathBuf,
        ref_dir: PathBuf,
        est_dir: PathBuf,
    },
    /// Real-time factor of generation over a manifest (warm-up excluded).
    Bench {
        config: PathBuf,
        checkpoint: PathBuf,
        manifest: PathBuf,
    },
}

/// Exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NumericAbort(_) | Error::NonFinite(_) => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if code == EXIT_OK { write!(out, "{e}") } else { write!(err, "{e}") };
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

pub fn execute(cmd: Command, out: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::Features { config, wavs, out_dir } => features(&RunConfig::load(config)?, &wavs, out_dir.as_deref(), out),
        Command::Train {
            config,
            manifest,
            out_dir,
            resume,
        } => train(&RunConfig::load(config)?, &manifest, &out_dir, resume.as_deref(), out),
        Command::Synth {
            config,
            checkpoint,
            input,
            output,
        } => synth(&RunConfig::load(config)?, &checkpoint, &input, &output, out),
        Command::Eval {
            config,
            ref_dir,
            est_dir,
        } => eval(&RunConfig::load(config)?, &ref_dir, &est_dir, out),
        Command::Bench {
            config,
            checkpoint,
            manifest,
        } => {
            let cfg = RunConfig::load(config)?;
            let report = bench(&cfg, &checkpoint, &Manifest::load(manifest)?)?;
            writeln!(out, "files={}", report.files)?;
            writeln!(out, "audio_seconds={:.6}", report.audio_secs)?;
            writeln!(out, "generation_seconds={:.6}", report.generation_secs)?;
            writeln!(out, "rtf={:.6}", report.rtf.rtf)?;
            writeln!(out, "rtf_multiple={:.6}", report.rtf.multiple)?;
            writeln!(out, "RTF {}", report.rtf)?;
            Ok(())
        }
    }
}

fn matrix_array(m: &Matrix<f64>) -> Result<Array> {
    Array::new(vec![m.rows(), m.cols()], ArrayData::F64(m.as_slice().to_vec()))
}

fn stem(p: &Path) -> String {
    p.file_stem().map_or_else(|| "out".into(), |s| s.to_string_lossy().into_owned())
}

/// Extract `<stem>.mel.apna`, `<stem>.logamp.apna` and `<stem>.phase.apna`, all `[frames, dim]` f64.
pub fn features(cfg: &RunConfig, wavs: &[PathBuf], out_dir: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let fb = cfg.filterbank()?;
    for wav in wavs {
        let w = read_wav::<f64>(wav, Some(cfg.sample_rate))?;
        let spec = stft(w.samples(), &cfg.stft)?;
        let mel = fb.apply_log(&spec.magnitude())?;
        let logamp = log_amplitude(&spec, AMP_FLOOR)?;
        let phase = phase_of(&spec);
        let dir = out_dir.map_or_else(|| wav.parent().unwrap_or(Path::new(".")).to_path_buf(), Path::to_path_buf);
        let s = stem(wav);
        for (kind, m) in [("mel", &mel.0), ("logamp", &logamp.0), ("phase", &phase.0)] {
            let p = dir.join(format!("{s}.{kind}.apna"));
            write_array(&p, &matrix_array(m)?)?;
            writeln!(out, "{}", p.display())?;
        }
    }
    Ok(())
}

fn load_clips(cfg: &RunConfig, paths: &[&Path]) -> Result<Vec<Vec<f32>>> {
    paths
        .iter()
        .map(|p| read_wav::<f32>(p, Some(cfg.sample_rate)).map(Waveform::into_samples))
        .collect()
}

/// Train for `max_steps` total steps, logging one line per step.
pub fn train(cfg: &RunConfig, manifest: &Path, out_dir: &Path, resume: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let m = Manifest::load(manifest)?;
    let paths = m.paths(Split::Train);
    if paths.is_empty() {
        return Err(Error::Manifest(format!("{}: no train entries", manifest.display())));
    }
    let clips = load_clips(cfg, &paths)?;
    std::fs::create_dir_all(out_dir)?;
    let mut trainer = match resume {
        Some(p) => Trainer::from_state(load_checkpoint(p)?, clips)?,
        None => Trainer::new(cfg.clone(), clips)?,
    };
    let mut log = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(out_dir.join("train.log"))?;
    let every = cfg.train.checkpoint_every;
    while trainer.step_count() < cfg.train.max_steps {
        let lr = trainer.lr();
        let report = match trainer.step() {
            Ok(r) => r,
            Err(e) => {
                writeln!(log, "abort at step {}: {e}", trainer.step_count() + 1)?;
                return Err(e);
            }
        };
        let line = report.log_line(trainer.step_count(), lr);
        writeln!(out, "{line}")?;
        writeln!(log, "{line}")?;
        if every > 0 && trainer.step_count() % every == 0 {
            save_checkpoint(trainer.state(), out_dir.join(format!("step_{:08}.ckpt", trainer.step_count())))?;
        }
    }
    let last = out_dir.join("last.ckpt");
    save_checkpoint(trainer.state(), &last)?;
    writeln!(out, "checkpoint={}", last.display())?;
    Ok(())
}

fn load_generator(cfg: &RunConfig, checkpoint: &Path) -> Result<Generator<f32>> {
    let state = load_checkpoint::<f32>(checkpoint)?;
    let g = state.generator;
    if g.config() != &cfg.generator_config() {
        return Err(Error::Config(format!(
            "checkpoint {} was trained with a different model or STFT configuration",
            checkpoint.display()
        )));
    }
    Ok(g)
}

fn mel_from_array(a: &Array, n_mels: usize) -> Result<MelSpectrogram<f32>> {
    if a.shape.len() != 2 || a.shape[1] != n_mels || a.shape[0] == 0 {
        return Err(Error::ArrayFormat(format!("expected a [frames, {n_mels}] mel array, got {:?}", a.shape)));
    }
    let data = a.data.to_f64().into_iter().map(|v| v as f32).collect();
    Ok(MelSpectrogram(Matrix::new(a.shape[0], a.shape[1], data)?))
}

/// Mel of a wav input, or the array itself for `.apna` input.
fn input_mel(cfg: &RunConfig, input: &Path) -> Result<MelSpectrogram<f32>> {
    if input.extension().is_some_and(|e| e == "apna") {
        mel_from_array(&read_array(input)?, cfg.mel.n_mels)
    } else {
        let w = read_wav::<f32>(input, Some(cfg.sample_rate))?;
        mel_spectrogram(w.samples(), &cfg.filterbank()?, &cfg.stft)
    }
}

pub fn synth(cfg: &RunConfig, checkpoint: &Path, input: &Path, output: &Path, out: &mut dyn Write) -> Result<()> {
    let g = load_generator(cfg, checkpoint)?;
    let mel = input_mel(cfg, input)?;
    let samples = g.generate(&mel)?;
    if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("generated sample {i}")));
    }
    let n = samples.len();
    write_wav(output, &Waveform::new(samples, cfg.sample_rate)?)?;
    writeln!(out, "frames={} samples={n} output={}", mel.frames(), output.display())?;
    Ok(())
}

fn wav_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")))
        .collect();
    v.sort();
    Ok(v)
}

/// Metric rows for every `*.wav` in `ref_dir` paired by name with `est_dir`, plus a mean row.
pub fn eval_dirs(cfg: &RunConfig, ref_dir: &Path, est_dir: &Path) -> Result<Vec<(String, MetricReport)>> {
    let refs = wav_files(ref_dir)?;
    if refs.is_empty() {
        return Err(Error::InvalidArgument(format!("no wav files in {}", ref_dir.display())));
    }
    let fb = cfg.filterbank()?;
    let mut rows = Vec::new();
    for r in &refs {
        let name = r.file_name().expect("file").to_string_lossy().into_owned();
        let e = est_dir.join(&name);
        if !e.is_file() {
            return Err(Error::InvalidArgument(format!("{} has no counterpart in {}", name, est_dir.display())));
        }
        let a = read_wav::<f64>(r, Some(cfg.sample_rate))?;
        let b = read_wav::<f64>(&e, Some(cfg.sample_rate))?;
        // generated audio may be padded to whole frames
        let n = a.len().min(b.len());
        let report = MetricReport::compute(&a.samples()[..n], &b.samples()[..n], cfg.sample_rate, &fb, &cfg.stft)?;
        rows.push((name, report));
    }
    let reports: Vec<MetricReport> = rows.iter().map(|r| r.1.clone()).collect();
    if let Some(mean) = MetricReport::mean(&reports) {
        rows.push(("mean".into(), mean));
    }
    Ok(rows)
}

pub fn eval(cfg: &RunConfig, ref_dir: &Path, est_dir: &Path, out: &mut dyn Write) -> Result<()> {
    let rows = eval_dirs(cfg, ref_dir, est_dir)?;
    write!(out, "{}", metrics_table(&rows))?;
    writeln!(out)?;
    for (label, r) in &rows {
        write!(out, "{}", r.name_values(label))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchReport {
    pub files: usize,
    pub audio_secs: f64,
    pub generation_secs: f64,
    pub rtf: Rtf,
}

/// Time generation for every manifest entry. Features are extracted first and
/// one untimed warm-up generation runs before the clock starts.
pub fn bench(cfg: &RunConfig, checkpoint: &Path, manifest: &Manifest) -> Result<BenchReport> {
    let g = load_generator(cfg, checkpoint)?;
    bench_generator(cfg, &g, manifest)
}

pub fn bench_generator(cfg: &RunConfig, g: &Generator<f32>, manifest: &Manifest) -> Result<BenchReport> {
    let fb = cfg.filterbank()?;
    let mut mels = Vec::new();
    let mut audio_secs = 0.0;
    for e in &manifest.entries {
        let w = read_wav::<f32>(&e.path, Some(cfg.sample_rate))?;
        audio_secs += w.duration_secs();
        mels.push(mel_spectrogram(w.samples(), &fb, &cfg.stft)?);
    }
    let first = mels
        .first()
        .ok_or_else(|| Error::Manifest("bench manifest is empty".into()))?;
    g.generate(first)?;
    let start = Instant::now();
    for m in &mels {
        std::hint::black_box(g.generate(m)?);
    }
    let generation_secs = start.elapsed().as_secs_f64();
    Ok(BenchReport {
        files: mels.len(),
        audio_secs,
        generation_secs,
        rtf: rtf(generation_secs, audio_secs)?,
    })
}
