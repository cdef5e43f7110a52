//! Single-clip overfit run with the desk preset.
//!
//! `cargo run --release --example overfit -- [steps] [crop] [lr]`
//!
//! Prints the full-clip mel loss periodically and the analysis-synthesis SNR at the end.

use std::time::Instant;

use apnet2::config::RunConfig;
use apnet2::io::read_wav;
use apnet2::train::Trainer;

fn main() -> apnet2::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let steps: u64 = args.first().and_then(|s| s.parse().ok()).unwrap_or(500);
    let crop: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(22272);
    let lr: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2e-3);
    let clip = read_wav::<f32>(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/speech_1s.wav"), Some(22050))?;
    let mut cfg = RunConfig::desk();
    cfg.train.batch_size = 1;
    cfg.train.crop_samples = crop;
    cfg.train.lr = lr;
    cfg.train.max_steps = steps;
    cfg.validate()?;
    let mut t = Trainer::new(cfg, vec![clip.samples().to_vec()])?;
    let start = Instant::now();
    for s in 1..=steps {
        let r = t.step()?;
        if s == 1 || s == 10 || s % 100 == 0 {
            let full = t.mel_loss_on(clip.samples())?;
            println!(
                "{}  mel_full={full:.4}  snr={:.2}  t={:.1}s",
                r.log_line(s, t.lr()),
                snr(&t, clip.samples())?,
                start.elapsed().as_secs_f64()
            );
        }
    }
    println!("snr_db={:.3}", snr(&t, clip.samples())?);
    Ok(())
}

fn snr(t: &Trainer<f32>, clip: &[f32]) -> apnet2::Result<f64> {
    let (reference, est) = t.analysis_synthesis(clip)?;
    apnet2::metrics::snr(&reference, &est)
}
