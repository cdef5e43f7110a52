use super::*;
use crate::autodiff::Tensor;
use crate::dsp::mel_spectrogram;

fn small_config(seed: u64) -> RunConfig {
    let mut c = RunConfig::desk();
    c.train.batch_size = 2;
    c.train.crop_samples = 2048;
    c.train.seed = seed;
    c
}

fn clips() -> Vec<Vec<f32>> {
    (0..3)
        .map(|k| {
            (0..5000 + 700 * k)
                .map(|i| {
                    let t = i as f32 / 22050.0;
                    0.3 * (2.0 * std::f32::consts::PI * (150.0 + 40.0 * k as f32) * t).sin()
                })
                .collect()
        })
        .collect()
}

#[test]
fn lr_schedule_examples() {
    assert_eq!(lr_schedule(2e-4, 0.999, 0), 2e-4);
    assert!((lr_schedule(2e-4, 0.999, 1) - 1.998e-4).abs() < 1e-18);
    let oracle = 2e-4 * (1000.0 * 0.999f64.ln()).exp();
    let at_1000 = lr_schedule(2e-4, 0.999, 1000);
    assert!((at_1000 - oracle).abs() < 1e-18);
    // the commonly quoted 7.357e-5 is a rounding of 7.3539e-5
    assert!((at_1000 - 7.357e-5).abs() / 7.357e-5 < 1e-3);
    let c = TrainConfig::default();
    assert_eq!(c.lr_at(0), 2e-4);
}

#[test]
fn lr_follows_epochs_exactly() {
    let mut c = small_config(5);
    c.train.batch_size = 3;
    let mut t = Trainer::new(c.clone(), clips()).unwrap();
    for k in 0..3u64 {
        // three clips, batch of three: one epoch per step
        assert_eq!(t.epoch(), k);
        assert_eq!(t.lr(), c.train.lr * c.train.lr_decay.powf(k as f64));
        t.step().unwrap();
    }
}

#[test]
fn crop_must_be_hop_multiple() {
    let mut c = TrainConfig::default();
    c.crop_samples = 8000;
    assert!(c.validate(&StftConfig::default()).is_err());
}

#[test]
fn two_seeded_runs_are_identical() {
    let run = || {
        let mut t = Trainer::new(small_config(11), clips()).unwrap();
        (0..3).map(|_| t.step().unwrap()).collect::<Vec<_>>()
    };
    let (a, b) = (run(), run());
    assert_eq!(a, b);
    assert!(a.iter().all(|r| r.first_non_finite().is_none()));
    assert!(a[0].discriminator > 0.0 && a[0].generator > 0.0);
}

#[test]
fn discriminator_step_leaves_generator_bit_identical() {
    let mut t = Trainer::new(small_config(2), clips()).unwrap();
    let before: Vec<Tensor<f32>> = t.generator().params().iter().map(|(_, p)| p.value().clone()).collect();
    let d_before: Vec<Tensor<f32>> = t.discriminator().params().iter().map(|(_, p)| p.value().clone()).collect();
    let batch = t.next_batch().unwrap();
    let l_d = t.discriminator_step(&batch).unwrap();
    assert!(l_d.is_finite());
    for ((_, p), b) in t.generator().params().iter().zip(&before) {
        assert_eq!(p.value().data(), b.data());
        assert!(p.grad().data().iter().all(|&g| g == 0.0));
    }
    let changed = t
        .discriminator()
        .params()
        .iter()
        .zip(&d_before)
        .any(|((_, p), b)| p.value().data() != b.data());
    assert!(changed);
    assert_eq!(t.step_count(), 0);
}

#[test]
fn full_step_moves_both_models() {
    let mut t = Trainer::new(small_config(3), clips()).unwrap();
    let g0 = t.generator().params().value(crate::autodiff::ParamId(0)).clone();
    t.step().unwrap();
    assert_ne!(t.generator().params().value(crate::autodiff::ParamId(0)).data(), g0.data());
    assert_eq!(t.state().g_opt.step, 1);
    assert_eq!(t.state().d_opt.step, 1);
    assert!(!t.discriminator().params().is_frozen());
}

#[test]
fn non_finite_input_aborts_with_term_name() {
    let mut t = Trainer::new(small_config(4), clips()).unwrap();
    let mut batch = t.next_batch().unwrap();
    batch.audio.data_mut()[10] = f32::NAN;
    match t.train_step(&batch) {
        Err(Error::NumericAbort(name)) => assert!(!name.is_empty()),
        other => panic!("expected numeric abort, got {other:?}"),
    }
}

#[test]
fn objective_parts_match_weighted_total() {
    let t = Trainer::new(small_config(6), clips()).unwrap();
    let mut tr = Trainer::new(small_config(6), clips()).unwrap();
    let batch = tr.next_batch().unwrap();
    let tape = Tape::new();
    let mel = tape.constant(batch.mel.clone());
    let audio = tape.constant(batch.audio.clone());
    let out = t.generator().forward(&tape, mel).unwrap();
    let obj = GeneratorObjective {
        discriminator: t.discriminator(),
        mel: &t.mel,
        plan: t.generator().plan(),
        weights: LossWeights::default(),
        gan: GanKind::Hinge,
    };
    let (total, parts) = obj.evaluate(&tape, &out, audio).unwrap();
    let report = generator_total(&parts, &LossWeights::default());
    let v = tape.value(total).item() as f64;
    assert!((v - report.generator).abs() <= 1e-4 * report.generator.abs());
}

#[test]
fn spectral_targets_match_dsp() {
    let plan = Arc::new(StftPlan::<f64>::new(&StftConfig::default()).unwrap());
    let x: Vec<f64> = (0..2048).map(|i| ((i * 37 % 101) as f64 / 50.0) - 1.0).collect();
    let tape = Tape::no_grad();
    let a = tape.constant(Tensor::new(&[1, 2048], x.clone()).unwrap());
    let tg = SpectralTargets::new(&tape, a, &plan).unwrap();
    let spec = crate::dsp::stft(&x, &StftConfig::default()).unwrap();
    let la = crate::dsp::log_amplitude(&spec, AMP_FLOOR).unwrap();
    let ph = crate::dsp::phase_of(&spec);
    let (lv, pv) = (tape.value(tg.log_amplitude), tape.value(tg.phase));
    let frames = spec.frames();
    for f in 0..frames {
        for k in 0..spec.bins() {
            assert!((lv.data()[k * frames + f] - la.0.get(f, k)).abs() < 1e-12);
            assert!((pv.data()[k * frames + f] - ph.0.get(f, k)).abs() < 1e-12);
        }
    }
}

#[test]
fn checkpoint_roundtrip_is_bit_exact() {
    let mut t = Trainer::new(small_config(8), clips()).unwrap();
    t.step().unwrap();
    let bytes = checkpoint_bytes(t.state()).unwrap();
    let loaded: TrainState<f32> = checkpoint_from_bytes(&bytes).unwrap();
    assert_eq!(loaded.step, 1);
    assert_eq!(loaded.config, t.state().config);
    assert_eq!(loaded.g_opt, t.state().g_opt);
    assert_eq!(loaded.d_opt, t.state().d_opt);
    let fb = t.state().config.filterbank().unwrap();
    let mel = mel_spectrogram(&clips()[0], &fb, &StftConfig::default()).unwrap();
    assert_eq!(loaded.generator.generate(&mel).unwrap(), t.generator().generate(&mel).unwrap());
    assert_eq!(checkpoint_bytes(&loaded).unwrap(), bytes);

    // resumed training continues identically
    let mut resumed = Trainer::from_state(loaded, clips()).unwrap();
    assert_eq!(resumed.step().unwrap(), t.step().unwrap());
}

#[test]
fn checkpoint_file_errors() {
    let t = Trainer::new(small_config(9), clips()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.ckpt");
    save_checkpoint(t.state(), &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert!(load_checkpoint::<f32>(&path).is_ok());

    let truncated = &bytes[..bytes.len() - 100];
    assert!(matches!(checkpoint_from_bytes::<f32>(truncated), Err(Error::CheckpointChecksum)));
    assert!(matches!(checkpoint_from_bytes::<f32>(&bytes[..10]), Err(Error::CheckpointChecksum)));

    let mut flipped = bytes.clone();
    flipped[bytes.len() / 2] ^= 1;
    assert!(matches!(checkpoint_from_bytes::<f32>(&flipped), Err(Error::CheckpointChecksum)));

    let mut version = bytes.clone();
    version[8] = 99;
    assert!(matches!(
        checkpoint_from_bytes::<f32>(&version),
        Err(Error::CheckpointVersion { expected: 1, found: 99 })
    ));

    let mut magic = bytes;
    magic[0] = b'X';
    assert!(matches!(checkpoint_from_bytes::<f32>(&magic), Err(Error::Checkpoint(_))));
}
