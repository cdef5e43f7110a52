//! Seeded, resumable batch sampling with frame-aligned random crops.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;
use crate::dsp::{mel_spectrogram, MelFilterbank, StftConfig};
use crate::error::{Error, Result};
use crate::float::Float;

const CROP_DOMAIN: u64 = 0x6372_6f70;

/// Aligned training inputs: `mel` is `[B, n_mels, frames]`, `audio` is `[B, frames · hop]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T: Float> {
    pub mel: Tensor<T>,
    pub audio: Tensor<T>,
}

/// Draws clips epoch by epoch in a seeded shuffled order. The state is
/// `(epoch, cursor)`, so sampling resumes exactly from a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct CropSampler {
    seed: u64,
    clip_lens: Vec<usize>,
    order: Vec<usize>,
    pub epoch: u64,
    pub cursor: usize,
}

impl CropSampler {
    pub fn new(seed: u64, clip_lens: Vec<usize>) -> Result<Self> {
        Self::resume(seed, clip_lens, 0, 0)
    }

    pub fn resume(seed: u64, clip_lens: Vec<usize>, epoch: u64, cursor: usize) -> Result<Self> {
        if clip_lens.is_empty() {
            return Err(Error::InvalidArgument("no training clips".into()));
        }
        if cursor >= clip_lens.len() {
            return Err(Error::InvalidArgument(format!("cursor {cursor} past {} clips", clip_lens.len())));
        }
        let mut s = CropSampler {
            seed,
            clip_lens,
            order: Vec::new(),
            epoch,
            cursor,
        };
        s.shuffle();
        Ok(s)
    }

    fn shuffle(&mut self) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.epoch);
        self.order = (0..self.clip_lens.len()).collect();
        self.order.shuffle(&mut rng);
    }

    /// Next `batch` picks as `(clip index, crop start)`; starts are multiples of `hop`.
    pub fn next(&mut self, batch: usize, crop: usize, hop: usize) -> Vec<(usize, usize)> {
        let n = self.clip_lens.len();
        (0..batch)
            .map(|_| {
                let draw = self.epoch * n as u64 + self.cursor as u64;
                let clip = self.order[self.cursor];
                let len = self.clip_lens[clip];
                let slots = len.saturating_sub(crop) / hop;
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ CROP_DOMAIN);
                rng.set_stream(draw);
                let start = hop * rng.gen_range(0..=slots);
                self.cursor += 1;
                if self.cursor == n {
                    self.cursor = 0;
                    self.epoch += 1;
                    self.shuffle();
                }
                (clip, start)
            })
            .collect()
    }
}

/// Cut the picks out of `clips` (zero-padding short clips) and extract their mels.
pub fn make_batch<T: Float>(
    clips: &[Vec<T>],
    picks: &[(usize, usize)],
    crop: usize,
    fb: &MelFilterbank,
    stft: &StftConfig,
) -> Result<Batch<T>> {
    let b = picks.len();
    let frames = stft.frames_for(crop);
    let n_mels = fb.n_mels();
    let mut audio = Vec::with_capacity(b * crop);
    let mut mel = vec![T::zero(); b * n_mels * frames];
    for (bi, &(clip, start)) in picks.iter().enumerate() {
        let src = clips
            .get(clip)
            .ok_or_else(|| Error::InvalidArgument(format!("clip index {clip} out of range")))?;
        let mut seg: Vec<T> = src.iter().skip(start).take(crop).copied().collect();
        seg.resize(crop, T::zero());
        let m = mel_spectrogram(&seg, fb, stft)?;
        for f in 0..frames {
            for (c, &v) in m.0.row(f).iter().enumerate() {
                mel[(bi * n_mels + c) * frames + f] = v;
            }
        }
        audio.extend(seg);
    }
    Ok(Batch {
        mel: Tensor::new(&[b, n_mels, frames], mel)?,
        audio: Tensor::new(&[b, crop], audio)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epochs_visit_every_clip_once() {
        let mut s = CropSampler::new(3, vec![9000; 5]).unwrap();
        let picks = s.next(5, 8192, 256);
        let mut clips: Vec<usize> = picks.iter().map(|p| p.0).collect();
        clips.sort();
        assert_eq!(clips, vec![0, 1, 2, 3, 4]);
        assert_eq!((s.epoch, s.cursor), (1, 0));
    }

    #[test]
    fn starts_are_hop_aligned_and_in_range() {
        let mut s = CropSampler::new(1, vec![22050, 8192, 100]).unwrap();
        for _ in 0..50 {
            for (clip, start) in s.next(4, 8192, 256) {
                assert_eq!(start % 256, 0);
                let len = [22050, 8192, 100][clip];
                assert!(start + 8192 <= len.max(8192));
            }
        }
    }

    #[test]
    fn deterministic_and_resumable() {
        let lens = vec![30000, 20000, 12000];
        let mut a = CropSampler::new(7, lens.clone()).unwrap();
        let mut b = CropSampler::new(7, lens.clone()).unwrap();
        for _ in 0..4 {
            assert_eq!(a.next(2, 8192, 256), b.next(2, 8192, 256));
        }
        let mut c = CropSampler::resume(7, lens, a.epoch, a.cursor).unwrap();
        assert_eq!(a.next(5, 8192, 256), c.next(5, 8192, 256));
    }

    #[test]
    fn fewer_clips_than_batch_cycles() {
        let mut s = CropSampler::new(0, vec![10000]).unwrap();
        let picks = s.next(3, 8192, 256);
        assert!(picks.iter().all(|p| p.0 == 0));
        assert_eq!(s.epoch, 3);
    }

    #[test]
    fn batch_mel_matches_single_extraction() {
        let fb = MelFilterbank::new(80, 1024, 22050, 0.0, 8000.0).unwrap();
        let cfg = StftConfig::default();
        let clip: Vec<f64> = (0..12000).map(|i| (i as f64 * 0.05).sin() * 0.3).collect();
        let b = make_batch(&[clip.clone()], &[(0, 512), (0, 0)], 8192, &fb, &cfg).unwrap();
        assert_eq!(b.mel.shape(), &[2, 80, 32]);
        assert_eq!(b.audio.shape(), &[2, 8192]);
        assert_eq!(&b.audio.data()[..8192], &clip[512..512 + 8192]);
        let m = mel_spectrogram(&clip[512..512 + 8192], &fb, &cfg).unwrap();
        for f in 0..32 {
            for c in 0..80 {
                assert_eq!(b.mel.data()[c * 32 + f], m.0.get(f, c));
            }
        }
    }

    #[test]
    fn short_clip_is_zero_padded() {
        let fb = MelFilterbank::new(80, 1024, 22050, 0.0, 8000.0).unwrap();
        let b = make_batch(&[vec![0.5f32; 100]], &[(0, 0)], 2048, &fb, &StftConfig::default()).unwrap();
        assert_eq!(b.audio.data()[99], 0.5);
        assert!(b.audio.data()[100..].iter().all(|&v| v == 0.0));
    }
}
