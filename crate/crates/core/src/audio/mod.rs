//! Waveform preprocessing: WAV decoding, resampling to 16 kHz, STFT
//! magnitude, fixed-size framing and normalisation.

mod cache;
mod stft;
mod wav;

pub use cache::{read_cache, write_cache, CacheMeta, RAW_STATS_VERSION};
pub use stft::{stft_magnitude, StftConfig};
pub use wav::{decode_wav, encode_wav_pcm16};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interp::Interpolator;
use crate::tensor::Tensor;

pub const TARGET_RATE: u32 = 16_000;

#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Data("sample rate must be positive".into()));
        }
        if samples.is_empty() {
            return Err(Error::Data("audio clip has no samples".into()));
        }
        Ok(AudioClip { samples, sample_rate })
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Time × frequency magnitude grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    /// `[T, F]`
    pub frames: Tensor,
    pub hop_secs: f64,
    pub window_secs: f64,
    pub normalized: bool,
}

impl Spectrogram {
    pub fn num_frames(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn num_bins(&self) -> usize {
        self.frames.shape()[1]
    }
}

/// Linear-interpolation resampling of the waveform to `target_rate`.
pub fn resample_audio(clip: &AudioClip, target_rate: u32) -> Result<AudioClip> {
    if target_rate == 0 {
        return Err(Error::Parameter("target rate must be positive".into()));
    }
    if clip.sample_rate == target_rate {
        return Ok(clip.clone());
    }
    let n = clip.samples.len();
    let len = ((n as f64 * target_rate as f64 / clip.sample_rate as f64).round() as usize).max(1);
    let src = Tensor::new(&[n], clip.samples.clone())?;
    let out = Interpolator::new(n, len)?.apply(&src, 0)?;
    AudioClip::new(out.into_data(), target_rate)
}

/// How variable-length spectrograms become fixed-size model inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrameMode {
    /// Append zero frames up to `target_frames`.
    Pad { target_frames: usize },
    /// Overlapping windows of `frames` frames every `hop` frames; the last
    /// window is zero-padded.
    Segment { frames: usize, hop: usize },
}

impl FrameMode {
    /// 4 s windows every 2 s at a 10 ms hop.
    pub fn default_segment() -> Self {
        FrameMode::Segment { frames: 399, hop: 200 }
    }
}

/// Number of segments [`pad_or_segment`] emits for `total` frames.
pub fn segment_count(total: usize, frames: usize, hop: usize) -> usize {
    1 + total.saturating_sub(frames).div_ceil(hop)
}

fn padded(frames: &Tensor, start: usize, len: usize) -> Result<Tensor> {
    let (t, f) = (frames.shape()[0], frames.shape()[1]);
    let mut out = vec![0.0; len * f];
    let end = (start + len).min(t);
    if start < end {
        out[..(end - start) * f].copy_from_slice(&frames.data()[start * f..end * f]);
    }
    Tensor::new(&[len, f], out)
}

pub fn pad_or_segment(spec: &Spectrogram, mode: FrameMode) -> Result<Vec<Spectrogram>> {
    let t = spec.num_frames();
    let with = |frames| Spectrogram {
        frames,
        hop_secs: spec.hop_secs,
        window_secs: spec.window_secs,
        normalized: spec.normalized,
    };
    match mode {
        FrameMode::Pad { target_frames } => {
            if target_frames < t {
                return Err(Error::Data(format!(
                    "cannot pad {t} frames down to {target_frames}"
                )));
            }
            Ok(vec![with(padded(&spec.frames, 0, target_frames)?)])
        }
        FrameMode::Segment { frames, hop } => {
            if frames == 0 || hop == 0 {
                return Err(Error::Parameter("segment length and hop must be positive".into()));
            }
            (0..segment_count(t, frames, hop))
                .map(|k| Ok(with(padded(&spec.frames, k * hop, frames)?)))
                .collect()
        }
    }
}

/// Corpus-level scalar mean and (population) standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
}

pub fn compute_stats<'a>(specs: impl IntoIterator<Item = &'a Tensor> + Clone) -> Result<NormStats> {
    let (mut sum, mut count) = (0.0, 0usize);
    for t in specs.clone() {
        sum += t.sum();
        count += t.len();
    }
    if count == 0 {
        return Err(Error::Data("no training entries to compute statistics".into()));
    }
    let mean = sum / count as f64;
    let var = specs
        .into_iter()
        .flat_map(|t| t.data().iter())
        .map(|v| (v - mean).powi(2))
        .sum::<f64>()
        / count as f64;
    if !var.is_finite() || var.sqrt() <= 1e-12 * mean.abs().max(1.0) {
        return Err(Error::Data("training set has zero variance".into()));
    }
    Ok(NormStats {
        mean,
        std: var.sqrt(),
    })
}

pub fn normalize(t: &Tensor, stats: NormStats) -> Tensor {
    t.map(|v| (v - stats.mean) / stats.std)
}

pub fn normalize_spectrogram(spec: &Spectrogram, stats: NormStats) -> Spectrogram {
    Spectrogram {
        frames: normalize(&spec.frames, stats),
        normalized: true,
        ..spec.clone()
    }
}

/// Decodes, resamples to 16 kHz and computes the magnitude spectrogram.
pub fn wav_to_spectrogram(bytes: &[u8]) -> Result<Spectrogram> {
    let clip = resample_audio(&decode_wav(bytes)?, TARGET_RATE)?;
    stft_magnitude(&clip, &StftConfig::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec_of(t: usize, f: usize) -> Spectrogram {
        Spectrogram {
            frames: Tensor::from_fn(&[t, f], |i| (i[0] + 1) as f64).unwrap(),
            hop_secs: 0.01,
            window_secs: 0.02,
            normalized: false,
        }
    }

    #[test]
    fn resample_identity_constant_and_ramp() {
        let c = AudioClip::new(vec![0.1, 0.2, 0.3], TARGET_RATE).unwrap();
        assert_eq!(resample_audio(&c, TARGET_RATE).unwrap(), c);
        let k = AudioClip::new(vec![0.25; 80], 8000).unwrap();
        let up = resample_audio(&k, 16000).unwrap();
        assert_eq!(up.samples.len(), 160);
        assert!(up.samples.iter().all(|&v| (v - 0.25).abs() < 1e-15));
        let ramp: Vec<f64> = (0..64).map(|i| i as f64 / 63.0).collect();
        let down = resample_audio(&AudioClip::new(ramp, 32000).unwrap(), 16000).unwrap();
        assert_eq!(down.samples.len(), 32);
        assert_eq!(down.samples[0], 0.0);
        assert_eq!(*down.samples.last().unwrap(), 1.0);
        for (i, v) in down.samples.iter().enumerate() {
            assert!((v - i as f64 / 31.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pad_mode() {
        let out = pad_or_segment(&spec_of(50, 3), FrameMode::Pad { target_frames: 99 }).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].frames.shape(), &[99, 3]);
        assert!(out[0].frames.data()[50 * 3..].iter().all(|&v| v == 0.0));
        assert_eq!(out[0].frames.data()[49 * 3], 50.0);
        assert!(pad_or_segment(&spec_of(50, 3), FrameMode::Pad { target_frames: 40 }).is_err());
    }

    #[test]
    fn nine_second_utterance_segments() {
        // 9 s at 16 kHz → 899 frames
        let frames = (144_000 - 320) / 160 + 1;
        let out = pad_or_segment(&spec_of(frames, 2), FrameMode::default_segment()).unwrap();
        assert_eq!(out.len(), 4);
        let starts: Vec<f64> = out.iter().map(|s| s.frames.data()[0] - 1.0).collect();
        assert_eq!(starts, [0.0, 200.0, 400.0, 600.0]);
        let last = &out[3].frames;
        assert_eq!(last.data()[(frames - 600 - 1) * 2], frames as f64);
        assert_eq!(last.data()[(frames - 600) * 2], 0.0);
    }

    #[test]
    fn exactly_four_seconds_is_one_segment() {
        let frames = (64_000 - 320) / 160 + 1;
        assert_eq!(frames, 399);
        let out = pad_or_segment(&spec_of(frames, 2), FrameMode::default_segment()).unwrap();
        assert_eq!(out.len(), 1);
        assert!(out[0].frames.data().iter().all(|&v| v != 0.0));
    }

    #[test]
    fn normalisation() {
        let a = Tensor::from_fn(&[4, 3], |i| (i[0] * 3 + i[1]) as f64).unwrap();
        let b = Tensor::from_fn(&[2, 3], |i| (i[0] * i[1]) as f64 * 0.5).unwrap();
        let stats = compute_stats([&a, &b]).unwrap();
        let na = normalize(&a, stats);
        let nb = normalize(&b, stats);
        let all: Vec<f64> = na.data().iter().chain(nb.data()).copied().collect();
        let mean = all.iter().sum::<f64>() / all.len() as f64;
        let std = (all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / all.len() as f64).sqrt();
        assert!(mean.abs() < 1e-9 && (std - 1.0).abs() < 1e-9);
        let c = Tensor::filled(&[3, 3], 0.7).unwrap();
        assert!(matches!(compute_stats([&c]), Err(Error::Data(_))));
        let six = Tensor::new(&[1], vec![6.0]).unwrap();
        assert_eq!(normalize(&six, NormStats { mean: 2.0, std: 2.0 }).data(), &[2.0]);
    }

    proptest! {
        #[test]
        fn segment_count_closed_form(total in 1usize..3000, frames in 1usize..500, hop_frac in 0.0f64..1.0) {
            let hop = 1 + (hop_frac * frames as f64) as usize;
            let hop = hop.min(frames);
            let out = pad_or_segment(&spec_of(total, 1), FrameMode::Segment { frames, hop }).unwrap();
            prop_assert_eq!(out.len(), segment_count(total, frames, hop));
            // every frame is covered, and no segment starts past the end
            prop_assert!((out.len() - 1) * hop < total.max(1));
            prop_assert!((out.len() - 1) * hop + frames >= total);
        }
    }
}
