use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{AudioClip, Spectrogram};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StftConfig {
    pub window_secs: f64,
    pub hop_secs: f64,
}

impl Default for StftConfig {
    /// 20 ms Hann windows every 10 ms.
    fn default() -> Self {
        StftConfig {
            window_secs: 0.020,
            hop_secs: 0.010,
        }
    }
}

/// Hann-windowed STFT magnitude with FFT size equal to the window length.
/// At 16 kHz: 320-sample windows, hop 160, 161 bins and
/// `floor((N − 320) / 160) + 1` frames.
pub fn stft_magnitude(clip: &AudioClip, config: &StftConfig) -> Result<Spectrogram> {
    let sr = clip.sample_rate as f64;
    let win = (config.window_secs * sr).round() as usize;
    let hop = (config.hop_secs * sr).round() as usize;
    if win == 0 || hop == 0 {
        return Err(Error::Parameter("STFT window and hop must cover at least one sample".into()));
    }
    let n = clip.samples.len();
    if n < win {
        return Err(Error::Data(format!("clip of {n} samples is shorter than one {win}-sample window")));
    }
    let frames = (n - win) / hop + 1;
    let bins = win / 2 + 1;
    let window: Vec<f64> = (0..win).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / win as f64).cos()).collect();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(win);
    let mut buf = vec![Complex::new(0.0, 0.0); win];
    let mut out = Vec::with_capacity(frames * bins);
    for t in 0..frames {
        let seg = &clip.samples[t * hop..t * hop + win];
        for ((b, &s), &w) in buf.iter_mut().zip(seg).zip(&window) {
            *b = Complex::new(s * w, 0.0);
        }
        fft.process(&mut buf);
        out.extend(buf[..bins].iter().map(|c| c.norm()));
    }
    Ok(Spectrogram {
        frames: Tensor::new(&[frames, bins], out)?,
        hop_secs: config.hop_secs,
        window_secs: config.window_secs,
        normalized: false,
    })
}
