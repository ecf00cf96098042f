use std::io::Cursor;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::AudioClip;
use crate::error::{Error, Result};

/// Decodes 16-bit PCM or 32-bit float RIFF/WAVE bytes. Multi-channel audio
/// is averaged to mono; samples are scaled to [−1, 1].
pub fn decode_wav(bytes: &[u8]) -> Result<AudioClip> {
    let reader = WavReader::new(Cursor::new(bytes)).map_err(|e| Error::Format(format!("bad WAV header: {e}")))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::Format("WAV declares zero channels".into()));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>(),
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>(),
        (fmt, bits) => {
            return Err(Error::Format(format!("unsupported WAV encoding {fmt:?} {bits}-bit")));
        }
    }
    .map_err(|e| Error::Format(format!("corrupt WAV data: {e}")))?;
    let samples: Vec<f64> = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    AudioClip::new(samples, spec.sample_rate).map_err(|e| Error::Format(e.to_string()))
}

/// Encodes a mono clip as 16-bit PCM, clamping to the representable range.
pub fn encode_wav_pcm16(clip: &AudioClip) -> Result<Vec<u8>> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut buf = Cursor::new(Vec::new());
    {
        let mut w = WavWriter::new(&mut buf, spec).map_err(|e| Error::Format(e.to_string()))?;
        for &s in &clip.samples {
            let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
            w.write_sample(v).map_err(|e| Error::Format(e.to_string()))?;
        }
        w.finalize().map_err(|e| Error::Format(e.to_string()))?;
    }
    Ok(buf.into_inner())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wav_bytes(channels: u16, format: SampleFormat, bits: u16, write: impl FnOnce(&mut WavWriter<&mut Cursor<Vec<u8>>>)) -> Vec<u8> {
        let spec = WavSpec {
            channels,
            sample_rate: 16000,
            bits_per_sample: bits,
            sample_format: format,
        };
        let mut buf = Cursor::new(Vec::new());
        {
            let mut w = WavWriter::new(&mut buf, spec).unwrap();
            write(&mut w);
            w.finalize().unwrap();
        }
        buf.into_inner()
    }

    #[test]
    fn pcm16_full_scale() {
        let b = wav_bytes(1, SampleFormat::Int, 16, |w| {
            w.write_sample(32767i16).unwrap();
            w.write_sample(-32768i16).unwrap();
        });
        let c = decode_wav(&b).unwrap();
        assert!((c.samples[0] - 0.99997).abs() < 1e-5);
        assert_eq!(c.samples[1], -1.0);
        assert_eq!(c.sample_rate, 16000);
    }

    #[test]
    fn silence_and_stereo_cancel() {
        let b = wav_bytes(1, SampleFormat::Int, 16, |w| (0..100).for_each(|_| w.write_sample(0i16).unwrap()));
        assert!(decode_wav(&b).unwrap().samples.iter().all(|&v| v == 0.0));
        let b = wav_bytes(2, SampleFormat::Float, 32, |w| {
            for i in 0..50 {
                let x = (i as f32 * 0.1).sin() * 0.5;
                w.write_sample(x).unwrap();
                w.write_sample(-x).unwrap();
            }
        });
        let c = decode_wav(&b).unwrap();
        assert_eq!(c.samples.len(), 50);
        assert!(c.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_garbage_and_unsupported() {
        assert!(matches!(decode_wav(b"not a wav file at all"), Err(Error::Format(_))));
        let b = wav_bytes(1, SampleFormat::Int, 24, |w| w.write_sample(5i32).unwrap());
        assert!(matches!(decode_wav(&b), Err(Error::Format(_))));
    }

    #[test]
    fn encode_round_trip() {
        let clip = AudioClip::new(vec![0.0, 0.5, -0.5, 0.25], 8000).unwrap();
        let back = decode_wav(&encode_wav_pcm16(&clip).unwrap()).unwrap();
        assert_eq!(back, clip);
    }
}
