use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::audio::{pad_or_segment, wav_to_spectrogram, write_cache, CacheMeta, FrameMode, Spectrogram, RAW_STATS_VERSION};
use crate::datasets::{DatasetManifest, ManifestEntry};
use crate::error::{Error, Result};

/// How utterances are brought to a common length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LengthPolicy {
    /// Zero-pad to the given frame count, or to the longest utterance.
    Pad(Option<usize>),
    /// Fixed windows with the given hop; each window is its own entry.
    Segment { frames: usize, hop: usize },
}

/// Converts every WAV of `manifest` into raw magnitude spectrogram caches
/// under `out/cache` and writes `out/manifest.csv` pointing at them.
pub fn preprocess(manifest: &DatasetManifest, out: &Path, policy: LengthPolicy) -> Result<DatasetManifest> {
    let cache = out.join("cache");
    fs::create_dir_all(&cache).map_err(|e| Error::io(&cache, e))?;
    let specs: Vec<Spectrogram> = manifest
        .entries
        .par_iter()
        .map(|e| {
            let bytes = fs::read(&e.path).map_err(|err| Error::io(&e.path, err))?;
            wav_to_spectrogram(&bytes).map_err(|err| Error::Data(format!("utterance {}: {err}", e.id)))
        })
        .collect::<Result<_>>()?;
    let mode = match policy {
        LengthPolicy::Pad(target) => FrameMode::Pad {
            target_frames: target.unwrap_or_else(|| specs.iter().map(Spectrogram::num_frames).max().unwrap_or(1)),
        },
        LengthPolicy::Segment { frames, hop } => FrameMode::Segment { frames, hop },
    };
    let mut entries = Vec::new();
    for (e, spec) in manifest.entries.iter().zip(&specs) {
        let parts = pad_or_segment(spec, mode).map_err(|err| Error::Data(format!("utterance {}: {err}", e.id)))?;
        let single = parts.len() == 1;
        for (k, part) in parts.into_iter().enumerate() {
            let id = if single { e.id.clone() } else { format!("{}#{k}", e.id) };
            let meta = CacheMeta {
                id: id.clone(),
                utterance: e.id.clone(),
                label: e.label.clone(),
                speaker: e.speaker.clone(),
                frames: part.num_frames(),
                stats_version: RAW_STATS_VERSION.into(),
            };
            let path = write_cache(&cache, &part.frames, &meta)?;
            entries.push(ManifestEntry {
                id,
                path,
                label: e.label.clone(),
                speaker: e.speaker.clone(),
            });
        }
    }
    let out_manifest = DatasetManifest::new(entries)?;
    out_manifest.save(&out.join("manifest.csv"))?;
    Ok(out_manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{encode_wav_pcm16, AudioClip};
    use crate::datasets::Corpus;

    fn tone(secs: f64, freq: f64) -> Vec<u8> {
        let n = (secs * 16_000.0) as usize;
        let samples = (0..n)
            .map(|i| 0.5 * (2.0 * std::f64::consts::PI * freq * i as f64 / 16_000.0).sin())
            .collect();
        encode_wav_pcm16(&AudioClip::new(samples, 16_000).unwrap()).unwrap()
    }

    fn wav_manifest(dir: &Path, secs: &[f64]) -> DatasetManifest {
        let entries = secs
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let path = dir.join(format!("u{i}.wav"));
                fs::write(&path, tone(s, 500.0 + 100.0 * i as f64)).unwrap();
                ManifestEntry {
                    id: format!("u{i}"),
                    path,
                    label: format!("l{}", i % 2),
                    speaker: format!("s{i}"),
                }
            })
            .collect();
        DatasetManifest::new(entries).unwrap()
    }

    #[test]
    fn pad_to_longest_and_load_back() {
        let dir = tempfile::tempdir().unwrap();
        let m = wav_manifest(dir.path(), &[0.5, 1.0, 0.25]);
        let out = dir.path().join("out");
        let pm = preprocess(&m, &out, LengthPolicy::Pad(None)).unwrap();
        assert_eq!(pm.entries.len(), 3);
        let corpus = Corpus::from_manifest("t", &DatasetManifest::load(&out.join("manifest.csv")).unwrap()).unwrap();
        // one second at 16 kHz: floor((16000 - 320) / 160) + 1 frames
        assert_eq!(corpus.input_shape().unwrap(), [99, 161]);
    }

    #[test]
    fn segmentation_emits_closed_form_count() {
        let dir = tempfile::tempdir().unwrap();
        let m = wav_manifest(dir.path(), &[1.0, 0.3]);
        let out = dir.path().join("out");
        let pm = preprocess(&m, &out, LengthPolicy::Segment { frames: 40, hop: 20 }).unwrap();
        // 99 frames: 1 + ceil(59/20) = 4 segments; 29 frames: 1 segment
        assert_eq!(pm.entries.len(), 5);
        let corpus = Corpus::from_manifest("t", &pm).unwrap();
        assert_eq!(corpus.num_utterances(), 2);
    }

    #[test]
    fn missing_wav_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = wav_manifest(dir.path(), &[0.1]);
        m.entries[0].path = dir.path().join("nope.wav");
        assert!(matches!(
            preprocess(&m, &dir.path().join("o"), LengthPolicy::Pad(None)),
            Err(Error::Io { .. })
        ));
    }
}
