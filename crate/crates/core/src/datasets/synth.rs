use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusItem, DatasetManifest, ManifestEntry};
use crate::audio::{write_cache, CacheMeta, RAW_STATS_VERSION};
use crate::error::{Error, Result};
use crate::interp::resample_time;
use crate::tensor::Tensor;

/// Parameters of the synthetic time-stretched corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub classes: usize,
    pub factors: Vec<f64>,
    pub samples_per_class: usize,
    /// Scale of the half-normal background added to every cell.
    pub noise: f64,
    pub seed: u64,
    /// Spectrogram frames per sample.
    pub frames: usize,
    /// Frequency bins per frame.
    pub bins: usize,
    /// Time extent of the unstretched class template.
    pub template_frames: usize,
    /// Speaker `k` always speaks at `factors[k % factors.len()]`.
    pub speakers: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            classes: 4,
            factors: vec![0.5, 1.0, 2.0],
            samples_per_class: 200,
            noise: 0.5,
            seed: 0,
            frames: 32,
            bins: 12,
            template_frames: 10,
            speakers: 12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSample {
    pub id: String,
    pub label: usize,
    pub speaker: String,
    pub factor: f64,
    pub onset: usize,
    /// `[frames, bins]`, non-negative.
    pub frames: Tensor,
}

/// One chirp template per class, `[template_frames, bins]`. Classes pair up
/// per frequency band: even classes rise across the band, odd classes fall.
pub fn class_templates(config: &SynthConfig) -> Result<Vec<Tensor>> {
    let (l, f) = (config.template_frames, config.bins);
    let bands = config.classes.div_ceil(2);
    if f < 2 * bands {
        return Err(Error::Parameter(format!("{f} bins cannot hold {bands} chirp bands")));
    }
    let width = f as f64 / bands as f64;
    (0..config.classes)
        .map(|c| {
            let lo = (c / 2) as f64 * width + 0.5;
            let hi = lo + width - 2.0;
            Tensor::from_fn(&[l, f], |ix| {
                let progress = if l > 1 { ix[0] as f64 / (l - 1) as f64 } else { 0.5 };
                let centre = if c % 2 == 0 {
                    lo + (hi - lo) * progress
                } else {
                    hi - (hi - lo) * progress
                };
                let d = ix[1] as f64 - centre;
                (-d * d / (2.0 * 0.6 * 0.6)).exp()
            })
        })
        .collect()
}

/// Generates `classes × samples_per_class` spectrogram-like grids. Each holds
/// its class template stretched in time by its speaker's factor, placed at a
/// random onset over a half-normal background.
pub fn synth_generate(config: &SynthConfig) -> Result<Vec<SynthSample>> {
    if config.classes < 2 {
        return Err(Error::Parameter("the synthetic corpus needs at least 2 classes".into()));
    }
    if config.factors.is_empty() || config.speakers == 0 || config.samples_per_class == 0 {
        return Err(Error::Parameter("factors, speakers and samples must be non-empty".into()));
    }
    let templates = class_templates(config)?;
    let stretched: Vec<Vec<Tensor>> = templates
        .iter()
        .map(|t| config.factors.iter().map(|&s| resample_time(t, 0, s)).collect::<Result<_>>())
        .collect::<Result<_>>()?;
    let longest = stretched.iter().flatten().map(|t| t.shape()[0]).max().unwrap();
    if longest > config.frames {
        return Err(Error::Parameter(format!(
            "stretched template of {longest} frames does not fit {} frames",
            config.frames
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise = Normal::<f64>::new(0.0, 1.0).unwrap();
    let (t_len, f_len) = (config.frames, config.bins);
    let mut out = Vec::with_capacity(config.classes * config.samples_per_class);
    for i in 0..config.samples_per_class {
        for (c, variants) in stretched.iter().enumerate() {
            let index = i * config.classes + c;
            let speaker = (index + i) % config.speakers;
            let fi = speaker % config.factors.len();
            let pattern = &variants[fi];
            let onset = rng.gen_range(0..=t_len - pattern.shape()[0]);
            let mut data: Vec<f64> = (0..t_len * f_len)
                .map(|_| config.noise * noise.sample(&mut rng).abs())
                .collect();
            for (k, &v) in pattern.data().iter().enumerate() {
                data[onset * f_len + k] += v;
            }
            out.push(SynthSample {
                id: format!("synth{index:05}"),
                label: c,
                speaker: format!("spk{speaker:02}"),
                factor: config.factors[fi],
                onset,
                frames: Tensor::new(&[t_len, f_len], data)?,
            });
        }
    }
    Ok(out)
}

pub fn class_name(c: usize) -> String {
    format!("class{c}")
}

impl Corpus {
    pub fn from_synth(config: &SynthConfig) -> Result<Self> {
        let samples = synth_generate(config)?;
        Ok(Corpus {
            name: "synth".into(),
            classes: (0..config.classes).map(class_name).collect(),
            items: samples
                .into_iter()
                .map(|s| CorpusItem {
                    utterance: s.id.clone(),
                    id: s.id,
                    label: s.label,
                    speaker: s.speaker,
                    frames: s.frames,
                })
                .collect(),
        })
    }
}

/// Writes the synthetic corpus as spectrogram caches plus `manifest.csv`
/// and `synth.toml` into `dir`.
pub fn write_synth(config: &SynthConfig, dir: &Path) -> Result<DatasetManifest> {
    let cache = dir.join("cache");
    fs::create_dir_all(&cache).map_err(|e| Error::io(&cache, e))?;
    let mut entries = Vec::new();
    for s in synth_generate(config)? {
        let meta = CacheMeta {
            id: s.id.clone(),
            utterance: s.id.clone(),
            label: class_name(s.label),
            speaker: s.speaker.clone(),
            frames: s.frames.shape()[0],
            stats_version: RAW_STATS_VERSION.into(),
        };
        let path = write_cache(&cache, &s.frames, &meta)?;
        entries.push(ManifestEntry {
            id: s.id,
            path,
            label: meta.label,
            speaker: s.speaker,
        });
    }
    let manifest = DatasetManifest::new(entries)?;
    manifest.save(&dir.join("manifest.csv"))?;
    let cfg = toml::to_string(config).map_err(|e| Error::Format(e.to_string()))?;
    let cfg_path = dir.join("synth.toml");
    fs::write(&cfg_path, cfg).map_err(|e| Error::io(&cfg_path, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::build_folds_from_counts;

    fn ncc(a: &[f64], b: &[f64]) -> f64 {
        let ma = a.iter().sum::<f64>() / a.len() as f64;
        let mb = b.iter().sum::<f64>() / b.len() as f64;
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let da: f64 = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>().sqrt();
        let db: f64 = b.iter().map(|y| (y - mb).powi(2)).sum::<f64>().sqrt();
        num / (da * db)
    }

    /// Best normalised correlation of `template` (at each scale) over all
    /// onsets of `x`.
    fn best_match(x: &Tensor, template: &Tensor, scales: &[f64]) -> f64 {
        let f = x.shape()[1];
        let mut best = f64::NEG_INFINITY;
        for &s in scales {
            let t = resample_time(template, 0, s).unwrap();
            let l = t.shape()[0];
            for on in 0..=x.shape()[0] - l {
                best = best.max(ncc(&x.data()[on * f..(on + l) * f], t.data()));
            }
        }
        best
    }

    fn matcher_accuracy(samples: &[SynthSample], templates: &[Tensor], scales: &[f64]) -> f64 {
        let hits = samples
            .iter()
            .filter(|s| {
                let scores: Vec<f64> = templates.iter().map(|t| best_match(&s.frames, t, scales)).collect();
                let pred = (0..scores.len()).max_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap()).unwrap();
                pred == s.label
            })
            .count();
        hits as f64 / samples.len() as f64
    }

    #[test]
    fn noiseless_unit_factor_embeds_template_exactly() {
        let cfg = SynthConfig {
            factors: vec![1.0],
            noise: 0.0,
            samples_per_class: 3,
            ..SynthConfig::default()
        };
        let templates = class_templates(&cfg).unwrap();
        for s in synth_generate(&cfg).unwrap() {
            let f = cfg.bins;
            let window = &s.frames.data()[s.onset * f..(s.onset + cfg.template_frames) * f];
            assert_eq!(window, templates[s.label].data());
            let rest: f64 = s.frames.sum() - templates[s.label].sum();
            assert!(rest.abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic() {
        let cfg = SynthConfig {
            samples_per_class: 10,
            seed: 7,
            ..SynthConfig::default()
        };
        assert_eq!(synth_generate(&cfg).unwrap(), synth_generate(&cfg).unwrap());
        let other = SynthConfig { seed: 8, ..cfg.clone() };
        assert_ne!(synth_generate(&cfg).unwrap(), synth_generate(&other).unwrap());
    }

    #[test]
    fn templates_are_nearly_orthogonal() {
        let t = class_templates(&SynthConfig::default()).unwrap();
        for a in 0..t.len() {
            for b in a + 1..t.len() {
                let r = ncc(t[a].data(), t[b].data());
                assert!(r < 0.3, "classes {a},{b}: {r}");
            }
        }
    }

    #[test]
    fn multiscale_matcher_beats_single_scale() {
        let cfg = SynthConfig {
            classes: 2,
            factors: vec![0.5, 2.0],
            samples_per_class: 30,
            noise: 0.3,
            seed: 3,
            ..SynthConfig::default()
        };
        let samples = synth_generate(&cfg).unwrap();
        let templates = class_templates(&cfg).unwrap();
        let single = matcher_accuracy(&samples, &templates, &[1.0]);
        let multi = matcher_accuracy(&samples, &templates, &[0.5, 1.0, 2.0]);
        assert!(multi > single, "multi {multi} vs single {single}");
    }

    #[test]
    fn speakers_support_speaker_independent_folds() {
        let cfg = SynthConfig::default();
        let samples = synth_generate(&cfg).unwrap();
        assert_eq!(samples.len(), 800);
        let plan = build_folds_from_counts(samples.iter().map(|s| s.speaker.as_str()), 0).unwrap();
        assert_eq!(plan.folds.len(), 4);
        // each speaker talks at one rate
        for s in &samples {
            let k: usize = s.speaker[3..].parse().unwrap();
            assert_eq!(s.factor, cfg.factors[k % 3]);
        }
        let per_class: Vec<usize> = (0..4).map(|c| samples.iter().filter(|s| s.label == c).count()).collect();
        assert_eq!(per_class, [200; 4]);
    }

    #[test]
    fn written_corpus_loads_back() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            samples_per_class: 4,
            ..SynthConfig::default()
        };
        let m = write_synth(&cfg, dir.path()).unwrap();
        let reread = DatasetManifest::load(&dir.path().join("manifest.csv")).unwrap();
        assert_eq!(reread, m);
        let c = Corpus::from_manifest("synth", &reread).unwrap();
        assert_eq!(c, Corpus::from_synth(&cfg).unwrap());
    }
}
