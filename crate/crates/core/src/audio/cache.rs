use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Sidecar marker for caches that hold raw magnitudes; normalisation is
/// applied per training fold at load time.
pub const RAW_STATS_VERSION: &str = "raw-v1";

/// Contents of the `.meta` sidecar next to a cached spectrogram.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheMeta {
    pub id: String,
    pub utterance: String,
    pub label: String,
    pub speaker: String,
    pub frames: usize,
    pub stats_version: String,
}

fn file_stem(id: &str) -> String {
    id.chars().map(|c| if c == '/' || c == '\\' { '_' } else { c }).collect()
}

/// Writes `<id>.tensor` and `<id>.meta` into `dir`; returns the tensor path.
pub fn write_cache(dir: &Path, tensor: &Tensor, meta: &CacheMeta) -> Result<PathBuf> {
    let stem = file_stem(&meta.id);
    let path = dir.join(format!("{stem}.tensor"));
    tensor.save(&path)?;
    let sidecar = dir.join(format!("{stem}.meta"));
    let text = format!(
        "id = {}\nutterance = {}\nlabel = {}\nspeaker = {}\nframes = {}\nstats_version = {}\n",
        meta.id, meta.utterance, meta.label, meta.speaker, meta.frames, meta.stats_version
    );
    fs::write(&sidecar, text).map_err(|e| Error::io(&sidecar, e))?;
    Ok(path)
}

/// Reads a cached tensor and its sidecar.
pub fn read_cache(tensor_path: &Path) -> Result<(Tensor, CacheMeta)> {
    let tensor = Tensor::load(tensor_path)?;
    let sidecar = tensor_path.with_extension("meta");
    let text = fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
    let field = |key: &str| -> Result<String> {
        text.lines()
            .filter_map(|l| l.split_once('='))
            .find(|(k, _)| k.trim() == key)
            .map(|(_, v)| v.trim().to_string())
            .ok_or_else(|| Error::Format(format!("{} lacks `{key}`", sidecar.display())))
    };
    let frames = field("frames")?
        .parse()
        .map_err(|_| Error::Format(format!("{}: bad frame count", sidecar.display())))?;
    Ok((
        tensor,
        CacheMeta {
            id: field("id")?,
            utterance: field("utterance")?,
            label: field("label")?,
            speaker: field("speaker")?,
            frames,
            stats_version: field("stats_version")?,
        },
    ))
}
