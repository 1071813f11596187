//! Dataset manifests, fold splits, the synthetic desk-scale corpus
//! generator, and minority-class augmentation.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::dsp::{encode_wav, AudioClip, DspConfig, DspError, SpectrogramImage};
use crate::rng::{keyed_rng3, mix};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("manifest parse error at row {row}: {reason}")]
    Parse { row: usize, reason: String },
    #[error("fold {0} not present in manifest")]
    FoldNotFound(u32),
    #[error("invalid data config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// One manifest row: a recording with its label and fold assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub recording_id: String,
    pub path: String,
    /// 0 = majority (healthy), 1 = minority (positive).
    pub label: u8,
    pub fold: u32,
}

pub const MANIFEST_HEADER: &str = "id,path,label,fold";

/// Parses a manifest CSV with header `id,path,label,fold`.
///
/// Order is preserved. Errors carry the 1-based file row number.
pub fn load_manifest(text: &str) -> Result<Vec<ManifestEntry>, DataError> {
    let mut lines = text.lines().enumerate();
    let (            _, header) = lines
        .next()
        .ok_or(DataError::Parse { row: 1, reason: "empty file, expected header".into() })?;
    if header.trim_end_matches('\r') != MANIFEST_HEADER {
        return Err(DataError::Parse {
            row: 1,
            reason: format!("expected header {MANIFEST_HEADER:?}, got {header:?}"),
        });
    }

    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in lines {
        let row = idx + 1;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(DataError::Parse {
                row,
                reason: format!("expected 4 comma-separated fields, got {}", fields.len()),
            });
        }
        let recording_id = fields[0].trim().to_string();
        if recording_id.is_empty() {
            return Err(DataError::Parse { row, reason: "empty recording id".into() });
        }
        if !seen.insert(recording_id.clone()) {
            return Err(DataError::Parse {
                row,
                reason: format!("duplicate recording id {recording_id:?}"),
            });
        }
        let path = fields[1].trim().to_string();
        if path.is_empty() {
            return Err(DataError::Parse { row, reason: "missing file path".into() });
        }
        let label: u8 = match fields[2].trim() {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(DataError::Parse {
                    row,
                    reason: format!("label must be 0 or 1, got {other:?}"),
                })
            }
        };
        let fold: u32 = fields[3].trim().parse().map_err(|_| DataError::Parse {
            row,
            reason: format!("fold must be a positive integer, got {:?}", fields[3]),
        })?;
        if fold == 0 {
            return Err(DataError::Parse { row, reason: "fold must be >= 1".into() });
        }
        entries.push(ManifestEntry { recording_id, path, label, fold });
    }
    Ok(entries)
}

/// Serializes entries back to manifest CSV (UTF-8, LF).
pub fn manifest_to_csv(entries: &[ManifestEntry]) -> String {
    let mut out = String::from(MANIFEST_HEADER);
    out.push('\n');
    for e in entries {
        out.push_str(&format!("{},{},{},{}\n", e.recording_id, e.path, e.label, e.fold));
    }
    out
}

/// Holds out one fold for validation; everything else trains.
///
/// Both halves preserve manifest order and form a disjoint, exhaustive
/// partition.
pub fn split_train_val(
    entries: &[ManifestEntry],
    held_out_fold: u32,
) -> Result<(Vec<ManifestEntry>, Vec<ManifestEntry>), DataError> {
    if !entries.iter().any(|e| e.fold == held_out_fold) {
        return Err(DataError::FoldNotFound(held_out_fold));
    }
    let (val, train): (Vec<_>, Vec<_>) =
        entries.iter().cloned().partition(|e| e.fold == held_out_fold);
    Ok((train, val))
}

/// Sorted distinct folds present in a manifest.
pub fn distinct_folds(entries: &[ManifestEntry]) -> Vec<u32> {
    let mut folds: Vec<u32> = entries.iter().map(|e| e.fold).collect();
    folds.sort_unstable();
    folds.dedup();
    folds
}

// Stream tags for the synthetic generator.
const TAG_NEG: u64 = 0x6e65;
const TAG_POS: u64 = 0x706f;
const TAG_AUG: u64 = 0x6175;

/// Raw synthetic clip for `(seed, label, index)`, before 16-bit quantization.
///
/// Negatives are band-limited Gaussian noise; positives add 2-4 exponentially
/// decaying tone bursts on top of the same kind of noise floor. Fully
/// determined by the key, so generation order does not matter.
pub fn synth_clip(seed: u64, label: u8, index: usize, cfg: &DspConfig) -> AudioClip {
    let tag = if label == 1 { TAG_POS } else { TAG_NEG };
    let mut rng = keyed_rng3(seed, tag, index as u64);
    let n = cfg.clip_samples();
    let rate = f64::from(cfg.sample_rate_hz);

    // One-pole low-passed white noise, scaled to roughly 0.1 RMS.
    let mut samples = Vec::with_capacity(n);
    let mut state = 0.0f64;
    for _ in 0..n {
        let white: f64 = rng.sample(StandardNormal);
        state = 0.6 * state + 0.4 * white;
        samples.push(0.2 * state);
    }

    if label == 1 {
        let n_bursts = 2 + rng.gen_range(0..3u32);
        let band_hi = (0.83 * cfg.fmax()).max(cfg.fmin_hz + 1.0);
        let band_lo = (0.08 * cfg.fmax()).min(band_hi - 1.0);
        for _ in 0..n_bursts {
            let freq = rng.gen_range(band_lo..band_hi);
            let burst_secs = rng.gen_range(0.1..0.3f64);
            let burst_len = ((burst_secs * rate) as usize).min(n);
            let start = rng.gen_range(0..(n - burst_len).max(1));
            let amp = rng.gen_range(0.3..0.6f64);
            let phase = rng.gen_range(0.0..std::f64::consts::TAU);
            for t in 0..burst_len {
                let dt = t as f64;
                let envelope = (-3.0 * dt / burst_len as f64).exp();
                samples[start + t] +=
                    amp * envelope * (std::f64::consts::TAU * freq * dt / rate + phase).sin();
            }
        }
    }

    for s in &mut samples {
        *s = s.clamp(-1.0, 1.0);
    }
    AudioClip { samples, sample_rate_hz: cfg.sample_rate_hz }
}

fn synth_entry(label: u8, index: usize, n_folds: u32) -> ManifestEntry {
    let class = if label == 1 { "pos" } else { "neg" };
    let recording_id = format!("{class}_{index:04}");
    ManifestEntry {
        path: format!("wav/{recording_id}.wav"),
        recording_id,
        label,
        fold: (index as u32 % n_folds) + 1,
    }
}

/// Generates a synthetic corpus on disk: WAV files under `out_dir/wav/` and
/// a manifest at `out_dir/manifest.csv`. Folds are assigned round-robin per
/// class. Byte-identical across runs for the same arguments.
pub fn synth_generate(
    n_negative: usize,
    n_positive: usize,
    seed: u64,
    cfg: &DspConfig,
    n_folds: u32,
    out_dir: &Path,
) -> Result<Vec<ManifestEntry>, DataError> {
    if n_folds == 0 {
        return Err(DataError::InvalidConfig("n_folds must be >= 1".into()));
    }
    cfg.validate()?;
    let wav_dir = out_dir.join("wav");
    let io_err = |path: &Path, source: std::io::Error| DataError::Io {
        path: path.display().to_string(),
        source,
    };
    fs::create_dir_all(&wav_dir).map_err(|e| io_err(&wav_dir, e))?;

    let mut entries = Vec::with_capacity(n_negative + n_positive);
    for (label, count) in [(0u8, n_negative), (1u8, n_positive)] {
        for index in 0..count {
            let entry = synth_entry(label, index, n_folds);
            let clip = synth_clip(seed, label, index, cfg);
            let file = out_dir.join(&entry.path);
            fs::write(&file, encode_wav(&clip)).map_err(|e| io_err(&file, e))?;
            entries.push(entry);
        }
    }
    let manifest_path = out_dir.join("manifest.csv");
    fs::write(&manifest_path, manifest_to_csv(&entries)).map_err(|e| io_err(&manifest_path, e))?;
    Ok(entries)
}

/// How to expand the minority class before training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentMethod {
    None,
    Duplicate,
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AugmentConfig {
    pub method: AugmentMethod,
    /// Synthetic copies created per minority sample.
    pub replication_factor: usize,
    /// Noise std in normalized-image units (gaussian method only).
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            method: AugmentMethod::None,
            replication_factor: 3,
            noise_sigma: 0.05,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.replication_factor < 1 {
            return Err(DataError::InvalidConfig("replication_factor must be >= 1".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(DataError::InvalidConfig("noise_sigma must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Expands every minority (label 1) image with `replication_factor`
/// synthetic copies; majority images and all originals pass through
/// untouched, originals first, synthetics after in (sample, copy) order.
///
/// Gaussian copies add `sigma * G` per pixel with `G` drawn from a stream
/// keyed by `(seed, recording index, copy index)`, then clamp to [0, 1], so
/// the result is independent of processing order.
pub fn augment_minority(
    images: &[(SpectrogramImage, u8)],
    cfg: &AugmentConfig,
) -> Result<Vec<(SpectrogramImage, u8)>, DataError> {
    cfg.validate()?;
    let mut out: Vec<(SpectrogramImage, u8)> = images.to_vec();
    if cfg.method == AugmentMethod::None {
        return Ok(out);
    }
    for (rec_index, (img, label)) in images.iter().enumerate() {
        if *label != 1 {
            continue;
        }
        for copy in 0..cfg.replication_factor {
            let mut synth = img.clone();
            synth.source_id = format!("{}#aug{copy}", img.source_id);
            if cfg.method == AugmentMethod::Gaussian {
                let mut rng = keyed_rng3(cfg.seed, TAG_AUG, mix(rec_index as u64, copy as u64));
                for v in &mut synth.values.data {
                    let g: f64 = rng.sample(StandardNormal);
                    *v = (*v + cfg.noise_sigma * g).clamp(0.0, 1.0);
                }
            }
            out.push((synth, 1));
        }
    }
    Ok(out)
}
