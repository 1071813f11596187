//! WAV decoding and log-mel spectrogram extraction.
//!
//! The front end of the pipeline: raw audio bytes become fixed-duration mono
//! clips, then normalized log-mel images that the network consumes. All
//! operations are pure and deterministic.

mod wav;

pub use wav::{decode_wav, encode_wav};

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("wav decode error in chunk {chunk:?}: {reason}")]
    Decode { chunk: String, reason: String },
    #[error("invalid audio clip: {0}")]
    InvalidClip(String),
    #[error("invalid dsp config: {0}")]
    InvalidConfig(String),
    #[error("clip of {len} samples is shorter than one {window}-sample window; fix_length the clip first")]
    ClipTooShort { len: usize, window: usize },
    #[error("invalid spectrogram cache record: {0}")]
    InvalidCache(String),
}

/// Dense row-major 2-D grid of f64 values.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2 {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Grid2 {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Grid2 { rows, cols, data: vec![0.0; rows * cols] }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Decoded mono waveform with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
}

impl AudioClip {
    /// Validates the clip invariants: all samples finite and within [-1, 1],
    /// positive sample rate.
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self, DspError> {
        if sample_rate_hz == 0 {
            return Err(DspError::InvalidClip("sample rate must be >= 1 Hz".into()));
        }
        for (i, &s) in samples.iter().enumerate() {
            if !s.is_finite() {
                return Err(DspError::InvalidClip(format!("sample {i} is not finite")));
            }
            if s.abs() > 1.0 {
                return Err(DspError::InvalidClip(format!("sample {i} = {s} exceeds [-1, 1]")));
            }
        }
        Ok(AudioClip { samples, sample_rate_hz })
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate_hz)
    }
}

/// Spectrogram extraction parameters.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DspConfig {
    pub sample_rate_hz: u32,
    pub clip_seconds: f64,
    pub fft_window: usize,
    pub frame_shift: usize,
    pub n_mels: usize,
    pub fmin_hz: f64,
    /// Upper band edge; `None` means Nyquist.
    pub fmax_hz: Option<f64>,
    /// Dynamic range kept below the per-image maximum, in dB (stored negative).
    pub log_floor_db: f64,
}

impl Default for DspConfig {
    fn default() -> Self {
        DspConfig {
            sample_rate_hz: 2048,
            clip_seconds: 4.0,
            fft_window: 2048,
            frame_shift: 512,
            n_mels: 64,
            fmin_hz: 0.0,
            fmax_hz: None,
            log_floor_db: -80.0,
        }
    }
}

impl DspConfig {
    pub fn fmax(&self) -> f64 {
        self.fmax_hz.unwrap_or(f64::from(self.sample_rate_hz) / 2.0)
    }

    pub fn validate(&self) -> Result<(), DspError> {
        if self.sample_rate_hz == 0 {
            return Err(DspError::InvalidConfig("sample_rate_hz must be >= 1".into()));
        }
        if self.clip_seconds <= 0.0 || !self.clip_seconds.is_finite() {
            return Err(DspError::InvalidConfig("clip_seconds must be positive".into()));
        }
        if self.frame_shift < 1 || self.fft_window < self.frame_shift {
            return Err(DspError::InvalidConfig(
                "need fft_window >= frame_shift >= 1".into(),
            ));
        }
        if self.n_mels < 1 {
            return Err(DspError::InvalidConfig("n_mels must be >= 1".into()));
        }
        let nyquist = f64::from(self.sample_rate_hz) / 2.0;
        if !(self.fmin_hz >= 0.0 && self.fmin_hz < self.fmax()) {
            return Err(DspError::InvalidConfig("need 0 <= fmin < fmax".into()));
        }
        if self.fmax() > nyquist + 1e-9 {
            return Err(DspError::InvalidConfig(format!(
                "fmax {} exceeds Nyquist {nyquist}",
                self.fmax()
            )));
        }
        Ok(())
    }

    /// Samples in a clip after `fix_length(clip_seconds)`.
    pub fn clip_samples(&self) -> usize {
        (self.clip_seconds * f64::from(self.sample_rate_hz)).round() as usize
    }

    /// Frames produced by `stft_power` on a fixed-length clip.
    pub fn n_frames(&self) -> usize {
        let n = self.clip_samples();
        if n < self.fft_window {
            0
        } else {
            (n - self.fft_window) / self.frame_shift + 1
        }
    }
}

/// Normalized n_mels x n_frames image in [0, 1], the model input.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrogramImage {
    pub values: Grid2,
    pub source_id: String,
}

/// Linear-interpolation resample to `target_rate_hz`.
///
/// Output length is `round(len * target / source)`.
pub fn resample(clip: &AudioClip, target_rate_hz: u32) -> Result<AudioClip, DspError> {
    if clip.samples.is_empty() {
        return Err(DspError::InvalidClip("cannot resample an empty clip".into()));
    }
    if target_rate_hz == 0 {
        return Err(DspError::InvalidConfig("target rate must be >= 1".into()));
    }
    if target_rate_hz == clip.sample_rate_hz {
        return Ok(AudioClip { samples: clip.samples.clone(), sample_rate_hz: target_rate_hz });
    }
    let src = &clip.samples;
    let ratio = f64::from(clip.sample_rate_hz) / f64::from(target_rate_hz);
    let out_len = (src.len() as f64 / ratio).round() as usize;
    let mut out = Vec::with_capacity(out_len);
    for i in 0..out_len {
        let pos = i as f64 * ratio;
        let p = (pos.floor() as usize).min(src.len() - 1);
        let frac = pos - p as f64;
        let q = (p + 1).min(src.len() - 1);
        out.push(src[p] * (1.0 - frac) + src[q] * frac);
    }
    Ok(AudioClip { samples: out, sample_rate_hz: target_rate_hz })
}

/// Enforce a fixed duration: truncate to the first `round(seconds * rate)`
/// samples, or zero-pad at the end.
pub fn fix_length(clip: &AudioClip, seconds: f64) -> Result<AudioClip, DspError> {
    if clip.samples.is_empty() {
        return Err(DspError::InvalidClip("cannot fix_length an empty clip".into()));
    }
    if seconds <= 0.0 || !seconds.is_finite() {
        return Err(DspError::InvalidConfig("seconds must be positive".into()));
    }
    let target = (seconds * f64::from(clip.sample_rate_hz)).round() as usize;
    let mut samples = clip.samples.clone();
    samples.resize(target, 0.0);
    Ok(AudioClip { samples, sample_rate_hz: clip.sample_rate_hz })
}

/// Periodic Hann window of length `n`.
fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Short-time power spectrum: Hann-windowed frames every `frame_shift`
/// samples, magnitude-squared DFT bins 0..=n_fft/2.
///
/// Returns a (n_fft/2 + 1) x n_frames grid.
pub fn stft_power(clip: &AudioClip, cfg: &DspConfig) -> Result<Grid2, DspError> {
    cfg.validate()?;
    let n_fft = cfg.fft_window;
    let n = clip.samples.len();
    if n < n_fft {
        return Err(DspError::ClipTooShort { len: n, window: n_fft });
    }
    let n_frames = (n - n_fft) / cfg.frame_shift + 1;
    let n_bins = n_fft / 2 + 1;
    let window = hann_window(n_fft);

    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);
    let mut grid = Grid2::zeros(n_bins, n_frames);
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    for frame in 0..n_frames {
        let start = frame * cfg.frame_shift;
        for (i, slot) in buf.iter_mut().enumerate() {
            *slot = Complex::new(clip.samples[start + i] * window[i], 0.0);
        }
        fft.process(&mut buf);
        for (bin, value) in buf.iter().take(n_bins).enumerate() {
            grid.set(bin, frame, value.norm_sqr());
        }
    }
    Ok(grid)
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Band-edge and center frequencies of the `n_mels` filters: `n_mels + 2`
/// points equally spaced on the mel scale between fmin and fmax, in Hz.
pub fn mel_band_points(cfg: &DspConfig) -> Vec<f64> {
    let lo = hz_to_mel(cfg.fmin_hz);
    let hi = hz_to_mel(cfg.fmax());
    let n = cfg.n_mels + 2;
    (0..n)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n - 1) as f64))
        .collect()
}

/// Triangular mel filterbank, n_mels x (n_fft/2 + 1), every row peaking at 1.
pub fn mel_filterbank(cfg: &DspConfig) -> Result<Grid2, DspError> {
    cfg.validate()?;
    let n_bins = cfg.fft_window / 2 + 1;
    let points = mel_band_points(cfg);
    let bin_hz = f64::from(cfg.sample_rate_hz) / cfg.fft_window as f64;
    let mut fb = Grid2::zeros(cfg.n_mels, n_bins);
    for m in 0..cfg.n_mels {
        let (lo, center, hi) = (points[m], points[m + 1], points[m + 2]);
        let mut row_max = 0.0f64;
        for k in 0..n_bins {
            let f = k as f64 * bin_hz;
            let w = if f > lo && f <= center && center > lo {
                (f - lo) / (center - lo)
            } else if f > center && f < hi && hi > center {
                (hi - f) / (hi - center)
            } else {
                0.0
            };
            fb.set(m, k, w);
            row_max = row_max.max(w);
        }
        if row_max <= 0.0 {
            return Err(DspError::InvalidConfig(format!(
                "mel filter {m} (center {center:.3} Hz) has no FFT bin support; reduce n_mels or widen the band"
            )));
        }
        // Rescale so the discrete peak is exactly 1.
        for k in 0..n_bins {
            let w = fb.at(m, k) / row_max;
            fb.set(m, k, w);
        }
    }
    Ok(fb)
}

/// Log-mel spectrogram image: filterbank x power, dB compression with a
/// floor `log_floor_db` below the per-image maximum, then min-max
/// normalization to [0, 1]. A constant image maps to all zeros.
pub fn mel_spectrogram(
    clip: &AudioClip,
    cfg: &DspConfig,
    source_id: &str,
) -> Result<SpectrogramImage, DspError> {
    let power = stft_power(clip, cfg)?;
    let fb = mel_filterbank(cfg)?;
    let n_frames = power.cols;
    let mut img = Grid2::zeros(cfg.n_mels, n_frames);

    for m in 0..cfg.n_mels {
        let weights = fb.row(m);
        for t in 0..n_frames {
            let mut acc = 0.0;
            for (k, &w) in weights.iter().enumerate() {
                if w != 0.0 {
                    acc += w * power.at(k, t);
                }
            }
            img.set(m, t, 10.0 * (acc + 1e-10).log10());
        }
    }

    let max_db = img.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let floor = max_db - cfg.log_floor_db.abs();
    for v in &mut img.data {
        if *v < floor {
            *v = floor;
        }
    }
    let min_db = img.data.iter().cloned().fold(f64::INFINITY, f64::min);
    let span = max_db - min_db;
    if span > 0.0 {
        for v in &mut img.data {
            *v = (*v - min_db) / span;
        }
    } else {
        for v in &mut img.data {
            *v = 0.0;
        }
    }
    Ok(SpectrogramImage { values: img, source_id: source_id.to_string() })
}

/// Full front end for one recording: decode, resample to the configured
/// rate, fix duration, extract the log-mel image.
pub fn featurize_wav_bytes(
    bytes: &[u8],
    cfg: &DspConfig,
    source_id: &str,
) -> Result<SpectrogramImage, DspError> {
    let clip = decode_wav(bytes)?;
    let clip = resample(&clip, cfg.sample_rate_hz)?;
    let clip = fix_length(&clip, cfg.clip_seconds)?;
    mel_spectrogram(&clip, cfg, source_id)
}

pub const CACHE_MAGIC: &[u8; 4] = b"DSPC";
pub const CACHE_VERSION: u32 = 1;

/// Serializes one spectrogram as a cache record:
/// magic "DSPC", version u32 LE, n_mels u32 LE, n_frames u32 LE, then
/// row-major 64-bit LE floats.
pub fn write_cache_record(img: &SpectrogramImage) -> Vec<u8> {
    let g = &img.values;
    let mut out = Vec::with_capacity(16 + 8 * g.data.len());
    out.extend_from_slice(CACHE_MAGIC);
    out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    out.extend_from_slice(&(g.rows as u32).to_le_bytes());
    out.extend_from_slice(&(g.cols as u32).to_le_bytes());
    for &v in &g.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parses a cache record produced by [`write_cache_record`].
pub fn read_cache_record(bytes: &[u8], source_id: &str) -> Result<SpectrogramImage, DspError> {
    if bytes.len() < 16 {
        return Err(DspError::InvalidCache("record shorter than the 16-byte header".into()));
    }
    if &bytes[0..4] != CACHE_MAGIC {
        return Err(DspError::InvalidCache("bad magic, expected DSPC".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CACHE_VERSION {
        return Err(DspError::InvalidCache(format!("unsupported version {version}")));
    }
    let rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let expect = 16 + 8 * rows * cols;
    if bytes.len() != expect {
        return Err(DspError::InvalidCache(format!(
            "expected {expect} bytes for {rows}x{cols}, got {}",
            bytes.len()
        )));
    }
    let data = bytes[16..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(SpectrogramImage {
        values: Grid2 { rows, cols, data },
        source_id: source_id.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table1() -> DspConfig {
        DspConfig::default()
    }

    #[test]
    fn default_config_matches_expected_geometry() {
        let cfg = table1();
        assert_eq!(cfg.clip_samples(), 8192);
        assert_eq!(cfg.n_frames(), 13);
    }

    #[test]
    fn resample_identity_when_rates_match() {
        let clip = AudioClip::new(vec![0.1, -0.2, 0.3], 2048).unwrap();
        let out = resample(&clip, 2048).unwrap();
        assert_eq!(out.samples, clip.samples);
    }

    #[test]
    fn resample_constant_stays_constant() {
        let clip = AudioClip::new(vec![0.7; 4096], 4096).unwrap();
        let out = resample(&clip, 1000).unwrap();
        assert_eq!(out.sample_rate_hz, 1000);
        assert_eq!(out.samples.len(), 1000);
        assert!(out.samples.iter().all(|&s| (s - 0.7).abs() < 1e-15));
    }

    #[test]
    fn fix_length_identity_pad_truncate() {
        let rate = 2048u32;
        let four_sec = AudioClip::new(vec![0.5; 4 * 2048], rate).unwrap();
        assert_eq!(fix_length(&four_sec, 4.0).unwrap().samples, four_sec.samples);

        let two_sec = AudioClip::new(vec![0.5; 2 * 2048], rate).unwrap();
        let padded = fix_length(&two_sec, 4.0).unwrap();
        assert_eq!(padded.samples.len(), 4 * 2048);
        assert!(padded.samples[..2 * 2048].iter().all(|&s| s == 0.5));
        assert!(padded.samples[2 * 2048..].iter().all(|&s| s == 0.0));

        let six_sec = AudioClip::new(vec![0.5; 6 * 2048], rate).unwrap();
        let cut = fix_length(&six_sec, 4.0).unwrap();
        assert_eq!(cut.samples.len(), 4 * 2048);
    }

    #[test]
    fn stft_of_silence_is_zero() {
        let cfg = table1();
        let clip = AudioClip::new(vec![0.0; cfg.clip_samples()], cfg.sample_rate_hz).unwrap();
        let grid = stft_power(&clip, &cfg).unwrap();
        assert_eq!(grid.rows, 1025);
        assert_eq!(grid.cols, 13);
        assert!(grid.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stft_rejects_short_clips() {
        let cfg = table1();
        let clip = AudioClip::new(vec![0.1; 100], cfg.sample_rate_hz).unwrap();
        match stft_power(&clip, &cfg) {
            Err(DspError::ClipTooShort { len: 100, window: 2048 }) => {}
            other => panic!("expected ClipTooShort, got {other:?}"),
        }
    }

    #[test]
    fn filterbank_rows_peak_at_one() {
        let fb = mel_filterbank(&table1()).unwrap();
        assert_eq!(fb.rows, 64);
        assert_eq!(fb.cols, 1025);
        for m in 0..fb.rows {
            let row = fb.row(m);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!((max - 1.0).abs() < 1e-15, "row {m} max {max}");
            assert!(row.iter().all(|&w| (0.0..=1.0).contains(&w)));
        }
    }

    #[test]
    fn single_mel_filter_peaks_mid_band() {
        let cfg = DspConfig { n_mels: 1, ..table1() };
        let fb = mel_filterbank(&cfg).unwrap();
        let row = fb.row(0);
        let peak_bin = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
        let peak_hz = peak_bin as f64 * 1.0; // 1 Hz per bin at 2048/2048
        let expected = mel_to_hz((hz_to_mel(0.0) + hz_to_mel(1024.0)) / 2.0);
        assert!((peak_hz - expected).abs() <= 1.0, "peak {peak_hz} vs {expected}");
    }

    #[test]
    fn oversized_filterbank_is_a_config_error() {
        // 500 filters across a 32-bin spectrum cannot all have support.
        let cfg = DspConfig { fft_window: 64, frame_shift: 32, n_mels: 500, ..table1() };
        match mel_filterbank(&cfg) {
            Err(DspError::InvalidConfig(msg)) => assert!(msg.contains("support"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn silence_maps_to_all_zero_image() {
        let cfg = table1();
        let clip = AudioClip::new(vec![0.0; cfg.clip_samples()], cfg.sample_rate_hz).unwrap();
        let img = mel_spectrogram(&clip, &cfg, "silence").unwrap();
        assert!(img.values.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn nonconstant_image_attains_zero_and_one() {
        let cfg = table1();
        let samples: Vec<f64> = (0..cfg.clip_samples())
            .map(|i| 0.4 * (2.0 * std::f64::consts::PI * 100.0 * i as f64 / 2048.0).sin())
            .collect();
        let clip = AudioClip::new(samples, cfg.sample_rate_hz).unwrap();
        let img = mel_spectrogram(&clip, &cfg, "tone").unwrap();
        let min = img.values.data.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = img.values.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(min, 0.0);
        assert_eq!(max, 1.0);
        assert_eq!(img.values.rows, 64);
        assert_eq!(img.values.cols, 13);
    }

    #[test]
    fn cache_record_round_trips() {
        let cfg = table1();
        let samples: Vec<f64> =
            (0..cfg.clip_samples()).map(|i| 0.3 * ((i % 83) as f64 / 83.0 - 0.5)).collect();
        let clip = AudioClip::new(samples, cfg.sample_rate_hz).unwrap();
        let img = mel_spectrogram(&clip, &cfg, "rec1").unwrap();
        let bytes = write_cache_record(&img);
        let back = read_cache_record(&bytes, "rec1").unwrap();
        assert_eq!(back, img);

        let err = read_cache_record(b"XXXX\0\0\0\0\0\0\0\0\0\0\0\0", "rec1").unwrap_err();
        assert!(err.to_string().contains("magic"));
    }
}
