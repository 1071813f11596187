//! Minimal RIFF/WAVE reader and writer for 16-bit PCM.

use super::{AudioClip, DspError};

fn read_u32(bytes: &[u8], at: usize) -> Option<u32> {
    bytes.get(at..at + 4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
}

fn read_u16(bytes: &[u8], at: usize) -> Option<u16> {
    bytes.get(at..at + 2).map(|b| u16::from_le_bytes(b.try_into().unwrap()))
}

/// Decodes a RIFF/WAVE container holding 16-bit PCM samples.
///
/// Multichannel input is averaged down to mono and integer samples are scaled
/// by 1/32768 into [-1, 1].
pub fn decode_wav(bytes: &[u8]) -> Result<AudioClip, DspError> {
    let riff = |what: &str| DspError::Decode { chunk: "RIFF".into(), reason: what.to_string() };
    if bytes.len() < 12 {
        return Err(riff("file shorter than the 12-byte RIFF header"));
    }
    if &bytes[0..4] != b"RIFF" {
        return Err(riff("missing RIFF magic"));
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(riff("missing WAVE form type"));
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None; // format, channels, rate, bits
    let mut data: Option<&[u8]> = None;
    let mut at = 12usize;
    while at + 8 <= bytes.len() {
        let id = &bytes[at..at + 4];
        let size = read_u32(bytes, at + 4).unwrap() as usize;
        let body_start = at + 8;
        let body_end = body_start.checked_add(size).filter(|&e| e <= bytes.len());
        let chunk_name = String::from_utf8_lossy(id).into_owned();
        let body = match body_end {
            Some(end) => &bytes[body_start..end],
            None => {
                return Err(DspError::Decode {
                    chunk: chunk_name,
                    reason: format!("declared size {size} runs past end of file"),
                })
            }
        };
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(DspError::Decode {
                        chunk: "fmt ".into(),
                        reason: format!("chunk is {} bytes, need at least 16", body.len()),
                    });
                }
                let format = read_u16(body, 0).unwrap();
                let channels = read_u16(body, 2).unwrap();
                let rate = read_u32(body, 4).unwrap();
                let bits = read_u16(body, 14).unwrap();
                fmt = Some((format, channels, rate, bits));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // Chunks are word-aligned; odd sizes carry a pad byte.
        at = body_start + size + (size & 1);
    }

    let (format, channels, rate, bits) = fmt.ok_or_else(|| DspError::Decode {
        chunk: "fmt ".into(),
        reason: "chunk not present".into(),
    })?;
    if format != 1 {
        return Err(DspError::Decode {
            chunk: "fmt ".into(),
            reason: format!("unsupported encoding: format tag {format}, only PCM (1) is supported"),
        });
    }
    if bits != 16 {
        return Err(DspError::Decode {
            chunk: "fmt ".into(),
            reason: format!("unsupported encoding: {bits}-bit samples, only 16-bit is supported"),
        });
    }
    if channels == 0 {
        return Err(DspError::Decode { chunk: "fmt ".into(), reason: "zero channels".into() });
    }
    if rate == 0 {
        return Err(DspError::Decode { chunk: "fmt ".into(), reason: "zero sample rate".into() });
    }
    let data = data.ok_or_else(|| DspError::Decode {
        chunk: "data".into(),
        reason: "chunk not present".into(),
    })?;

    let frame_bytes = 2 * channels as usize;
    if data.len() % frame_bytes != 0 {
        return Err(DspError::Decode {
            chunk: "data".into(),
            reason: format!("size {} is not a multiple of the {frame_bytes}-byte frame", data.len()),
        });
    }
    let n_frames = data.len() / frame_bytes;
    let mut samples = Vec::with_capacity(n_frames);
    for frame in data.chunks_exact(frame_bytes) {
        let mut acc = 0.0f64;
        for ch in frame.chunks_exact(2) {
            let v = i16::from_le_bytes([ch[0], ch[1]]);
            acc += f64::from(v) / 32768.0;
        }
        samples.push(acc / f64::from(channels));
    }
    AudioClip::new(samples, rate)
}

/// Encodes a mono clip as 16-bit PCM; samples are clamped to [-1, 1] and
/// quantized with round-half-away-from-zero via `f64::round`.
pub fn encode_wav(clip: &AudioClip) -> Vec<u8> {
    let n = clip.samples.len();
    let data_size = (2 * n) as u32;
    let mut out = Vec::with_capacity(44 + 2 * n);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_size).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&clip.sample_rate_hz.to_le_bytes());
    out.extend_from_slice(&(2 * clip.sample_rate_hz).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits per sample
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_size.to_le_bytes());
    for &s in &clip.samples {
        let q = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pcm16(channels: u16, rate: u32, frames: &[i16]) -> Vec<u8> {
        let data_size = (2 * frames.len()) as u32;
        let mut out = Vec::new();
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&(36 + data_size).to_le_bytes());
        out.extend_from_slice(b"WAVE");
        out.extend_from_slice(b"fmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&channels.to_le_bytes());
        out.extend_from_slice(&rate.to_le_bytes());
        out.extend_from_slice(&(2 * u32::from(channels) * rate).to_le_bytes());
        out.extend_from_slice(&(2 * channels).to_le_bytes());
        out.extend_from_slice(&16u16.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&data_size.to_le_bytes());
        for &v in frames {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    #[test]
    fn silence_decodes_to_zeros() {
        let bytes = pcm16(1, 2048, &vec![0i16; 2048]);
        let clip = decode_wav(&bytes).unwrap();
        assert_eq!(clip.sample_rate_hz, 2048);
        assert_eq!(clip.samples.len(), 2048);
        assert!(clip.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn symmetric_stereo_averages_to_zero() {
        let frames: Vec<i16> = (0..64).flat_map(|_| [16384i16, -16384i16]).collect();
        let clip = decode_wav(&pcm16(2, 8000, &frames)).unwrap();
        assert_eq!(clip.samples.len(), 64);
        assert!(clip.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn full_scale_negative_maps_to_minus_one() {
        // Direct scaling oracle: -32768 / 32768 = -1 exactly.
        let clip = decode_wav(&pcm16(1, 1000, &[-32768])).unwrap();
        assert_eq!(clip.samples, vec![-1.0]);
    }

    #[test]
    fn malformed_header_names_chunk() {
        let err = decode_wav(b"RIFX____WAVE").unwrap_err();
        assert!(err.to_string().contains("RIFF"), "{err}");

        let mut bad_fmt = pcm16(1, 2048, &[0]);
        bad_fmt[20] = 3; // format tag -> IEEE float
        let err = decode_wav(&bad_fmt).unwrap_err();
        assert!(err.to_string().contains("fmt "), "{err}");
        assert!(err.to_string().contains("format tag 3"), "{err}");
    }

    #[test]
    fn unsupported_bit_depth_is_rejected() {
        let mut bytes = pcm16(1, 2048, &[0, 0]);
        bytes[34] = 8; // bits per sample
        let err = decode_wav(&bytes).unwrap_err();
        assert!(err.to_string().contains("8-bit"), "{err}");
    }

    #[test]
    fn encode_decode_round_trip_is_exact_on_the_quantized_grid() {
        let clip = AudioClip::new(
            (0..100).map(|i| f64::from(i - 50) / 64.0).collect::<Vec<_>>(),
            2048,
        )
        .unwrap();
        let decoded = decode_wav(&encode_wav(&clip)).unwrap();
        let twice = decode_wav(&encode_wav(&decoded)).unwrap();
        assert_eq!(decoded.samples, twice.samples);
    }

    #[test]
    fn skips_unknown_chunks() {
        let mut bytes = pcm16(1, 2048, &[100, -100]);
        // Splice a LIST chunk between header and fmt.
        let mut with_list = bytes[..12].to_vec();
        with_list.extend_from_slice(b"LIST");
        with_list.extend_from_slice(&3u32.to_le_bytes());
        with_list.extend_from_slice(b"abc\0"); // odd size + pad byte
        with_list.extend_from_slice(&bytes.split_off(12));
        let clip = decode_wav(&with_list).unwrap();
        assert_eq!(clip.samples.len(), 2);
    }
}
