//! Stereo audio buffers and WAV file I/O.

use std::path::Path;

use hound::{SampleFormat, WavSpec};
use log::warn;
use thiserror::Error;

pub const SUPPORTED_SAMPLE_RATES: [u32; 2] = [44_100, 48_000];

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("channel lengths differ: left {left}, right {right}")]
    ChannelMismatch { left: usize, right: usize },
    #[error("sample rate must be positive")]
    ZeroSampleRate,
    #[error("{path}: unsupported sample rate {rate} Hz (expected 44100 or 48000)")]
    UnsupportedRate { path: String, rate: u32 },
    #[error("{path}: unsupported channel count {channels}")]
    UnsupportedChannels { path: String, channels: u16 },
    #[error("{path}: unsupported sample format {bits}-bit {format}")]
    UnsupportedFormat {
        path: String,
        bits: u16,
        format: String,
    },
    #[error("{path}: {source}")]
    Wav {
        path: String,
        #[source]
        source: hound::Error,
    },
}

/// A two-channel signal with 64-bit samples.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    sample_rate: u32,
    left: Vec<f64>,
    right: Vec<f64>,
}

impl AudioBuffer {
    pub fn new(sample_rate: u32, left: Vec<f64>, right: Vec<f64>) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::ZeroSampleRate);
        }
        if left.len() != right.len() {
            return Err(AudioError::ChannelMismatch {
                left: left.len(),
                right: right.len(),
            });
        }
        Ok(Self {
            sample_rate,
            left,
            right,
        })
    }

    pub fn silence(sample_rate: u32, len: usize) -> Self {
        Self {
            sample_rate,
            left: vec![0.0; len],
            right: vec![0.0; len],
        }
    }

    pub fn from_mono(sample_rate: u32, samples: Vec<f64>) -> Self {
        Self {
            sample_rate,
            right: samples.clone(),
            left: samples,
        }
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.left.len()
    }

    pub fn is_empty(&self) -> bool {
        self.left.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate as f64
    }

    pub fn left(&self) -> &[f64] {
        &self.left
    }

    pub fn right(&self) -> &[f64] {
        &self.right
    }

    pub fn channels(&self) -> [&[f64]; 2] {
        [&self.left, &self.right]
    }

    pub fn channels_mut(&mut self) -> [&mut Vec<f64>; 2] {
        [&mut self.left, &mut self.right]
    }

    pub fn into_channels(self) -> (Vec<f64>, Vec<f64>) {
        (self.left, self.right)
    }

    /// Applies `f` to every sample of both channels.
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Self {
            sample_rate: self.sample_rate,
            left: self.left.iter().map(|&x| f(x)).collect(),
            right: self.right.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn peak(&self) -> f64 {
        self.left
            .iter()
            .chain(&self.right)
            .fold(0.0f64, |acc, x| acc.max(x.abs()))
    }

    /// RMS over both channels pooled together.
    pub fn rms(&self) -> f64 {
        let n = 2 * self.len();
        if n == 0 {
            return 0.0;
        }
        let energy: f64 = self.left.iter().chain(&self.right).map(|x| x * x).sum();
        (energy / n as f64).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.left.iter().chain(&self.right).all(|x| x.is_finite())
    }

    /// Rounds every sample to 32-bit float precision, the precision samples
    /// have after a float WAV round trip.
    pub fn to_f32_precision(&self) -> Self {
        self.map(|x| x as f32 as f64)
    }

    /// Mid/side pair: mid = (L+R)/2, side = (L-R)/2.
    pub fn mid_side(&self) -> (Vec<f64>, Vec<f64>) {
        self.left
            .iter()
            .zip(&self.right)
            .map(|(l, r)| ((l + r) * 0.5, (l - r) * 0.5))
            .unzip()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.left
            .iter()
            .zip(&other.left)
            .chain(self.right.iter().zip(&other.right))
            .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()))
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

pub fn linear_to_db(linear: f64) -> f64 {
    20.0 * linear.log10()
}

/// Reads a WAV file. PCM 16/24-bit and 32-bit float are accepted; mono
/// files are duplicated onto both channels.
pub fn read_wav(path: &Path) -> Result<AudioBuffer, AudioError> {
    let p = path.display().to_string();
    let wav_err = |source| AudioError::Wav {
        path: p.clone(),
        source,
    };
    let mut reader = hound::WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    if !SUPPORTED_SAMPLE_RATES.contains(&spec.sample_rate) {
        return Err(AudioError::UnsupportedRate {
            path: p,
            rate: spec.sample_rate,
        });
    }
    if spec.channels != 1 && spec.channels != 2 {
        return Err(AudioError::UnsupportedChannels {
            path: p,
            channels: spec.channels,
        });
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(wav_err)?,
        (SampleFormat::Int, bits @ (16 | 24)) => {
            let scale = (1i64 << (bits - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<Result<_, _>>()
                .map_err(wav_err)?
        }
        (format, bits) => {
            return Err(AudioError::UnsupportedFormat {
                path: p,
                bits,
                format: format!("{format:?}").to_lowercase(),
            })
        }
    };
    if spec.channels == 1 {
        warn!("{p}: mono file duplicated to stereo");
        return Ok(AudioBuffer::from_mono(spec.sample_rate, interleaved));
    }
    let (left, right) = interleaved.chunks_exact(2).map(|f| (f[0], f[1])).unzip();
    AudioBuffer::new(spec.sample_rate, left, right)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavFormat {
    Pcm16,
    Pcm24,
    Float32,
}

/// Writes a stereo WAV. Integer formats clip to [-1, 1]; float keeps
/// excursions.
pub fn write_wav(path: &Path, audio: &AudioBuffer, format: WavFormat) -> Result<(), AudioError> {
    let p = path.display().to_string();
    if !SUPPORTED_SAMPLE_RATES.contains(&audio.sample_rate) {
        return Err(AudioError::UnsupportedRate {
            path: p,
            rate: audio.sample_rate,
        });
    }
    let (bits, sample_format) = match format {
        WavFormat::Pcm16 => (16, SampleFormat::Int),
        WavFormat::Pcm24 => (24, SampleFormat::Int),
        WavFormat::Float32 => (32, SampleFormat::Float),
    };
    let spec = WavSpec {
        channels: 2,
        sample_rate: audio.sample_rate,
        bits_per_sample: bits,
        sample_format,
    };
    let wav_err = |source| AudioError::Wav {
        path: p.clone(),
        source,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wav_err)?;
    for (&l, &r) in audio.left.iter().zip(&audio.right) {
        for x in [l, r] {
            match format {
                WavFormat::Float32 => writer.write_sample(x as f32),
                WavFormat::Pcm16 | WavFormat::Pcm24 => {
                    let max = ((1i64 << (bits - 1)) - 1) as f64;
                    let v = (x.clamp(-1.0, 1.0) * max).round() as i32;
                    writer.write_sample(v)
                }
            }
            .map_err(wav_err)?;
        }
    }
    writer.finalize().map_err(wav_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize) -> AudioBuffer {
        let left = (0..n).map(|i| (i as f64 / n as f64) - 0.5).collect();
        let right = (0..n).map(|i| 0.25 - (i as f64 / n as f64) * 0.3).collect();
        AudioBuffer::new(44_100, left, right).unwrap()
    }

    #[test]
    fn mismatched_channels_rejected() {
        assert!(matches!(
            AudioBuffer::new(44_100, vec![0.0; 3], vec![0.0; 2]),
            Err(AudioError::ChannelMismatch { .. })
        ));
    }

    #[test]
    fn float_round_trip_is_exact_at_f32() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let audio = ramp(1000).map(|x| x * 1.7);
        write_wav(&path, &audio, WavFormat::Float32).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back, audio.to_f32_precision());
    }

    #[test]
    fn pcm_round_trips_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        for (format, tol) in [
            (WavFormat::Pcm16, 1.0 / 32768.0),
            (WavFormat::Pcm24, 1.0 / 8_388_608.0),
        ] {
            let path = dir.path().join("a.wav");
            let audio = ramp(500);
            write_wav(&path, &audio, format).unwrap();
            let back = read_wav(&path).unwrap();
            assert!(back.max_abs_diff(&audio) <= tol, "{format:?}");
        }
    }

    #[test]
    fn mono_is_duplicated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mono.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 48_000,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        for v in [0i16, 16384, -16384] {
            w.write_sample(v).unwrap();
        }
        w.finalize().unwrap();
        let audio = read_wav(&path).unwrap();
        assert_eq!(audio.left(), &[0.0, 0.5, -0.5]);
        assert_eq!(audio.left(), audio.right());
        assert_eq!(audio.sample_rate(), 48_000);
    }

    #[test]
    fn odd_sample_rate_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.wav");
        let audio = AudioBuffer::silence(22_050, 10);
        assert!(matches!(
            write_wav(&path, &audio, WavFormat::Float32),
            Err(AudioError::UnsupportedRate { .. })
        ));
        let spec = WavSpec {
            channels: 2,
            sample_rate: 22_050,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        hound::WavWriter::create(&path, spec)
            .unwrap()
            .finalize()
            .unwrap();
        assert!(matches!(
            read_wav(&path),
            Err(AudioError::UnsupportedRate { rate: 22_050, .. })
        ));
    }

    #[test]
    fn missing_file_names_path() {
        let err = read_wav(Path::new("/nonexistent/dry.wav")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/dry.wav"));
    }
}
