//! Deterministic test signals used as stand-in dry sources.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::AudioBuffer;

pub const SINE_FREQ_HZ: f64 = 440.0;
pub const SIGNAL_PEAK: f64 = 0.9;
pub const PINK_NOISE_SEED: u64 = 0x5eed_f00d;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    Sine,
    Sweep,
    PinkNoise,
    Impulse,
}

impl std::str::FromStr for SignalKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sine" => Ok(Self::Sine),
            "sweep" => Ok(Self::Sweep),
            "pink_noise" | "pink" => Ok(Self::PinkNoise),
            "impulse" => Ok(Self::Impulse),
            other => Err(format!("unknown signal kind `{other}`")),
        }
    }
}

fn frames(duration_s: f64, sample_rate: u32) -> usize {
    (duration_s * sample_rate as f64).round().max(1.0) as usize
}

pub fn synth_test_signal(kind: SignalKind, duration_s: f64, sample_rate: u32) -> AudioBuffer {
    let n = frames(duration_s, sample_rate);
    let sr = sample_rate as f64;
    match kind {
        SignalKind::Sine => sine(SINE_FREQ_HZ, SIGNAL_PEAK, duration_s, sample_rate),
        SignalKind::Sweep => {
            // exponential sweep, 20 Hz to 20 kHz
            let (f0, f1) = (20.0f64, 20_000.0f64);
            let t_total = n as f64 / sr;
            let k = (f1 / f0).ln();
            let samples = (0..n)
                .map(|i| {
                    let t = i as f64 / sr;
                    let phase = 2.0 * PI * f0 * t_total / k * ((t / t_total * k).exp() - 1.0);
                    SIGNAL_PEAK * phase.sin()
                })
                .collect();
            AudioBuffer::from_mono(sample_rate, samples)
        }
        SignalKind::PinkNoise => pink_noise(duration_s, sample_rate, PINK_NOISE_SEED),
        SignalKind::Impulse => {
            let mut samples = vec![0.0; n];
            samples[0] = 1.0;
            AudioBuffer::from_mono(sample_rate, samples)
        }
    }
}

pub fn sine(freq_hz: f64, peak: f64, duration_s: f64, sample_rate: u32) -> AudioBuffer {
    let n = frames(duration_s, sample_rate);
    let w = 2.0 * PI * freq_hz / sample_rate as f64;
    AudioBuffer::from_mono(
        sample_rate,
        (0..n).map(|i| peak * (w * i as f64).sin()).collect(),
    )
}

/// Stereo pink noise with independent channels. Each channel is uniform
/// white noise shaped by Paul Kellet's refined -3 dB/octave filter.
pub fn pink_noise(duration_s: f64, sample_rate: u32, seed: u64) -> AudioBuffer {
    let n = frames(duration_s, sample_rate);
    let channel = |stream: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let mut b = [0.0f64; 7];
        (0..n)
            .map(|_| {
                let white: f64 = rng.gen_range(-1.0..1.0);
                b[0] = 0.99886 * b[0] + white * 0.0555179;
                b[1] = 0.99332 * b[1] + white * 0.0750759;
                b[2] = 0.96900 * b[2] + white * 0.1538520;
                b[3] = 0.86650 * b[3] + white * 0.3104856;
                b[4] = 0.55000 * b[4] + white * 0.5329522;
                b[5] = -0.7616 * b[5] - white * 0.0168980;
                let pink = b[..6].iter().sum::<f64>() + b[6] + white * 0.5362;
                b[6] = white * 0.115926;
                pink * 0.11
            })
            .collect::<Vec<_>>()
    };
    let left = channel(0);
    let right = channel(1);
    AudioBuffer::new(sample_rate, left, right).expect("equal lengths")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::linear_to_db;

    #[test]
    fn sine_peak_is_point_nine() {
        let s = synth_test_signal(SignalKind::Sine, 1.0, 44_100);
        assert_eq!(s.len(), 44_100);
        assert!((s.peak() - 0.9).abs() < 1e-6);
    }

    #[test]
    fn impulse_is_single_unit_sample() {
        let s = synth_test_signal(SignalKind::Impulse, 0.1, 48_000);
        assert_eq!(s.left()[0], 1.0);
        assert_eq!(s.left().iter().filter(|&&x| x != 0.0).count(), 1);
        assert_eq!(s.left(), s.right());
    }

    #[test]
    fn pink_noise_level_and_determinism() {
        let a = synth_test_signal(SignalKind::PinkNoise, 1.0, 44_100);
        let b = synth_test_signal(SignalKind::PinkNoise, 1.0, 44_100);
        assert_eq!(a, b);
        let rms_db = linear_to_db(a.rms());
        assert!((-26.0..=-14.0).contains(&rms_db), "{rms_db}");
        assert_ne!(a.left(), a.right());
    }

    #[test]
    fn pink_noise_slopes_down() {
        // energy per octave is flat for pink noise, so per-bin power falls:
        // compare first differences (white-ish) against raw (pink) energy
        let a = pink_noise(2.0, 44_100, 7);
        let x = a.left();
        let raw: f64 = x.iter().map(|v| v * v).sum();
        let diff: f64 = x.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
        assert!(diff < raw, "high frequencies should carry less energy");
    }

    #[test]
    fn sweep_stays_within_peak() {
        let s = synth_test_signal(SignalKind::Sweep, 0.5, 44_100);
        assert!(s.peak() <= SIGNAL_PEAK + 1e-12);
        assert!(s.peak() > 0.85);
    }
}
