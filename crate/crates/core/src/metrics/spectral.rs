//! Multi-resolution STFT distance.

use std::f64::consts::PI;
use std::str::FromStr;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::audio::AudioBuffer;

/// (fft size, hop) pairs; the Hann window spans the full fft.
pub const MRS_RESOLUTIONS: [(usize, usize); 3] = [(512, 128), (1024, 256), (2048, 512)];
pub const MAG_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelMode {
    Lr,
    Ms,
}

impl FromStr for ChannelMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "lr" => Ok(Self::Lr),
            "ms" => Ok(Self::Ms),
            other => Err(format!("unknown channel mode `{other}` (lr, ms)")),
        }
    }
}

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Magnitude STFT, frames centered on multiples of `hop` with zero padding
/// of `n_fft / 2` at both ends. Returns frames of `n_fft / 2 + 1` bins.
pub fn stft_magnitude(x: &[f64], n_fft: usize, hop: usize) -> Vec<Vec<f64>> {
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);
    let window = hann(n_fft);
    let pad = n_fft / 2;
    let n_frames = 1 + x.len() / hop;
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    (0..n_frames)
        .map(|f| {
            let start = (f * hop) as isize - pad as isize;
            for (i, slot) in buf.iter_mut().enumerate() {
                let idx = start + i as isize;
                let v = if idx >= 0 && (idx as usize) < x.len() {
                    x[idx as usize]
                } else {
                    0.0
                };
                *slot = Complex::new(v * window[i], 0.0);
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            buf[..=n_fft / 2].iter().map(|c| c.norm()).collect()
        })
        .collect()
}

/// Spectral convergence and log-magnitude terms for one channel at one
/// resolution. `sc` is `None` when the reference spectrum is all zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolutionTerms {
    pub n_fft: usize,
    pub sc: Option<f64>,
    pub log_mag: f64,
}

fn resolution_terms(
    reference: &[f64],
    estimate: &[f64],
    n_fft: usize,
    hop: usize,
) -> ResolutionTerms {
    let a = stft_magnitude(reference, n_fft, hop);
    let b = stft_magnitude(estimate, n_fft, hop);
    let (mut diff_sq, mut ref_sq, mut log_l1) = (0.0, 0.0, 0.0);
    let mut count = 0usize;
    for (fa, fb) in a.iter().zip(&b) {
        for (&ma, &mb) in fa.iter().zip(fb) {
            diff_sq += (ma - mb) * (ma - mb);
            ref_sq += ma * ma;
            log_l1 += (ma.max(MAG_FLOOR).ln() - mb.max(MAG_FLOOR).ln()).abs();
            count += 1;
        }
    }
    ResolutionTerms {
        n_fft,
        sc: (ref_sq > 0.0).then(|| diff_sq.sqrt() / ref_sq.sqrt()),
        log_mag: log_l1 / count as f64,
    }
}

/// Per-channel, per-resolution breakdown. A channel whose reference and
/// estimate are both all-zero is omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MrsDetail {
    pub mode: ChannelMode,
    pub channels: Vec<(String, Vec<ResolutionTerms>)>,
    pub distance: f64,
}

fn all_zero(x: &[f64]) -> bool {
    x.iter().all(|&v| v == 0.0)
}

pub fn mrs_detail(
    reference: &AudioBuffer,
    estimate: &AudioBuffer,
    mode: ChannelMode,
) -> Result<MrsDetail, MetricError> {
    if reference.len() != estimate.len() {
        return Err(MetricError::LengthMismatch {
            reference: reference.len(),
            estimate: estimate.len(),
        });
    }
    if reference.sample_rate() != estimate.sample_rate() {
        return Err(MetricError::RateMismatch {
            reference: reference.sample_rate(),
            estimate: estimate.sample_rate(),
        });
    }
    let (ref_ch, est_ch, names) = match mode {
        ChannelMode::Lr => (
            [reference.left().to_vec(), reference.right().to_vec()],
            [estimate.left().to_vec(), estimate.right().to_vec()],
            ["left", "right"],
        ),
        ChannelMode::Ms => {
            let (rm, rs) = reference.mid_side();
            let (em, es) = estimate.mid_side();
            ([rm, rs], [em, es], ["mid", "side"])
        }
    };
    if ref_ch.iter().all(|c| all_zero(c)) {
        return Err(MetricError::SilentReference);
    }

    let mut channels = Vec::new();
    let mut total = 0.0;
    for ((r, e), name) in ref_ch.iter().zip(&est_ch).zip(names) {
        if all_zero(r) && all_zero(e) {
            continue;
        }
        let terms: Vec<ResolutionTerms> = MRS_RESOLUTIONS
            .iter()
            .map(|&(n_fft, hop)| resolution_terms(r, e, n_fft, hop))
            .collect();
        total += terms
            .iter()
            .map(|t| t.sc.unwrap_or(0.0) + t.log_mag)
            .sum::<f64>();
        channels.push((name.to_string(), terms));
    }
    let distance = total / channels.len() as f64;
    Ok(MrsDetail {
        mode,
        channels,
        distance,
    })
}

/// Sum over resolutions of spectral convergence plus mean absolute log
/// magnitude difference, averaged over the two channels of `mode`. The
/// reference spectrum is the convergence denominator.
pub fn mrs_distance(
    reference: &AudioBuffer,
    estimate: &AudioBuffer,
    mode: ChannelMode,
) -> Result<f64, MetricError> {
    Ok(mrs_detail(reference, estimate, mode)?.distance)
}
