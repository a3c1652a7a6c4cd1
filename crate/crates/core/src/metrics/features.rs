//! Audio-feature descriptors, embedding similarity and the number token loss.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::spectral::hann;
use super::MetricError;
use crate::audio::{linear_to_db, AudioBuffer};

pub const BARK_BANDS: usize = 24;
pub const WELCH_SIZE: usize = 4096;
pub const WIDTH_FLOOR: f64 = 1e-7;
const POWER_FLOOR: f64 = 1e-20;
/// Weight on the two unitless stereo features in `af_distance`.
pub const STEREO_WEIGHT: f64 = 10.0;
pub const NTL_ROW_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AfVector {
    pub rms: f64,
    pub crest_factor_db: f64,
    pub stereo_width: f64,
    pub stereo_imbalance: f64,
    pub bark_spectrum: Vec<f64>,
}

/// Traunmüller's Hz-to-Bark mapping with its low and high end corrections.
pub fn hz_to_bark(f: f64) -> f64 {
    let z = 26.81 * f / (1960.0 + f) - 0.53;
    if z < 2.0 {
        z + 0.15 * (2.0 - z)
    } else if z > 20.1 {
        z + 0.22 * (z - 20.1)
    } else {
        z
    }
}

fn bark_band(f: f64) -> usize {
    (hz_to_bark(f).floor().max(0.0) as usize).min(BARK_BANDS - 1)
}

/// Welch power spectrum: Hann segments of `WELCH_SIZE` with 50% overlap,
/// averaged. Short inputs are zero padded to one segment.
pub fn welch_power(x: &[f64]) -> Vec<f64> {
    let n = WELCH_SIZE;
    let hop = n / 2;
    let window = hann(n);
    let norm: f64 = window.iter().map(|w| w * w).sum();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let segments = if x.len() <= n {
        1
    } else {
        1 + (x.len() - n) / hop
    };
    let mut power = vec![0.0; n / 2 + 1];
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    for s in 0..segments {
        let start = s * hop;
        for (i, slot) in buf.iter_mut().enumerate() {
            let v = x.get(start + i).copied().unwrap_or(0.0);
            *slot = Complex::new(v * window[i], 0.0);
        }
        fft.process(&mut buf);
        for (p, c) in power.iter_mut().zip(&buf) {
            *p += c.norm_sqr() / norm;
        }
    }
    power.iter_mut().for_each(|p| *p /= segments as f64);
    power
}

/// Band energies in dB, low to high, from the channel-averaged Welch power
/// spectrum.
pub fn bark_spectrum(audio: &AudioBuffer) -> Vec<f64> {
    let pl = welch_power(audio.left());
    let pr = welch_power(audio.right());
    let sr = audio.sample_rate() as f64;
    let mut bands = vec![0.0; BARK_BANDS];
    for (k, (a, b)) in pl.iter().zip(&pr).enumerate() {
        let f = k as f64 * sr / WELCH_SIZE as f64;
        bands[bark_band(f)] += 0.5 * (a + b);
    }
    bands
        .iter()
        .map(|&e| 10.0 * e.max(POWER_FLOOR).log10())
        .collect()
}

fn rms_of(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt()
}

pub fn af_features(audio: &AudioBuffer) -> Result<AfVector, MetricError> {
    let rms = audio.rms();
    if rms == 0.0 {
        return Err(MetricError::Silent);
    }
    let (mid, side) = audio.mid_side();
    let el: f64 = audio.left().iter().map(|v| v * v).sum();
    let er: f64 = audio.right().iter().map(|v| v * v).sum();
    Ok(AfVector {
        rms: linear_to_db(rms),
        crest_factor_db: linear_to_db(audio.peak() / rms),
        stereo_width: rms_of(&side) / rms_of(&mid).max(WIDTH_FLOOR),
        stereo_imbalance: (er - el) / (er + el),
        bark_spectrum: bark_spectrum(audio),
    })
}

/// Mean of the five per-feature gaps, stereo features scaled by 10.
pub fn af_distance(a: &AfVector, b: &AfVector) -> f64 {
    let bark = a
        .bark_spectrum
        .iter()
        .zip(&b.bark_spectrum)
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        / a.bark_spectrum.len().max(1) as f64;
    let parts = [
        (a.rms - b.rms).abs(),
        (a.crest_factor_db - b.crest_factor_db).abs(),
        STEREO_WEIGHT * (a.stereo_width - b.stereo_width).abs(),
        STEREO_WEIGHT * (a.stereo_imbalance - b.stereo_imbalance).abs(),
        bark,
    ];
    parts.iter().sum::<f64>() / parts.len() as f64
}

pub fn cosine_sim(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::DimensionMismatch(a.len(), b.len()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(MetricError::ZeroNorm);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Wasserstein-1 number token loss: for each row, the expected absolute gap
/// between the row's true value and the value of each token under the
/// predicted distribution, averaged over rows.
pub fn ntl_was(
    prob_rows: &[Vec<f64>],
    token_values: &[f64],
    truths: &[f64],
) -> Result<f64, MetricError> {
    if prob_rows.is_empty() {
        return Err(MetricError::Ntl("no rows".into()));
    }
    if truths.len() != prob_rows.len() {
        return Err(MetricError::Ntl(format!(
            "{} rows but {} truth values",
            prob_rows.len(),
            truths.len()
        )));
    }
    let mut total = 0.0;
    for (i, (row, &truth)) in prob_rows.iter().zip(truths).enumerate() {
        if row.len() != token_values.len() {
            return Err(MetricError::Ntl(format!(
                "row {i} has {} probabilities for {} tokens",
                row.len(),
                token_values.len()
            )));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > NTL_ROW_TOLERANCE || row.iter().any(|&p| !(p >= 0.0)) {
            return Err(MetricError::Ntl(format!(
                "row {i} is not a distribution (sum {sum})"
            )));
        }
        total += compensated_sum(
            row.iter()
                .zip(token_values)
                .map(|(p, v)| p * (truth - v).abs()),
        );
    }
    Ok(total / prob_rows.len() as f64)
}

/// Neumaier summation, so decimal probabilities like 0.1 do not leave
/// rounding residue in otherwise exact results.
fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() {
            (sum - t) + v
        } else {
            (v - t) + sum
        };
        sum = t;
    }
    sum + comp
}
