//! Spectrogram PNGs for eyeballing a prediction against its reference.

use std::path::Path;

use anyhow::{Context, Result};
use fxchain_core::corpus::{load_pair, PairRecord};
use fxchain_core::metrics::{render_prediction, stft_magnitude};
use fxchain_core::{AudioBuffer, FxChain, FxRegistry};
use image::{Rgb, RgbImage};

const FFT: usize = 1024;
const HOP: usize = 256;
const RANGE_DB: f64 = 80.0;

/// Dark to bright: black, purple, orange, pale yellow.
const STOPS: [[f64; 3]; 4] = [
    [0.0, 0.0, 4.0],
    [120.0, 28.0, 109.0],
    [237.0, 105.0, 37.0],
    [252.0, 255.0, 164.0],
];

fn color(t: f64) -> Rgb<u8> {
    let t = t.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let i = (t.floor() as usize).min(STOPS.len() - 2);
    let f = t - i as f64;
    let c = |k: usize| (STOPS[i][k] + f * (STOPS[i + 1][k] - STOPS[i][k])).round() as u8;
    Rgb([c(0), c(1), c(2)])
}

fn mid_spectrogram_db(audio: &AudioBuffer) -> Vec<Vec<f64>> {
    let (mid, _) = audio.mid_side();
    stft_magnitude(&mid, FFT, HOP)
        .into_iter()
        .map(|frame| {
            frame
                .into_iter()
                .map(|m| 20.0 * m.max(1e-7).log10())
                .collect()
        })
        .collect()
}

fn draw(spec: &[Vec<f64>], top_db: f64) -> RgbImage {
    let bins = FFT / 2 + 1;
    let mut img = RgbImage::new(spec.len().max(1) as u32, bins as u32);
    for (x, frame) in spec.iter().enumerate() {
        for (k, &v) in frame.iter().enumerate() {
            let t = (v - (top_db - RANGE_DB)) / RANGE_DB;
            // low frequencies at the bottom
            img.put_pixel(x as u32, (bins - 1 - k) as u32, color(t));
        }
    }
    img
}

/// Writes `<id>_dry.png`, `<id>_ref.png` and `<id>_pred.png` on a shared
/// dB scale.
pub fn plot_record(
    record: &PairRecord,
    pred: &FxChain,
    manifest_dir: &Path,
    out_dir: &Path,
    registry: &FxRegistry,
) -> Result<()> {
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let (dry, reference) = load_pair(record, manifest_dir)?;
    let rendered = render_prediction(pred, &dry, registry, &record.id)?;
    let specs = [
        ("dry", mid_spectrogram_db(&dry)),
        ("ref", mid_spectrogram_db(&reference)),
        ("pred", mid_spectrogram_db(&rendered)),
    ];
    let top = specs
        .iter()
        .flat_map(|(_, s)| s.iter().flatten().copied())
        .fold(f64::NEG_INFINITY, f64::max);
    for (name, spec) in &specs {
        let path = out_dir.join(format!("{}_{name}.png", record.id));
        draw(spec, top)
            .save(&path)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
