//! The effect renderer: nine deterministic stereo processors and the chain
//! composition that applies them in list order.
//!
//! All processing runs in `f64`. Processor state (filter memories, delay
//! lines) lives inside each render call, so rendering is safe to run
//! concurrently on different inputs.

pub mod biquad;
pub mod dynamics;
pub mod reverb;

use std::f64::consts::FRAC_PI_4;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::AudioBuffer;
use crate::chain::{validate_chain, FxCall, FxChain, Policy, ValidationReport};
use crate::registry::FxRegistry;

pub use biquad::{biquad_coeffs, BiquadCoeffs, FilterKind};
pub use dynamics::envelope_follower;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("unknown tool `{0}`")]
    UnknownTool(String),
    #[error("{tool}: missing argument `{param}`")]
    MissingArgument { tool: String, param: String },
    #[error("invalid chain:\n{0}")]
    InvalidChain(ValidationReport),
    #[error("effect {index} ({tool}) produced non-finite samples")]
    NonFinite { index: usize, tool: String },
    #[error("cutoff {cutoff_hz} Hz must lie in (0, {nyquist}) Hz")]
    BadCutoff { cutoff_hz: f64, nyquist: f64 },
}

/// Level and timing measurements for one effect of a rendered chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub tool: String,
    pub input_peak: f64,
    pub input_rms: f64,
    pub output_peak: f64,
    pub output_rms: f64,
    #[serde(with = "micros")]
    pub elapsed: Duration,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RenderTrace {
    pub entries: Vec<TraceEntry>,
}

mod micros {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_micros() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_micros(u64::deserialize(d)?))
    }
}

fn arg(call: &FxCall, name: &str) -> Result<f64, DspError> {
    call.arg(name).ok_or_else(|| DspError::MissingArgument {
        tool: call.tool.clone(),
        param: name.to_string(),
    })
}

/// Renders a single effect. The call is expected to have passed validation;
/// only missing arguments and unknown tools are rejected here.
pub fn render_effect(
    call: &FxCall,
    input: &AudioBuffer,
    registry: &FxRegistry,
) -> Result<AudioBuffer, DspError> {
    if registry.module(&call.tool).is_none() {
        return Err(DspError::UnknownTool(call.tool.clone()));
    }
    let a = |name| arg(call, name);
    Ok(match call.tool.as_str() {
        "three_band_equalizer" => equalizer(
            input,
            [
                (
                    FilterKind::LowShelf,
                    a("low_gain_db")?,
                    a("low_cutoff_freq")?,
                    a("low_q_factor")?,
                ),
                (
                    FilterKind::Peaking,
                    a("mid_gain_db")?,
                    a("mid_cutoff_freq")?,
                    a("mid_q_factor")?,
                ),
                (
                    FilterKind::HighShelf,
                    a("high_gain_db")?,
                    a("high_cutoff_freq")?,
                    a("high_q_factor")?,
                ),
            ],
        )?,
        "compressor" => dynamics::compressor(
            input,
            a("threshold_db")?,
            a("ratio")?,
            a("attack_ms")?,
            a("release_ms")?,
        ),
        "stereo_widener" => stereo_widener(input, a("width")?),
        "gain" => gain(input, a("gain_db")?),
        "panner" => panner(input, a("pan")?),
        "distortion" => distortion(input, a("drive_db")?),
        "reverb" => reverb(
            input,
            a("room_size")?,
            a("damping")?,
            a("width")?,
            a("mix_ratio")?,
        ),
        "delay" => delay(input, a("delay_seconds")?, a("feedback")?, a("mix_ratio")?),
        "limiter" => dynamics::limiter(input, a("threshold_db")?, a("release_ms")?),
        other => return Err(DspError::UnknownTool(other.to_string())),
    })
}

/// Applies every call of a strict-valid chain in order, each consuming the
/// previous output. Output length always equals input length.
pub fn render_chain(
    chain: &FxChain,
    input: &AudioBuffer,
    registry: &FxRegistry,
) -> Result<(AudioBuffer, RenderTrace), DspError> {
    let report = validate_chain(chain, registry, Policy::Strict);
    if !report.is_valid() {
        return Err(DspError::InvalidChain(report));
    }
    let mut trace = RenderTrace::default();
    let mut current = input.clone();
    for (index, call) in chain.calls.iter().enumerate() {
        let start = Instant::now();
        let out = render_effect(call, &current, registry)?;
        let elapsed = start.elapsed();
        if !out.is_finite() {
            return Err(DspError::NonFinite {
                index,
                tool: call.tool.clone(),
            });
        }
        trace.entries.push(TraceEntry {
            tool: call.tool.clone(),
            input_peak: current.peak(),
            input_rms: current.rms(),
            output_peak: out.peak(),
            output_rms: out.rms(),
            elapsed,
        });
        current = out;
    }
    Ok((current, trace))
}

pub fn gain(input: &AudioBuffer, gain_db: f64) -> AudioBuffer {
    let g = 10f64.powf(gain_db / 20.0);
    input.map(|x| g * x)
}

pub fn distortion(input: &AudioBuffer, drive_db: f64) -> AudioBuffer {
    let drive = 10f64.powf(drive_db / 20.0);
    input.map(|x| (drive * x).tanh())
}

/// Constant-power balance, normalized to unity at center. No cross-channel
/// mixing: each channel only gets a gain.
pub fn panner(input: &AudioBuffer, pan: f64) -> AudioBuffer {
    let theta = (pan + 1.0) * FRAC_PI_4;
    // hard pans silence the far channel exactly; cos(pi/2) is ~6e-17
    let gl = if pan >= 1.0 {
        0.0
    } else {
        theta.cos() / FRAC_PI_4.cos()
    };
    let gr = if pan <= -1.0 {
        0.0
    } else {
        theta.sin() / FRAC_PI_4.sin()
    };
    let left = input.left().iter().map(|x| gl * x).collect();
    let right = input.right().iter().map(|x| gr * x).collect();
    AudioBuffer::new(input.sample_rate(), left, right).expect("same length")
}

pub fn stereo_widener(input: &AudioBuffer, width: f64) -> AudioBuffer {
    let (left, right) = input
        .left()
        .iter()
        .zip(input.right())
        .map(|(l, r)| {
            let m = (l + r) * 0.5;
            let s = (l - r) * 0.5;
            (m + width * s, m - width * s)
        })
        .unzip();
    AudioBuffer::new(input.sample_rate(), left, right).expect("same length")
}

type Band = (FilterKind, f64, f64, f64);

fn equalizer(input: &AudioBuffer, bands: [Band; 3]) -> Result<AudioBuffer, DspError> {
    let sr = input.sample_rate() as f64;
    let mut out = input.clone();
    for (kind, gain_db, cutoff, q) in bands {
        // a 0 dB cookbook section has a flat unity response
        if gain_db == 0.0 {
            continue;
        }
        let cutoff = cutoff.max(biquad::MIN_CUTOFF_HZ);
        let coeffs = biquad_coeffs(kind, gain_db, cutoff, q, sr)?;
        for ch in out.channels_mut() {
            biquad::Biquad::default().process(&coeffs, ch);
        }
    }
    Ok(out)
}

fn mix(dry: &[f64], wet: &[f64], mix_ratio: f64) -> Vec<f64> {
    dry.iter()
        .zip(wet)
        .map(|(d, w)| (1.0 - mix_ratio) * d + mix_ratio * w)
        .collect()
}

pub fn reverb(
    input: &AudioBuffer,
    room_size: f64,
    damping: f64,
    width: f64,
    mix_ratio: f64,
) -> AudioBuffer {
    let sr = input.sample_rate() as f64;
    let (wet_l, wet_r) =
        reverb::freeverb_wet(input.left(), input.right(), sr, room_size, damping, width);
    AudioBuffer::new(
        input.sample_rate(),
        mix(input.left(), &wet_l, mix_ratio),
        mix(input.right(), &wet_r, mix_ratio),
    )
    .expect("same length")
}

/// Single feedback tap per channel: `wet[n] = x[n-D] + feedback * wet[n-D]`.
/// A zero delay makes the wet path equal to the dry path.
pub fn delay(
    input: &AudioBuffer,
    delay_seconds: f64,
    feedback: f64,
    mix_ratio: f64,
) -> AudioBuffer {
    let d = (delay_seconds * input.sample_rate() as f64).round() as usize;
    let tap = |x: &[f64]| -> Vec<f64> {
        if d == 0 {
            return x.to_vec();
        }
        let mut wet = vec![0.0; x.len()];
        for n in d..x.len() {
            wet[n] = x[n - d] + feedback * wet[n - d];
        }
        wet
    };
    let wet_l = tap(input.left());
    let wet_r = tap(input.right());
    AudioBuffer::new(
        input.sample_rate(),
        mix(input.left(), &wet_l, mix_ratio),
        mix(input.right(), &wet_r, mix_ratio),
    )
    .expect("same length")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::registry_default;
    use crate::signals::{pink_noise, synth_test_signal, SignalKind};

    fn noise() -> AudioBuffer {
        pink_noise(0.25, 44_100, 11)
    }

    fn render(call: FxCall, x: &AudioBuffer) -> AudioBuffer {
        render_effect(&call, x, &registry_default()).unwrap()
    }

    #[test]
    fn empty_chain_is_bit_identical() {
        let x = noise();
        let (y, trace) = render_chain(&FxChain::empty(), &x, &registry_default()).unwrap();
        assert_eq!(y, x);
        assert!(trace.entries.is_empty());
    }

    #[test]
    fn neutral_parameters_are_identity() {
        let x = noise();
        let cases = [
            FxCall::new("gain", [("gain_db", 0.0)]),
            FxCall::new("panner", [("pan", 0.0)]),
            FxCall::new("stereo_widener", [("width", 1.0)]),
            FxCall::new(
                "three_band_equalizer",
                [
                    ("low_gain_db", 0.0),
                    ("low_cutoff_freq", 100.0),
                    ("low_q_factor", 1.0),
                    ("mid_gain_db", 0.0),
                    ("mid_cutoff_freq", 1000.0),
                    ("mid_q_factor", 1.0),
                    ("high_gain_db", 0.0),
                    ("high_cutoff_freq", 8000.0),
                    ("high_q_factor", 1.0),
                ],
            ),
            FxCall::new(
                "reverb",
                [
                    ("room_size", 0.9),
                    ("damping", 0.2),
                    ("width", 0.9),
                    ("mix_ratio", 0.0),
                ],
            ),
            FxCall::new(
                "delay",
                [
                    ("delay_seconds", 0.3),
                    ("feedback", 0.6),
                    ("mix_ratio", 0.0),
                ],
            ),
        ];
        for call in cases {
            let tool = call.tool.clone();
            let y = render(call, &x);
            assert!(y.max_abs_diff(&x) <= 1e-6, "{tool}");
        }
    }

    #[test]
    fn six_db_gain_on_impulse() {
        let x = synth_test_signal(SignalKind::Impulse, 0.01, 44_100);
        let y = render(FxCall::new("gain", [("gain_db", 6.0)]), &x);
        assert!((y.peak() - 1.9953).abs() < 1e-4);
    }

    #[test]
    fn widener_zero_is_mono() {
        let y = render(FxCall::new("stereo_widener", [("width", 0.0)]), &noise());
        assert_eq!(y.left(), y.right());
    }

    #[test]
    fn hard_left_pan_silences_right() {
        let y = render(FxCall::new("panner", [("pan", -1.0)]), &noise());
        assert!(y.right().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hard_right_pan_silences_left() {
        let y = render(FxCall::new("panner", [("pan", 1.0)]), &noise());
        assert!(y.left().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn distortion_is_bounded() {
        let y = render(
            FxCall::new("distortion", [("drive_db", 20.0)]),
            &noise().map(|x| x * 10.0),
        );
        assert!(y.peak() <= 1.0);
    }

    #[test]
    fn delay_places_echo() {
        let x = synth_test_signal(SignalKind::Impulse, 0.5, 44_100);
        let y = render(
            FxCall::new(
                "delay",
                [
                    ("delay_seconds", 0.1),
                    ("feedback", 0.5),
                    ("mix_ratio", 0.5),
                ],
            ),
            &x,
        );
        assert_eq!(y.len(), x.len());
        assert_eq!(y.left()[0], 0.5);
        assert_eq!(y.left()[4410], 0.5);
        assert_eq!(y.left()[8820], 0.25);
        // zero delay: wet equals dry
        let z = render(
            FxCall::new(
                "delay",
                [
                    ("delay_seconds", 0.0),
                    ("feedback", 0.5),
                    ("mix_ratio", 0.7),
                ],
            ),
            &x,
        );
        assert!(z.max_abs_diff(&x) < 1e-15);
    }

    #[test]
    fn reverb_tail_is_truncated() {
        let x = noise();
        let y = render(
            FxCall::new(
                "reverb",
                [
                    ("room_size", 0.9),
                    ("damping", 0.0),
                    ("width", 0.9),
                    ("mix_ratio", 1.0),
                ],
            ),
            &x,
        );
        assert_eq!(y.len(), x.len());
        assert!(y.is_finite());
    }

    #[test]
    fn chain_equals_nested_effects() {
        let reg = registry_default();
        let a = FxCall::new("distortion", [("drive_db", 6.0)]);
        let b = FxCall::new(
            "delay",
            [
                ("delay_seconds", 0.05),
                ("feedback", 0.3),
                ("mix_ratio", 0.4),
            ],
        );
        let x = noise();
        let (y, trace) = render_chain(&FxChain::new(vec![a.clone(), b.clone()]), &x, &reg).unwrap();
        let nested = render_effect(&b, &render_effect(&a, &x, &reg).unwrap(), &reg).unwrap();
        assert_eq!(y, nested);
        assert_eq!(trace.entries.len(), 2);
        assert_eq!(trace.entries[0].tool, "distortion");
        assert_eq!(trace.entries[1].input_peak, trace.entries[0].output_peak);
    }

    #[test]
    fn invalid_chain_rejected() {
        let chain = FxChain::new(vec![FxCall::new("flanger", [("rate", 1.0)])]);
        assert!(matches!(
            render_chain(&chain, &noise(), &registry_default()),
            Err(DspError::InvalidChain(_))
        ));
        assert!(matches!(
            render_effect(&chain.calls[0], &noise(), &registry_default()),
            Err(DspError::UnknownTool(_))
        ));
    }

    #[test]
    fn zero_hz_low_cutoff_renders() {
        let call = FxCall::new(
            "three_band_equalizer",
            [
                ("low_gain_db", 12.0),
                ("low_cutoff_freq", 0.0),
                ("low_q_factor", 0.0),
                ("mid_gain_db", -4.0),
                ("mid_cutoff_freq", 6000.0),
                ("mid_q_factor", 0.1),
                ("high_gain_db", 20.0),
                ("high_cutoff_freq", 20_000.0),
                ("high_q_factor", 0.0),
            ],
        );
        assert!(render(call, &noise()).is_finite());
    }

    #[test]
    fn renders_are_deterministic() {
        let reg = registry_default();
        let chain = FxChain::new(vec![
            FxCall::new(
                "compressor",
                [
                    ("threshold_db", -30.0),
                    ("ratio", 6.0),
                    ("attack_ms", 5.0),
                    ("release_ms", 100.0),
                ],
            ),
            FxCall::new(
                "reverb",
                [
                    ("room_size", 0.6),
                    ("damping", 0.4),
                    ("width", 0.7),
                    ("mix_ratio", 0.5),
                ],
            ),
        ]);
        let x = noise();
        let a = render_chain(&chain, &x, &reg).unwrap().0;
        let b = render_chain(&chain, &x, &reg).unwrap().0;
        assert_eq!(a, b);
    }
}
