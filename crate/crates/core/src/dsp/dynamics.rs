//! Envelope follower, compressor and limiter.
//!
//! Both processors are feed-forward, hard-knee and work in the log domain.
//! The detector takes the instantaneous peak of the louder channel, so gain
//! reduction is linked across the stereo pair.

use crate::audio::AudioBuffer;

/// Detector floor in dBFS.
pub const LEVEL_FLOOR_DB: f64 = -120.0;
/// Fixed attack of the limiter.
pub const LIMITER_ATTACK_MS: f64 = 1.0;

/// One-pole coefficient for a time constant in milliseconds. Zero means
/// instantaneous.
pub fn smoothing_coeff(time_ms: f64, sample_rate: f64) -> f64 {
    let tau_samples = time_ms * sample_rate / 1000.0;
    if tau_samples <= 0.0 {
        0.0
    } else {
        (-1.0 / tau_samples).exp()
    }
}

/// Attack/release one-pole smoother. The attack coefficient applies while
/// the input is above the current state, the release coefficient otherwise.
/// The state starts at the first input value.
pub fn envelope_follower(
    level: &[f64],
    attack_ms: f64,
    release_ms: f64,
    sample_rate: f64,
) -> Vec<f64> {
    let attack = smoothing_coeff(attack_ms, sample_rate);
    let release = smoothing_coeff(release_ms, sample_rate);
    let mut state = level.first().copied().unwrap_or(0.0);
    level
        .iter()
        .map(|&x| {
            let a = if x > state { attack } else { release };
            state = a * state + (1.0 - a) * x;
            state
        })
        .collect()
}

fn linked_level_db(input: &AudioBuffer) -> Vec<f64> {
    input
        .left()
        .iter()
        .zip(input.right())
        .map(|(l, r)| {
            let peak = l.abs().max(r.abs());
            if peak > 0.0 {
                (20.0 * peak.log10()).max(LEVEL_FLOOR_DB)
            } else {
                LEVEL_FLOOR_DB
            }
        })
        .collect()
}

fn apply_gain_db(input: &AudioBuffer, gain_db: &[f64], ceiling: Option<f64>) -> AudioBuffer {
    let gains: Vec<f64> = gain_db.iter().map(|g| 10f64.powf(g / 20.0)).collect();
    let mut out = input.clone();
    for ch in out.channels_mut() {
        for (s, g) in ch.iter_mut().zip(&gains) {
            *s *= g;
            if let Some(c) = ceiling {
                *s = s.clamp(-c, c);
            }
        }
    }
    out
}

pub fn compressor(
    input: &AudioBuffer,
    threshold_db: f64,
    ratio: f64,
    attack_ms: f64,
    release_ms: f64,
) -> AudioBuffer {
    // ratios below 1 (including the 0.0 grid point) degrade to unity
    let ratio = ratio.max(1.0);
    if ratio == 1.0 {
        return input.clone();
    }
    let slope = 1.0 - 1.0 / ratio;
    let sr = input.sample_rate() as f64;
    let env = envelope_follower(&linked_level_db(input), attack_ms, release_ms, sr);
    let gain: Vec<f64> = env
        .iter()
        .map(|level| ((threshold_db - level) * slope).min(0.0))
        .collect();
    apply_gain_db(input, &gain, None)
}

/// Infinite-ratio compressor with a 1 ms attack. Without lookahead the
/// smoothed detector lets transients through, so the output is clipped at
/// the ceiling as a final brickwall stage.
pub fn limiter(input: &AudioBuffer, threshold_db: f64, release_ms: f64) -> AudioBuffer {
    let sr = input.sample_rate() as f64;
    let env = envelope_follower(&linked_level_db(input), LIMITER_ATTACK_MS, release_ms, sr);
    let gain: Vec<f64> = env
        .iter()
        .map(|level| (threshold_db - level).min(0.0))
        .collect();
    apply_gain_db(input, &gain, Some(10f64.powf(threshold_db / 20.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::sine;

    #[test]
    fn constant_is_fixed_point() {
        let out = envelope_follower(&[-12.0; 64], 10.0, 50.0, 44_100.0);
        assert!(out.iter().all(|&v| v == -12.0));
    }

    #[test]
    fn step_response_reaches_one_minus_inv_e() {
        // tau = 100 samples at 1 kHz needs 100 ms
        let mut x = vec![0.0; 10];
        x.extend(vec![1.0; 300]);
        let out = envelope_follower(&x, 100.0, 100.0, 1000.0);
        // 100 samples after the step
        let v = out[10 + 99];
        assert!((v - (1.0 - (-1.0f64).exp())).abs() < 1e-2, "{v}");
    }

    #[test]
    fn zero_attack_tracks_rises() {
        let x = [0.0, 0.5, 0.2, 0.9, 1.0];
        let out = envelope_follower(&x, 0.0, 30.0, 44_100.0);
        assert_eq!(out[1], 0.5);
        assert_eq!(out[3], 0.9);
        assert_eq!(out[4], 1.0);
        assert!(out[2] > 0.2 && out[2] < 0.5);
    }

    #[test]
    fn ratio_below_one_is_identity() {
        let x = sine(220.0, 0.9, 0.1, 44_100);
        assert_eq!(compressor(&x, -30.0, 0.0, 5.0, 50.0), x);
        assert_eq!(compressor(&x, -30.0, 1.0, 5.0, 50.0), x);
    }

    #[test]
    fn compressor_reduces_loud_sine() {
        let x = sine(220.0, 1.0, 0.5, 44_100);
        let y = compressor(&x, -20.0, 4.0, 1.0, 200.0);
        // 0 dB peak, -20 dB threshold, 4:1 -> about -15 dB of reduction at peaks
        let tail_peak = y.left()[11_025..]
            .iter()
            .fold(0.0f64, |a, v| a.max(v.abs()));
        let db = 20.0 * tail_peak.log10();
        assert!(db < -10.0 && db > -20.0, "{db}");
    }

    #[test]
    fn compressor_leaves_quiet_signal() {
        let x = sine(220.0, 0.01, 0.2, 44_100);
        let y = compressor(&x, -20.0, 8.0, 5.0, 100.0);
        assert!(y.max_abs_diff(&x) < 1e-15);
    }

    #[test]
    fn limiter_holds_ceiling() {
        for release in [0.0, 50.0, 1000.0] {
            let x = sine(1000.0, 0.95, 1.0, 44_100);
            let y = limiter(&x, -6.0, release);
            let ceiling = 10f64.powf(-6.0 / 20.0);
            let tail_peak = y.left()[22_050..]
                .iter()
                .fold(0.0f64, |a, v| a.max(v.abs()));
            assert!(
                (tail_peak - ceiling).abs() <= 1e-3,
                "release {release}: {tail_peak}"
            );
        }
    }
}
