//! Audio-cookbook second-order sections.

use std::f64::consts::PI;

use super::DspError;

/// Q values below this are lifted; a Q of zero is a degenerate filter.
pub const MIN_Q: f64 = 0.1;
/// Cutoffs below this are lifted so that 0 Hz grid points stay renderable.
pub const MIN_CUTOFF_HZ: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    LowShelf,
    Peaking,
    HighShelf,
}

/// Normalized coefficients: `a0` is folded into the others.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiquadCoeffs {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
}

impl BiquadCoeffs {
    pub const IDENTITY: Self = Self {
        b0: 1.0,
        b1: 0.0,
        b2: 0.0,
        a0: 1.0,
        a1: 0.0,
        a2: 0.0,
    };

    /// Complex response at normalized angular frequency `w` (rad/sample),
    /// returned as (re, im).
    pub fn response(&self, w: f64) -> (f64, f64) {
        let (c1, s1) = (w.cos(), -w.sin());
        let (c2, s2) = ((2.0 * w).cos(), -(2.0 * w).sin());
        let num = (
            self.b0 + self.b1 * c1 + self.b2 * c2,
            self.b1 * s1 + self.b2 * s2,
        );
        let den = (
            self.a0 + self.a1 * c1 + self.a2 * c2,
            self.a1 * s1 + self.a2 * s2,
        );
        let d = den.0 * den.0 + den.1 * den.1;
        (
            (num.0 * den.0 + num.1 * den.1) / d,
            (num.1 * den.0 - num.0 * den.1) / d,
        )
    }

    pub fn magnitude(&self, freq_hz: f64, sample_rate: f64) -> f64 {
        let (re, im) = self.response(2.0 * PI * freq_hz / sample_rate);
        re.hypot(im)
    }
}

pub fn biquad_coeffs(
    kind: FilterKind,
    gain_db: f64,
    cutoff_hz: f64,
    q: f64,
    sample_rate: f64,
) -> Result<BiquadCoeffs, DspError> {
    let nyquist = sample_rate / 2.0;
    if !(cutoff_hz > 0.0 && cutoff_hz < nyquist) {
        return Err(DspError::BadCutoff { cutoff_hz, nyquist });
    }
    let q = q.max(MIN_Q);
    let a = 10f64.powf(gain_db / 40.0);
    let w0 = 2.0 * PI * cutoff_hz / sample_rate;
    let (sin, cos) = w0.sin_cos();
    let alpha = sin / (2.0 * q);
    let sqrt_a2 = 2.0 * a.sqrt() * alpha;

    let (b0, b1, b2, a0, a1, a2) = match kind {
        FilterKind::Peaking => (
            1.0 + alpha * a,
            -2.0 * cos,
            1.0 - alpha * a,
            1.0 + alpha / a,
            -2.0 * cos,
            1.0 - alpha / a,
        ),
        FilterKind::LowShelf => (
            a * ((a + 1.0) - (a - 1.0) * cos + sqrt_a2),
            2.0 * a * ((a - 1.0) - (a + 1.0) * cos),
            a * ((a + 1.0) - (a - 1.0) * cos - sqrt_a2),
            (a + 1.0) + (a - 1.0) * cos + sqrt_a2,
            -2.0 * ((a - 1.0) + (a + 1.0) * cos),
            (a + 1.0) + (a - 1.0) * cos - sqrt_a2,
        ),
        FilterKind::HighShelf => (
            a * ((a + 1.0) + (a - 1.0) * cos + sqrt_a2),
            -2.0 * a * ((a - 1.0) + (a + 1.0) * cos),
            a * ((a + 1.0) + (a - 1.0) * cos - sqrt_a2),
            (a + 1.0) - (a - 1.0) * cos + sqrt_a2,
            2.0 * ((a - 1.0) - (a + 1.0) * cos),
            (a + 1.0) - (a - 1.0) * cos - sqrt_a2,
        ),
    };
    Ok(BiquadCoeffs {
        b0: b0 / a0,
        b1: b1 / a0,
        b2: b2 / a0,
        a0: 1.0,
        a1: a1 / a0,
        a2: a2 / a0,
    })
}

/// Direct form I filter state for one channel.
#[derive(Debug, Clone, Default)]
pub struct Biquad {
    x1: f64,
    x2: f64,
    y1: f64,
    y2: f64,
}

impl Biquad {
    pub fn process(&mut self, c: &BiquadCoeffs, samples: &mut [f64]) {
        for s in samples.iter_mut() {
            let x = *s;
            let y = c.b0 * x + c.b1 * self.x1 + c.b2 * self.x2 - c.a1 * self.y1 - c.a2 * self.y2;
            self.x2 = self.x1;
            self.x1 = x;
            self.y2 = self.y1;
            self.y1 = y;
            *s = y;
        }
    }
}
