//! Freeverb: eight parallel lowpass-feedback combs and four series
//! all-passes per channel, fed from a mono sum.

const COMB_TUNING: [usize; 8] = [1116, 1188, 1277, 1356, 1422, 1491, 1557, 1617];
const ALLPASS_TUNING: [usize; 4] = [556, 441, 341, 225];
const STEREO_SPREAD: usize = 23;
const TUNING_RATE: f64 = 44_100.0;

const FIXED_GAIN: f64 = 0.015;
const WET_SCALE: f64 = 3.0;
const ROOM_SCALE: f64 = 0.28;
const ROOM_OFFSET: f64 = 0.7;
const ALLPASS_FEEDBACK: f64 = 0.5;

fn scaled_len(len: usize, sample_rate: f64) -> usize {
    ((len as f64 * sample_rate / TUNING_RATE).round() as usize).max(1)
}

struct Comb {
    buffer: Vec<f64>,
    index: usize,
    store: f64,
}

impl Comb {
    fn new(len: usize) -> Self {
        Self {
            buffer: vec![0.0; len],
            index: 0,
            store: 0.0,
        }
    }

    #[inline]
    fn tick(&mut self, input: f64, feedback: f64, damp: f64) -> f64 {
        let out = self.buffer[self.index];
        self.store = out * (1.0 - damp) + self.store * damp;
        self.buffer[self.index] = input + self.store * feedback;
        self.index = (self.index + 1) % self.buffer.len();
        out
    }
}

struct Allpass {
    buffer: Vec<f64>,
    index: usize,
}

impl Allpass {
    fn new(len: usize) -> Self {
        Self {
            buffer: vec![0.0; len],
            index: 0,
        }
    }

    #[inline]
    fn tick(&mut self, input: f64) -> f64 {
        let delayed = self.buffer[self.index];
        self.buffer[self.index] = input + delayed * ALLPASS_FEEDBACK;
        self.index = (self.index + 1) % self.buffer.len();
        delayed - input
    }
}

struct Tank {
    combs: Vec<Comb>,
    allpasses: Vec<Allpass>,
}

impl Tank {
    fn new(sample_rate: f64, spread: usize) -> Self {
        Self {
            combs: COMB_TUNING
                .iter()
                .map(|&l| Comb::new(scaled_len(l + spread, sample_rate)))
                .collect(),
            allpasses: ALLPASS_TUNING
                .iter()
                .map(|&l| Allpass::new(scaled_len(l + spread, sample_rate)))
                .collect(),
        }
    }

    #[inline]
    fn tick(&mut self, input: f64, feedback: f64, damp: f64) -> f64 {
        let mut acc = 0.0;
        for c in &mut self.combs {
            acc += c.tick(input, feedback, damp);
        }
        for a in &mut self.allpasses {
            acc = a.tick(acc);
        }
        acc
    }
}

/// Returns the fully wet stereo signal.
pub fn freeverb_wet(
    left: &[f64],
    right: &[f64],
    sample_rate: f64,
    room_size: f64,
    damping: f64,
    width: f64,
) -> (Vec<f64>, Vec<f64>) {
    let feedback = ROOM_OFFSET + ROOM_SCALE * room_size;
    let damp = damping;
    let wet1 = width / 2.0 + 0.5;
    let wet2 = (1.0 - width) / 2.0;
    let mut tank_l = Tank::new(sample_rate, 0);
    let mut tank_r = Tank::new(sample_rate, STEREO_SPREAD);
    left.iter()
        .zip(right)
        .map(|(l, r)| {
            let input = (l + r) * FIXED_GAIN;
            let out_l = tank_l.tick(input, feedback, damp);
            let out_r = tank_r.tick(input, feedback, damp);
            (
                WET_SCALE * (out_l * wet1 + out_r * wet2),
                WET_SCALE * (out_r * wet1 + out_l * wet2),
            )
        })
        .unzip()
}
