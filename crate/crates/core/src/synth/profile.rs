use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::derive_seed;
use crate::error::{Error, Result};

/// Lowest and highest formant centre the front-end band can see.
pub const FORMANT_MIN_HZ: f64 = 125.0;
pub const FORMANT_MAX_HZ: f64 = 3800.0;

/// Per-speaker laughter idiosyncrasies. These are the part of a speaker's
/// identity that neutral speech does not reveal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaughterStyle {
    /// Laugh pitch relative to `pitch_base`.
    pub pitch_factor: f64,
    /// Burst ("ha") repetition rate in Hz.
    pub burst_rate_hz: f64,
    /// Noise-to-voicing ratio of the excitation.
    pub breathiness: f64,
    /// Multiplier on formant bandwidths.
    pub bandwidth_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerProfile {
    pub speaker_id: String,
    /// F1 < F2 < F3 in Hz.
    pub base_formants: [f64; 3],
    pub formant_bandwidths: [f64; 3],
    pub pitch_base: f64,
    pub jitter_seed: u64,
    pub laughter: LaughterStyle,
}

/// Ranges (inclusive lower, exclusive upper) that speaker profiles are
/// drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpeakerPopulation {
    pub f1_hz: [f64; 2],
    pub f2_hz: [f64; 2],
    pub f3_hz: [f64; 2],
    pub b1_hz: [f64; 2],
    pub b2_hz: [f64; 2],
    pub b3_hz: [f64; 2],
    pub low_pitch_hz: [f64; 2],
    pub high_pitch_hz: [f64; 2],
    pub laugh_pitch_factor: [f64; 2],
    pub laugh_burst_rate_hz: [f64; 2],
    pub laugh_breathiness: [f64; 2],
    pub laugh_bandwidth_factor: [f64; 2],
}

impl Default for SpeakerPopulation {
    fn default() -> Self {
        Self {
            f1_hz: [350.0, 750.0],
            f2_hz: [1100.0, 1900.0],
            f3_hz: [2300.0, 2900.0],
            b1_hz: [60.0, 110.0],
            b2_hz: [80.0, 150.0],
            b3_hz: [120.0, 220.0],
            low_pitch_hz: [90.0, 150.0],
            high_pitch_hz: [170.0, 250.0],
            laugh_pitch_factor: [1.2, 2.2],
            laugh_burst_rate_hz: [3.0, 8.0],
            laugh_breathiness: [0.1, 1.0],
            laugh_bandwidth_factor: [0.8, 2.4],
        }
    }
}

impl SpeakerPopulation {
    /// `max_scale` is the largest formant multiplier any content type uses.
    pub fn validate(&self, max_scale: f64) -> Result<()> {
        let ranges = [
            ("f1_hz", self.f1_hz),
            ("f2_hz", self.f2_hz),
            ("f3_hz", self.f3_hz),
            ("b1_hz", self.b1_hz),
            ("b2_hz", self.b2_hz),
            ("b3_hz", self.b3_hz),
            ("low_pitch_hz", self.low_pitch_hz),
            ("high_pitch_hz", self.high_pitch_hz),
            ("laugh_pitch_factor", self.laugh_pitch_factor),
            ("laugh_burst_rate_hz", self.laugh_burst_rate_hz),
            ("laugh_breathiness", self.laugh_breathiness),
            ("laugh_bandwidth_factor", self.laugh_bandwidth_factor),
        ];
        for (name, [lo, hi]) in ranges {
            let may_be_zero = name == "laugh_breathiness";
            if !(lo <= hi && hi.is_finite() && (lo > 0.0 || (may_be_zero && lo >= 0.0))) {
                return Err(Error::Config(format!(
                    "population.{name}: need 0 < lo <= hi, got [{lo}, {hi}]"
                )));
            }
        }
        if self.f1_hz[0] < FORMANT_MIN_HZ || self.f1_hz[1] > self.f2_hz[0] || self.f2_hz[1] > self.f3_hz[0] {
            return Err(Error::Config(
                "population formant ranges must be ordered and inside the band".into(),
            ));
        }
        if self.f3_hz[1] * max_scale.max(1.0) >= FORMANT_MAX_HZ {
            return Err(Error::Config(format!(
                "population F3 range scaled by {max_scale} leaves the {FORMANT_MAX_HZ} Hz band"
            )));
        }
        Ok(())
    }
}

fn draw(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

impl SpeakerProfile {
    /// Draws a speaker from the default population.
    pub fn random(speaker_id: &str, seed: u64, low_pitched: bool) -> Self {
        Self::sample(speaker_id, seed, low_pitched, &SpeakerPopulation::default())
    }

    /// Draws a speaker from `population`. `low_pitched` selects the lower of
    /// the two pitch ranges.
    pub fn sample(speaker_id: &str, seed: u64, low_pitched: bool, population: &SpeakerPopulation) -> Self {
        let p = population;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, speaker_id));
        let base_formants = [
            draw(&mut rng, p.f1_hz),
            draw(&mut rng, p.f2_hz),
            draw(&mut rng, p.f3_hz),
        ];
        let formant_bandwidths = [
            draw(&mut rng, p.b1_hz),
            draw(&mut rng, p.b2_hz),
            draw(&mut rng, p.b3_hz),
        ];
        let pitch_base = draw(&mut rng, if low_pitched { p.low_pitch_hz } else { p.high_pitch_hz });
        let jitter_seed = rng.gen();
        let laughter = LaughterStyle {
            pitch_factor: draw(&mut rng, p.laugh_pitch_factor),
            burst_rate_hz: draw(&mut rng, p.laugh_burst_rate_hz),
            breathiness: draw(&mut rng, p.laugh_breathiness),
            bandwidth_factor: draw(&mut rng, p.laugh_bandwidth_factor),
        };
        Self {
            speaker_id: speaker_id.to_string(),
            base_formants,
            formant_bandwidths,
            pitch_base,
            jitter_seed,
            laughter,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let f = &self.base_formants;
        if f.iter().any(|&x| !(FORMANT_MIN_HZ..FORMANT_MAX_HZ).contains(&x)) {
            return Err(Error::InvalidInput(format!(
                "{}: formants {f:?} outside [{FORMANT_MIN_HZ}, {FORMANT_MAX_HZ}) Hz",
                self.speaker_id
            )));
        }
        if !(f[0] < f[1] && f[1] < f[2]) {
            return Err(Error::InvalidInput(format!(
                "{}: formants {f:?} not strictly increasing",
                self.speaker_id
            )));
        }
        if self.formant_bandwidths.iter().any(|&b| !(b > 0.0)) || !(self.pitch_base > 0.0) {
            return Err(Error::InvalidInput(format!(
                "{}: bandwidths and pitch must be positive",
                self.speaker_id
            )));
        }
        Ok(())
    }
}
