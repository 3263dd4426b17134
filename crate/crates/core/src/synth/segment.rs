use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::labels::ContentLabel;
use super::profile::SpeakerProfile;
use crate::error::{Error, Result};

/// Peak level of every synthesized segment: -3 dBFS.
pub const PEAK_LEVEL: f64 = 0.707_945_784_384_137_9;

/// Relative amplitudes of the three parallel resonators.
const FORMANT_GAINS: [f64; 3] = [1.0, 0.5, 0.25];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub sample_rate: u32,
    /// Formant multiplier for laughter.
    pub laughter_scale: f64,
    /// Formant multiplier for speech-laugh.
    pub speech_laugh_scale: f64,
    /// Log-std of the per-syllable formant perturbation (vowel variety).
    pub formant_variation: f64,
    /// Relative std of the period-to-period pitch jitter.
    pub pitch_jitter: f64,
    /// Log-std of the per-syllable pitch level (intonation).
    pub intonation: f64,
    /// Noise-to-voicing ratio of neutral speech.
    pub breathiness: f64,
    /// Position of speech-laugh between the neutral (0) and laughter (1)
    /// phonation styles.
    pub speech_laugh_style: f64,
    /// Envelope floor between laughter bursts.
    pub laughter_burst_floor: f64,
    /// Envelope floor between speech-laugh bursts.
    pub speech_laugh_burst_floor: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            sample_rate: super::SAMPLE_RATE,
            laughter_scale: 1.3,
            speech_laugh_scale: 1.15,
            formant_variation: 0.05,
            pitch_jitter: 0.02,
            intonation: 0.08,
            breathiness: 0.1,
            speech_laugh_style: 0.95,
            laughter_burst_floor: 0.05,
            speech_laugh_burst_floor: 0.2,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        if self.sample_rate != super::SAMPLE_RATE {
            return Err(Error::Config(format!(
                "sample rate must be {} Hz, got {}",
                super::SAMPLE_RATE,
                self.sample_rate
            )));
        }
        if !(self.laughter_scale > 0.0 && self.speech_laugh_scale > 0.0) {
            return Err(Error::Config("formant scale factors must be positive".into()));
        }
        if [
            self.formant_variation,
            self.pitch_jitter,
            self.intonation,
            self.breathiness,
        ]
        .iter()
        .any(|v| !(*v >= 0.0))
        {
            return Err(Error::Config("variation parameters must be non-negative".into()));
        }
        if [
            self.speech_laugh_style,
            self.laughter_burst_floor,
            self.speech_laugh_burst_floor,
        ]
        .iter()
        .any(|v| !(0.0..=1.0).contains(v))
        {
            return Err(Error::Config("style blend and burst floors must be in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn formant_scale(&self, label: ContentLabel) -> f64 {
        match label {
            ContentLabel::Neutral => 1.0,
            ContentLabel::Laughter => self.laughter_scale,
            ContentLabel::SpeechLaugh => self.speech_laugh_scale,
        }
    }
}

/// Acoustic settings of one segment after mixing speaker and content.
struct Voice {
    formants: [f64; 3],
    bandwidths: [f64; 3],
    f0: f64,
    breathiness: f64,
    /// (rate in Hz, floor of the burst envelope)
    bursts: Option<(f64, f64)>,
}

fn voice_for(profile: &SpeakerProfile, label: ContentLabel, params: &SynthParams) -> Voice {
    let scale = params.formant_scale(label);
    let formants = profile.base_formants.map(|f| f * scale);
    let style = &profile.laughter;
    let blend = match label {
        ContentLabel::Neutral => 0.0,
        ContentLabel::SpeechLaugh => params.speech_laugh_style,
        ContentLabel::Laughter => 1.0,
    };
    let mix = |ns: f64, laugh: f64| ns + blend * (laugh - ns);
    let bw_factor = mix(1.0, style.bandwidth_factor);
    let bursts = match label {
        ContentLabel::Neutral => None,
        ContentLabel::SpeechLaugh => Some((style.burst_rate_hz, params.speech_laugh_burst_floor)),
        ContentLabel::Laughter => Some((style.burst_rate_hz, params.laughter_burst_floor)),
    };
    Voice {
        formants,
        bandwidths: profile.formant_bandwidths.map(|b| b * bw_factor),
        f0: profile.pitch_base * mix(1.0, style.pitch_factor),
        breathiness: mix(params.breathiness, style.breathiness),
        bursts,
    }
}

/// Two-pole resonator whose magnitude response peaks at its centre
/// frequency with unit gain there.
#[derive(Default, Clone, Copy)]
struct Resonator {
    b0: f64,
    a1: f64,
    a2: f64,
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn tune(&mut self, freq: f64, bandwidth: f64, fs: f64) {
        let r = (-PI * bandwidth / fs).exp();
        let omega = 2.0 * PI * freq / fs;
        // pole angle whose response maximum falls on omega
        let cos_theta = (2.0 * r / (1.0 + r * r) * omega.cos()).clamp(-1.0, 1.0);
        self.a1 = 2.0 * r * cos_theta;
        self.a2 = -r * r;
        // |1 - a1 e^{-jω} - a2 e^{-2jω}|
        let re = 1.0 - self.a1 * omega.cos() - self.a2 * (2.0 * omega).cos();
        let im = self.a1 * omega.sin() + self.a2 * (2.0 * omega).sin();
        self.b0 = (re * re + im * im).sqrt();
    }

    fn step(&mut self, x: f64) -> f64 {
        let y = self.b0 * x + self.a1 * self.y1 + self.a2 * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

/// Synthesizes `duration_s` seconds of one content type for one speaker.
///
/// Source: jittered impulse train at the content's pitch plus white noise.
/// Filter: three parallel resonators at the (scaled) formants, re-tuned per
/// syllable with antithetic formant perturbations so the long-term
/// resonance centres stay on the nominal values. Laughter and speech-laugh
/// are amplitude-modulated into bursts. Output is peak-normalised to -3 dBFS.
pub fn synth_segment(
    profile: &SpeakerProfile,
    label: ContentLabel,
    duration_s: f64,
    seed: u64,
    params: &SynthParams,
) -> Result<Vec<f64>> {
    params.validate()?;
    profile.validate()?;
    if !(duration_s > 0.0) || !duration_s.is_finite() {
        return Err(Error::InvalidInput(format!(
            "segment duration {duration_s} must be > 0"
        )));
    }
    let fs = params.sample_rate as f64;
    let n = (duration_s * fs).round() as usize;
    if n == 0 {
        return Err(Error::InvalidInput("segment shorter than one sample".into()));
    }
    let voice = voice_for(profile, label, params);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ profile.jitter_seed);

    // Syllable plan: (start sample, formant factors, pitch factor)
    let mut syllables: Vec<(usize, [f64; 3], f64)> = Vec::new();
    let mut pending: Option<[f64; 3]> = None;
    let mut pos = 0usize;
    while pos < n {
        let factors = match pending.take() {
            Some(d) => d.map(|x: f64| (-x).exp()),
            None => {
                let d: [f64; 3] =
                    std::array::from_fn(|_| params.formant_variation * rng.sample::<f64, _>(StandardNormal));
                pending = Some(d);
                d.map(f64::exp)
            }
        };
        let pitch = (params.intonation * rng.sample::<f64, _>(StandardNormal)).exp();
        syllables.push((pos, factors, pitch));
        pos += (rng.gen_range(0.12..0.25) * fs) as usize;
    }

    let mut resonators = [Resonator::default(); 3];
    let mut out = vec![0.0; n];
    let mut syl = 0usize;
    let mut next_pulse = 0.0f64;
    let mut f0 = voice.f0;
    let noise_gain = voice.breathiness * (voice.f0 / fs).sqrt();
    let nyquist_guard = 0.45 * fs;
    for (t, sample) in out.iter_mut().enumerate() {
        if syl < syllables.len() && syllables[syl].0 == t {
            let (_, factors, pitch) = syllables[syl];
            for k in 0..3 {
                let f = (voice.formants[k] * factors[k]).min(nyquist_guard);
                resonators[k].tune(f, voice.bandwidths[k], fs);
            }
            f0 = voice.f0 * pitch;
            syl += 1;
        }
        let mut excitation = noise_gain * rng.sample::<f64, _>(StandardNormal);
        if t as f64 >= next_pulse {
            excitation += 1.0;
            let jitter = 1.0 + params.pitch_jitter * rng.sample::<f64, _>(StandardNormal);
            next_pulse += fs / (f0 * jitter.max(0.5));
        }
        *sample = resonators
            .iter_mut()
            .zip(FORMANT_GAINS)
            .map(|(r, g)| g * r.step(excitation))
            .sum();
    }

    if let Some((rate, floor)) = voice.bursts {
        let phase0: f64 = rng.gen_range(0.0..1.0);
        for (t, sample) in out.iter_mut().enumerate() {
            let phase = phase0 + rate * t as f64 / fs;
            let hump = 0.5 - 0.5 * (2.0 * PI * phase).cos();
            *sample *= floor + (1.0 - floor) * hump * hump;
        }
    }

    peak_normalize(&mut out, PEAK_LEVEL);
    Ok(out)
}

pub(crate) fn peak_normalize(samples: &mut [f64], level: f64) {
    let peak = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        let g = level / peak;
        samples.iter_mut().for_each(|v| *v *= g);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile() -> SpeakerProfile {
        SpeakerProfile::random("spk000", 1, true)
    }

    #[test]
    fn length_and_peak_level() {
        let x = synth_segment(&profile(), ContentLabel::Neutral, 0.5, 9, &SynthParams::default()).unwrap();
        assert_eq!(x.len(), 4000);
        let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((peak - PEAK_LEVEL).abs() < 1e-12);
        assert!(x.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn same_seed_same_samples() {
        let p = profile();
        let params = SynthParams::default();
        let a = synth_segment(&p, ContentLabel::Laughter, 0.3, 5, &params).unwrap();
        let b = synth_segment(&p, ContentLabel::Laughter, 0.3, 5, &params).unwrap();
        let c = synth_segment(&p, ContentLabel::Laughter, 0.3, 6, &params).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_duration_rejected() {
        let p = profile();
        let params = SynthParams::default();
        assert!(synth_segment(&p, ContentLabel::Neutral, 0.0, 1, &params).is_err());
        assert!(synth_segment(&p, ContentLabel::Neutral, -1.0, 1, &params).is_err());
        assert!(synth_segment(&p, ContentLabel::Neutral, f64::NAN, 1, &params).is_err());
    }

    #[test]
    fn resonator_has_unit_gain_at_centre() {
        let fs = 8000.0;
        let mut r = Resonator::default();
        r.tune(500.0, 80.0, fs);
        // drive with a long 500 Hz sinusoid, measure steady-state amplitude
        let mut energy = 0.0f64;
        for t in 0..16000 {
            let y = r.step((2.0 * PI * 500.0 * t as f64 / fs).sin());
            if t >= 8000 {
                energy += y * y;
            }
        }
        let amplitude = (2.0 * energy / 8000.0).sqrt();
        assert!((amplitude - 1.0).abs() < 1e-3, "amplitude {amplitude}");
    }

    #[test]
    fn response_maximum_sits_on_centre_for_wide_bandwidths() {
        let fs = 8000.0;
        for (freq, bw) in [(300.0, 250.0), (600.0, 200.0), (1800.0, 400.0)] {
            let mut r = Resonator::default();
            r.tune(freq, bw, fs);
            let gain = |f: f64| {
                let w = 2.0 * PI * f / fs;
                let re = 1.0 - r.a1 * w.cos() - r.a2 * (2.0 * w).cos();
                let im = r.a1 * w.sin() + r.a2 * (2.0 * w).sin();
                r.b0 / (re * re + im * im).sqrt()
            };
            let best = (1..4000)
                .map(|k| k as f64)
                .max_by(|a, b| gain(*a).total_cmp(&gain(*b)))
                .unwrap();
            assert!((best - freq).abs() <= 1.0, "{freq} Hz peaks at {best}");
            assert!((gain(freq) - 1.0).abs() < 1e-12);
        }
    }
}
