use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::labels::{CompositeLabel, ContentLabel, DatasetTag, SplitRole};
use super::manifest::{CorpusManifest, ManifestEntry, MANIFEST_FILE};
use super::profile::{SpeakerPopulation, SpeakerProfile};
use super::segment::{peak_normalize, synth_segment, SynthParams, PEAK_LEVEL};
use crate::derive_seed;
use crate::error::{Error, Result};

/// Corpus layout and acoustic knobs. Defaults mirror the seven-dataset
/// layout: 50 neutral enrollment utterances (TR1), 40 neutral + 10 laughter
/// (TR2), and 25/15/15/15/10/10/10 test utterances for TS1..TS7.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    /// Evaluation speakers.
    pub speakers: usize,
    pub background_speakers: usize,
    pub background_utterances: usize,
    /// Content of background utterances, cycled over each speaker's list.
    pub background_content: Vec<CompositeLabel>,
    pub enroll_neutral: usize,
    pub enroll_mixed_neutral: usize,
    pub enroll_mixed_laughter: usize,
    /// Test utterances per speaker for DSET1..DSET7.
    pub test_utterances: [usize; 7],
    pub min_duration_s: f64,
    pub max_duration_s: f64,
    /// Share of a composite utterance given to non-neutral content.
    pub other_fraction: f64,
    pub crossfade_ms: f64,
    pub pad_min_ms: f64,
    pub pad_max_ms: f64,
    /// RMS level of the additive noise floor.
    pub noise_floor_dbfs: f64,
    /// Largest first-order channel tilt coefficient.
    pub channel_tilt: f64,
    pub synth: SynthParams,
    pub population: SpeakerPopulation,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            speakers: 30,
            background_speakers: 100,
            background_utterances: 12,
            background_content: vec![
                CompositeLabel::NS,
                CompositeLabel::NS,
                CompositeLabel::NS,
                CompositeLabel::NS,
                CompositeLabel::L,
                CompositeLabel::SL,
            ],
            enroll_neutral: 50,
            enroll_mixed_neutral: 40,
            enroll_mixed_laughter: 10,
            test_utterances: [25, 15, 15, 15, 10, 10, 10],
            min_duration_s: 2.5,
            max_duration_s: 3.0,
            other_fraction: 0.3,
            crossfade_ms: 50.0,
            pad_min_ms: 100.0,
            pad_max_ms: 300.0,
            noise_floor_dbfs: -65.0,
            channel_tilt: 0.2,
            synth: SynthParams::default(),
            population: SpeakerPopulation::default(),
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.population
            .validate(self.synth.laughter_scale.max(self.synth.speech_laugh_scale))?;
        if self.speakers == 0 && self.background_speakers == 0 {
            return Err(Error::Config("corpus has zero speakers".into()));
        }
        let eval_utts = self.enroll_neutral
            + self.enroll_mixed_neutral
            + self.enroll_mixed_laughter
            + self.test_utterances.iter().sum::<usize>();
        let bg_utts = self.background_speakers * self.background_utterances;
        if self.speakers * eval_utts + bg_utts == 0 {
            return Err(Error::Config("corpus has zero utterances".into()));
        }
        if self.background_utterances > 0 && self.background_content.is_empty() {
            return Err(Error::Config("background_content is empty".into()));
        }
        if !(self.min_duration_s > 0.0 && self.min_duration_s <= self.max_duration_s) {
            return Err(Error::Config(format!(
                "bad duration range [{}, {}]",
                self.min_duration_s, self.max_duration_s
            )));
        }
        if !(self.pad_min_ms >= 0.0 && self.pad_min_ms <= self.pad_max_ms) {
            return Err(Error::Config("bad silence padding range".into()));
        }
        let min_active = self.min_duration_s * 1000.0 - 2.0 * self.pad_max_ms;
        if min_active < 4.0 * self.crossfade_ms.max(25.0) {
            return Err(Error::Config(
                "min_duration_s too short for padding and cross-fades".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.other_fraction) {
            return Err(Error::Config("other_fraction must be in [0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.channel_tilt) {
            return Err(Error::Config("channel_tilt must be in [0, 1)".into()));
        }
        Ok(())
    }

    /// All speaker profiles, evaluation speakers first.
    pub fn profiles(&self, seed: u64) -> Vec<SpeakerProfile> {
        let pop = &self.population;
        let eval = (0..self.speakers).map(|i| SpeakerProfile::sample(&eval_speaker_id(i), seed, i % 2 == 0, pop));
        let bg = (0..self.background_speakers)
            .map(|i| SpeakerProfile::sample(&background_speaker_id(i), seed, i % 2 == 0, pop));
        eval.chain(bg).collect()
    }
}

pub fn eval_speaker_id(i: usize) -> String {
    format!("spk{i:03}")
}

pub fn background_speaker_id(i: usize) -> String {
    format!("bg{i:03}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannedUtterance {
    pub utterance_id: String,
    pub speaker_id: String,
    pub label: CompositeLabel,
    pub role: SplitRole,
    pub dataset: Option<DatasetTag>,
    pub num_samples: usize,
}

impl PlannedUtterance {
    pub fn duration_s(&self) -> f64 {
        self.num_samples as f64 / super::SAMPLE_RATE as f64
    }

    fn relative_path(&self) -> String {
        format!("wav/{}/{}.wav", self.speaker_id, self.utterance_id)
    }
}

/// The full utterance list in manifest order. Durations are drawn per
/// utterance id, so the plan is independent of iteration order.
pub fn planned_utterances(config: &CorpusConfig, seed: u64) -> Vec<PlannedUtterance> {
    let fs = super::SAMPLE_RATE as f64;
    let draw_len = |id: &str| -> usize {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("duration/{id}")));
        let lo = (config.min_duration_s * fs).round() as usize;
        let hi = (config.max_duration_s * fs).round() as usize;
        if hi > lo {
            rng.gen_range(lo..=hi)
        } else {
            lo
        }
    };
    let mut plan = Vec::new();
    let mut push = |speaker: &str, tag: &str, idx: usize, label, role, dataset| {
        let utterance_id = format!("{speaker}-{tag}-{idx:03}");
        let num_samples = draw_len(&utterance_id);
        plan.push(PlannedUtterance {
            utterance_id,
            speaker_id: speaker.to_string(),
            label,
            role,
            dataset,
            num_samples,
        });
    };
    for s in 0..config.speakers {
        let spk = eval_speaker_id(s);
        for i in 0..config.enroll_neutral {
            push(
                &spk,
                "TR1",
                i,
                CompositeLabel::NS,
                SplitRole::Enroll,
                Some(DatasetTag::Dset1),
            );
        }
        let mixed = config.enroll_mixed_neutral + config.enroll_mixed_laughter;
        for i in 0..mixed {
            let label = if i < config.enroll_mixed_neutral {
                CompositeLabel::NS
            } else {
                CompositeLabel::L
            };
            push(&spk, "TR2", i, label, SplitRole::Enroll, Some(DatasetTag::Dset2));
        }
        for tag in DatasetTag::ALL {
            for i in 0..config.test_utterances[tag.index() - 1] {
                push(
                    &spk,
                    &tag.test_set_name(),
                    i,
                    tag.test_content(),
                    SplitRole::Test,
                    Some(tag),
                );
            }
        }
    }
    for s in 0..config.background_speakers {
        let spk = background_speaker_id(s);
        for i in 0..config.background_utterances {
            let label = config.background_content[i % config.background_content.len()];
            push(&spk, "BG", i, label, SplitRole::Background, None);
        }
    }
    plan
}

/// Renders one planned utterance to samples in [-1, 1].
pub fn synth_utterance(
    plan: &PlannedUtterance,
    profile: &SpeakerProfile,
    config: &CorpusConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    let fs = super::SAMPLE_RATE as f64;
    let utt_seed = derive_seed(seed, &plan.utterance_id);
    let mut rng = ChaCha8Rng::seed_from_u64(utt_seed);
    let n = plan.num_samples;
    let pad_lo = (config.pad_min_ms * fs / 1000.0).round() as usize;
    let pad_hi = (config.pad_max_ms * fs / 1000.0).round() as usize;
    let lead = rng.gen_range(pad_lo..=pad_hi);
    let trail = rng.gen_range(pad_lo..=pad_hi);
    let active = n
        .checked_sub(lead + trail)
        .filter(|a| *a > 0)
        .ok_or_else(|| Error::InvalidInput(format!("{}: too short for silence padding", plan.utterance_id)))?;

    let mut segments = plan.label.members();
    segments.shuffle(&mut rng);
    let k = segments.len();
    let shares: Vec<f64> = if k == 1 {
        vec![1.0]
    } else if plan.label.contains(ContentLabel::Neutral) {
        let other = config.other_fraction / (k - 1) as f64;
        segments
            .iter()
            .map(|s| {
                if *s == ContentLabel::Neutral {
                    1.0 - config.other_fraction
                } else {
                    other
                }
            })
            .collect()
    } else {
        vec![1.0 / k as f64; k]
    };
    let overlap = ((config.crossfade_ms * fs / 1000.0).round() as usize).min(active / (2 * k));
    let span = active + (k - 1) * overlap;
    let mut lengths: Vec<usize> = shares.iter().map(|s| (s * span as f64).round() as usize).collect();
    let assigned: usize = lengths[..k - 1].iter().sum();
    lengths[k - 1] = span - assigned;

    let mut body = vec![0.0; active];
    let mut start = 0usize;
    for (i, (&label, &len)) in segments.iter().zip(&lengths).enumerate() {
        let seg = synth_segment(
            profile,
            label,
            len as f64 / fs,
            derive_seed(utt_seed, &format!("segment/{i}")),
            &config.synth,
        )?;
        for (j, &v) in seg.iter().enumerate() {
            let mut gain = 1.0;
            if i > 0 && j < overlap {
                gain = (j as f64 + 0.5) / overlap as f64;
            }
            if i + 1 < k && j + overlap >= seg.len() {
                gain *= (seg.len() - j) as f64 / overlap as f64 - 0.5 / overlap as f64;
            }
            if let Some(dst) = body.get_mut(start + j) {
                *dst += gain * v;
            }
        }
        start += len - overlap;
    }

    if config.channel_tilt > 0.0 {
        let a = rng.gen_range(-config.channel_tilt..=config.channel_tilt);
        let mut prev = 0.0;
        for v in body.iter_mut() {
            let x = *v;
            *v = x - a * prev;
            prev = x;
        }
    }
    peak_normalize(&mut body, PEAK_LEVEL);

    let floor = 10f64.powf(config.noise_floor_dbfs / 20.0);
    let mut out = vec![0.0; n];
    out[lead..lead + active].copy_from_slice(&body);
    for v in out.iter_mut() {
        *v = (*v + floor * rng.sample::<f64, _>(StandardNormal)).clamp(-1.0, 1.0);
    }
    Ok(out)
}

pub(crate) fn write_wav(path: &Path, samples: &[f64], sample_rate: u32) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| wav_err(path, e))?;
    for &v in samples {
        let q = (v * 32767.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(q).map_err(|e| wav_err(path, e))?;
    }
    writer.finalize().map_err(|e| wav_err(path, e))
}

fn wav_err(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Wav(format!("{}: {other}", path.display())),
    }
}

/// Writes every utterance as 16-bit PCM WAV under `out_dir/wav/` plus
/// `out_dir/manifest.jsonl`. Output is a pure function of `(config, seed)`.
pub fn generate_corpus(config: &CorpusConfig, seed: u64, out_dir: &Path) -> Result<CorpusManifest> {
    config.validate()?;
    let plan = planned_utterances(config, seed);
    let profiles: HashMap<String, SpeakerProfile> = config
        .profiles(seed)
        .into_iter()
        .map(|p| (p.speaker_id.clone(), p))
        .collect();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for spk in profiles.keys() {
        let dir = out_dir.join("wav").join(spk);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }

    let entries = plan
        .par_iter()
        .map(|utt| {
            let profile = &profiles[&utt.speaker_id];
            let samples = synth_utterance(utt, profile, config, seed)?;
            let rel = utt.relative_path();
            write_wav(&out_dir.join(&rel), &samples, super::SAMPLE_RATE)?;
            Ok(ManifestEntry {
                utterance_id: utt.utterance_id.clone(),
                speaker_id: utt.speaker_id.clone(),
                path: rel,
                label: utt.label,
                duration_s: utt.duration_s(),
                role: utt.role,
                dataset: utt.dataset,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let manifest = CorpusManifest {
        root: out_dir.to_path_buf(),
        entries,
    };
    manifest.write_jsonl(&out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> CorpusConfig {
        CorpusConfig {
            speakers: 2,
            background_speakers: 1,
            background_utterances: 2,
            enroll_neutral: 1,
            enroll_mixed_neutral: 1,
            enroll_mixed_laughter: 1,
            test_utterances: [1, 1, 1, 1, 1, 1, 1],
            ..CorpusConfig::default()
        }
    }

    #[test]
    fn default_layout_counts() {
        let config = CorpusConfig::default();
        let plan = planned_utterances(&config, 1);
        let count = |role, tag| {
            plan.iter()
                .filter(|p| p.role == role && p.dataset == tag && p.speaker_id == "spk003")
                .count()
        };
        assert_eq!(count(SplitRole::Enroll, Some(DatasetTag::Dset1)), 50);
        assert_eq!(count(SplitRole::Enroll, Some(DatasetTag::Dset2)), 50);
        assert_eq!(count(SplitRole::Test, Some(DatasetTag::Dset1)), 25);
        assert_eq!(count(SplitRole::Test, Some(DatasetTag::Dset4)), 15);
        assert_eq!(count(SplitRole::Test, Some(DatasetTag::Dset7)), 10);
        let tr2_laugh = plan
            .iter()
            .filter(|p| p.dataset == Some(DatasetTag::Dset2) && p.role == SplitRole::Enroll)
            .filter(|p| p.speaker_id == "spk000" && p.label == CompositeLabel::L)
            .count();
        assert_eq!(tr2_laugh, 10);
        for p in &plan {
            let d = p.duration_s();
            assert!((2.5..=3.0).contains(&d), "{d}");
        }
    }

    #[test]
    fn speech_laugh_never_enrolled() {
        let plan = planned_utterances(&CorpusConfig::default(), 4);
        assert!(plan
            .iter()
            .filter(|p| p.role == SplitRole::Enroll)
            .all(|p| !p.label.contains(ContentLabel::SpeechLaugh)));
    }

    #[test]
    fn utterance_has_padding_and_stays_in_range() {
        let config = tiny();
        let plan = planned_utterances(&config, 2);
        let profiles = config.profiles(2);
        let utt = plan.iter().find(|p| p.dataset == Some(DatasetTag::Dset4)).unwrap();
        let x = synth_utterance(utt, &profiles[0], &config, 2).unwrap();
        assert_eq!(x.len(), utt.num_samples);
        assert!(x.iter().all(|v| v.abs() <= 1.0));
        // first 100 ms are the noise floor only
        let lead_rms = (x[..800].iter().map(|v| v * v).sum::<f64>() / 800.0).sqrt();
        assert!(lead_rms < 1e-3, "{lead_rms}");
    }

    #[test]
    fn rejects_empty_configs() {
        let mut c = tiny();
        c.speakers = 0;
        c.background_speakers = 0;
        assert!(c.validate().is_err());
        let mut c = tiny();
        c.enroll_neutral = 0;
        c.enroll_mixed_neutral = 0;
        c.enroll_mixed_laughter = 0;
        c.test_utterances = [0; 7];
        c.background_utterances = 0;
        assert!(c.validate().is_err());
    }
}
