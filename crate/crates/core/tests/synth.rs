use std::collections::HashMap;

use ivl_core::harness::parse_manifest;
use ivl_core::synth::{
    generate_corpus, synth_segment, CompositeLabel, ContentLabel, CorpusConfig, CorpusManifest, DatasetTag,
    LaughterStyle, SpeakerProfile, SplitRole, SynthParams, MANIFEST_FILE,
};
use proptest::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

const FS: f64 = 8000.0;
const NFFT: usize = 1024;

fn profile(f1: f64) -> SpeakerProfile {
    SpeakerProfile {
        speaker_id: "probe".into(),
        base_formants: [f1, 1500.0, 2500.0],
        formant_bandwidths: [80.0, 120.0, 160.0],
        pitch_base: 120.0,
        jitter_seed: 99,
        laughter: LaughterStyle {
            pitch_factor: 1.5,
            burst_rate_hz: 5.0,
            breathiness: 0.4,
            bandwidth_factor: 1.3,
        },
    }
}

/// Welch-averaged power spectrum, Hann window, half overlap.
fn power_spectrum(x: &[f64]) -> Vec<f64> {
    let fft = FftPlanner::new().plan_fft_forward(NFFT);
    let window: Vec<f64> = (0..NFFT)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / NFFT as f64).cos())
        .collect();
    let mut acc = vec![0.0; NFFT / 2 + 1];
    let mut start = 0;
    while start + NFFT <= x.len() {
        let mut buf: Vec<Complex<f64>> = x[start..start + NFFT]
            .iter()
            .zip(&window)
            .map(|(v, w)| Complex::new(v * w, 0.0))
            .collect();
        fft.process(&mut buf);
        for (a, c) in acc.iter_mut().zip(&buf) {
            *a += c.norm_sqr();
        }
        start += NFFT / 2;
    }
    acc
}

/// Frequency of the strongest spectral-envelope peak in `[lo, hi]` Hz for
/// a voice whose highest pitch is about `f0`. The envelope is the
/// cepstrally liftered log spectrum with quefrencies from 0.8 pitch periods
/// up removed, which strips the harmonic ripple.
fn resonance_peak(x: &[f64], lo: f64, hi: f64, f0: f64) -> f64 {
    let spec = power_spectrum(x);
    let mut planner = FftPlanner::new();
    let mut buf: Vec<Complex<f64>> = (0..NFFT)
        .map(|k| {
            let k = if k <= NFFT / 2 { k } else { NFFT - k };
            Complex::new(spec[k].max(1e-300).ln(), 0.0)
        })
        .collect();
    planner.plan_fft_inverse(NFFT).process(&mut buf);
    let cutoff = (0.8 * FS / f0) as usize;
    for (q, c) in buf.iter_mut().enumerate() {
        if q >= cutoff && q <= NFFT - cutoff {
            *c = Complex::new(0.0, 0.0);
        }
    }
    planner.plan_fft_forward(NFFT).process(&mut buf);
    let bin = FS / NFFT as f64;
    let (a, b) = ((lo / bin).ceil() as usize, (hi / bin).floor() as usize);
    let k = (a..=b).max_by(|&i, &j| buf[i].re.total_cmp(&buf[j].re)).unwrap();
    // parabolic refinement on the log envelope
    let (l, c, r) = (buf[k - 1].re, buf[k].re, buf[k + 1].re);
    let denom = l - 2.0 * c + r;
    let offset = if denom < 0.0 { 0.5 * (l - r) / denom } else { 0.0 };
    (k as f64 + offset) * bin
}

/// Strongest peak in `[lo, hi]` Hz of the log Welch spectrum smoothed with
/// a 40 Hz Gaussian. Suited to low-pitched probes whose harmonic comb is
/// finer than the kernel.
fn smoothed_peak(x: &[f64], lo: f64, hi: f64) -> f64 {
    let log_spec: Vec<f64> = power_spectrum(x).iter().map(|v| v.max(1e-300).ln()).collect();
    let bin = FS / NFFT as f64;
    let sigma = 40.0 / bin;
    let reach = (3.0 * sigma).ceil() as isize;
    let n = log_spec.len() as isize;
    let smooth = |k: isize| {
        let (mut acc, mut norm) = (0.0, 0.0);
        for d in -reach..=reach {
            let j = k + d;
            if (0..n).contains(&j) {
                let w = (-0.5 * (d as f64 / sigma).powi(2)).exp();
                acc += w * log_spec[j as usize];
                norm += w;
            }
        }
        acc / norm
    };
    let (a, b) = ((lo / bin).ceil() as isize, (hi / bin).floor() as isize);
    let k = (a..=b).max_by(|&i, &j| smooth(i).total_cmp(&smooth(j))).unwrap();
    let (l, c, r) = (smooth(k - 1), smooth(k), smooth(k + 1));
    let denom = l - 2.0 * c + r;
    let offset = if denom < 0.0 { 0.5 * (l - r) / denom } else { 0.0 };
    (k as f64 + offset) * bin
}

/// The speaker's resonators driven by a 40 Hz excitation at every content
/// type. High voices sample the envelope too sparsely to locate a resonance.
fn low_pitched_probe(p: &SpeakerProfile) -> SpeakerProfile {
    let mut probe = p.clone();
    probe.pitch_base = 40.0;
    probe.laughter.pitch_factor = 1.0;
    probe
}

fn voice_pitch(p: &SpeakerProfile, label: ContentLabel) -> f64 {
    match label {
        ContentLabel::Neutral => p.pitch_base,
        _ => p.pitch_base * p.laughter.pitch_factor,
    }
}

fn segment(p: &SpeakerProfile, label: ContentLabel, seconds: f64, params: &SynthParams) -> Vec<f64> {
    synth_segment(p, label, seconds, 5, params).unwrap()
}

#[test]
fn neutral_peak_sits_on_first_formant() {
    let params = SynthParams::default();
    for f1 in [400.0, 500.0, 650.0] {
        let p = profile(f1);
        let x = segment(&p, ContentLabel::Neutral, 1.0, &params);
        let peak = resonance_peak(&x, 200.0, 1100.0, voice_pitch(&p, ContentLabel::Neutral));
        assert!((peak - f1).abs() <= 20.0, "F1 {f1}: peak at {peak}");
    }
}

#[test]
fn laughter_peak_scaled_up() {
    let params = SynthParams::default();
    let p = low_pitched_probe(&profile(500.0));
    let x = segment(&p, ContentLabel::Laughter, 16.0, &params);
    let peak = smoothed_peak(&x, 200.0, 1100.0);
    assert!((peak - 650.0).abs() <= 0.05 * 650.0, "laughter peak at {peak}");
}

#[test]
fn unit_laughter_scale_keeps_neutral_resonances() {
    let params = SynthParams {
        laughter_scale: 1.0,
        ..SynthParams::default()
    };
    let mut p = profile(550.0);
    // same excitation for both, so only the resonances can differ
    p.laughter.pitch_factor = 1.0;
    p.laughter.bandwidth_factor = 1.0;
    let peak = |label| resonance_peak(&segment(&p, label, 2.0, &params), 200.0, 1100.0, p.pitch_base);
    let (ns, l) = (peak(ContentLabel::Neutral), peak(ContentLabel::Laughter));
    assert!((ns - l).abs() <= 20.0, "NS {ns} vs L {l}");
    assert!((l - 550.0).abs() <= 0.05 * 550.0);
}

fn first_resonances(p: &SpeakerProfile, params: &SynthParams, seconds: f64) -> [f64; 3] {
    let hi = 0.5 * (p.base_formants[0] * params.laughter_scale + p.base_formants[1]);
    [ContentLabel::Neutral, ContentLabel::SpeechLaugh, ContentLabel::Laughter]
        .map(|label| resonance_peak(&segment(p, label, seconds, params), 150.0, hi, voice_pitch(p, label)))
}

#[test]
fn continuum_ordering_for_every_evaluation_speaker() {
    let config = CorpusConfig::default();
    for p in config.profiles(3).iter().take(config.speakers) {
        let [ns, sl, l] = first_resonances(p, &config.synth, 8.0);
        assert!(ns < sl && sl < l, "{}: NS {ns} SL {sl} L {l}", p.speaker_id);
    }
}

#[test]
fn continuum_centres_within_five_percent() {
    let config = CorpusConfig::default();
    let params = &config.synth;
    for p in config.profiles(3).iter().take(config.speakers) {
        let probe = low_pitched_probe(p);
        let (f1, f2) = (p.base_formants[0], p.base_formants[1]);
        for (label, scale) in [
            (ContentLabel::Neutral, 1.0),
            (ContentLabel::SpeechLaugh, params.speech_laugh_scale),
            (ContentLabel::Laughter, params.laughter_scale),
        ] {
            let x = segment(&probe, label, 16.0, params);
            let got = smoothed_peak(&x, 150.0, 0.5 * (f1 + f2) * scale);
            let want = f1 * scale;
            assert!(
                (got - want).abs() <= 0.05 * want,
                "{} {label:?}: {got} vs {want}",
                p.speaker_id
            );
        }
    }
}

fn normalized_long_term_spectrum(x: &[f64]) -> Vec<f64> {
    let s = power_spectrum(x);
    let norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
    s.iter().map(|v| v / norm).collect()
}

#[test]
fn speakers_with_distinct_f1_have_distinct_spectra() {
    let params = SynthParams::default();
    let a = normalized_long_term_spectrum(&segment(&profile(450.0), ContentLabel::Neutral, 2.0, &params));
    let b = normalized_long_term_spectrum(&segment(&profile(500.0), ContentLabel::Neutral, 2.0, &params));
    let dist: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    assert!(dist > 0.05, "spectral distance {dist}");
}

fn tiny_config() -> CorpusConfig {
    CorpusConfig {
        speakers: 2,
        background_speakers: 1,
        background_utterances: 2,
        enroll_neutral: 2,
        enroll_mixed_neutral: 1,
        enroll_mixed_laughter: 1,
        test_utterances: [1, 1, 1, 1, 1, 1, 1],
        ..CorpusConfig::default()
    }
}

#[test]
fn single_utterance_has_exact_sample_count() {
    let dir = tempfile::tempdir().unwrap();
    let config = CorpusConfig {
        speakers: 1,
        background_speakers: 0,
        background_utterances: 0,
        enroll_neutral: 1,
        enroll_mixed_neutral: 0,
        enroll_mixed_laughter: 0,
        test_utterances: [0; 7],
        min_duration_s: 2.5,
        max_duration_s: 2.5,
        ..CorpusConfig::default()
    };
    let manifest = generate_corpus(&config, 1, dir.path()).unwrap();
    assert_eq!(manifest.entries.len(), 1);
    let reader = hound::WavReader::open(manifest.resolve(&manifest.entries[0])).unwrap();
    let spec = reader.spec();
    assert_eq!(spec.sample_rate, 8000);
    assert_eq!(spec.bits_per_sample, 16);
    assert_eq!(spec.channels, 1);
    assert_eq!(reader.len(), 20000);
    assert_eq!(manifest.entries[0].duration_s, 2.5);
}

#[test]
fn default_layout_per_speaker() {
    let config = CorpusConfig::default();
    let plan = ivl_core::synth::planned_utterances(&config, 1);
    let mut counts: HashMap<(String, Option<DatasetTag>, SplitRole), usize> = HashMap::new();
    for p in &plan {
        if p.role != SplitRole::Background {
            *counts.entry((p.speaker_id.clone(), p.dataset, p.role)).or_default() += 1;
        }
    }
    let tr1 = plan
        .iter()
        .filter(|p| p.dataset == Some(DatasetTag::Dset1) && p.role == SplitRole::Enroll);
    assert_eq!(tr1.count(), 30 * 50);
    let ts1 = plan
        .iter()
        .filter(|p| p.dataset == Some(DatasetTag::Dset1) && p.role == SplitRole::Test);
    assert_eq!(ts1.count(), 30 * 25);
    assert_eq!(counts.len(), 30 * 9);
    for ((_, tag, role), n) in counts {
        let want = match (role, tag.unwrap()) {
            (SplitRole::Enroll, _) => 50,
            (_, DatasetTag::Dset1) => 25,
            (_, DatasetTag::Dset2 | DatasetTag::Dset3 | DatasetTag::Dset4) => 15,
            _ => 10,
        };
        assert_eq!(n, want);
    }
    for p in &plan {
        let d = p.duration_s();
        assert!((2.5..=3.0).contains(&d), "{} lasts {d}", p.utterance_id);
    }
    let tr2_laughter = plan
        .iter()
        .filter(|p| p.speaker_id == "spk000" && p.dataset == Some(DatasetTag::Dset2) && p.role == SplitRole::Enroll)
        .filter(|p| p.label == CompositeLabel::L)
        .count();
    assert_eq!(tr2_laughter, 10);
}

#[test]
fn manifest_roundtrips_through_parser() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = generate_corpus(&tiny_config(), 4, dir.path()).unwrap();
    let parsed = parse_manifest(&dir.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(parsed, manifest);
    for e in &parsed.entries {
        assert!(parsed.resolve(e).is_file());
    }
}

#[test]
fn generation_is_byte_deterministic_and_seed_sensitive() {
    let config = tiny_config();
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    let a = generate_corpus(&config, 7, dirs[0].path()).unwrap();
    let b = generate_corpus(&config, 7, dirs[1].path()).unwrap();
    let c = generate_corpus(&config, 8, dirs[2].path()).unwrap();
    let read = |m: &CorpusManifest, i: usize| std::fs::read(m.resolve(&m.entries[i])).unwrap();
    assert_eq!(a.entries, b.entries);
    for i in 0..a.entries.len() {
        assert_eq!(read(&a, i), read(&b, i));
    }
    let shape = |m: &CorpusManifest| {
        m.entries
            .iter()
            .map(|e| (e.utterance_id.clone(), e.label, e.role, e.dataset))
            .collect::<Vec<_>>()
    };
    assert_eq!(shape(&a), shape(&c));
    assert!((0..a.entries.len()).any(|i| read(&a, i) != read(&c, i)));
    assert_eq!(
        std::fs::read(dirs[0].path().join(MANIFEST_FILE)).unwrap(),
        std::fs::read(dirs[1].path().join(MANIFEST_FILE)).unwrap()
    );
}

#[test]
fn zero_speaker_config_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = CorpusConfig {
        speakers: 0,
        background_speakers: 0,
        ..CorpusConfig::default()
    };
    assert!(generate_corpus(&config, 1, dir.path()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sampled_profiles_stay_in_band(seed in any::<u64>(), low in any::<bool>()) {
        let p = SpeakerProfile::random("spk", seed, low);
        prop_assert!(p.validate().is_ok());
        let f = p.base_formants;
        prop_assert!(f[0] < f[1] && f[1] < f[2]);
        prop_assert!(f.iter().all(|&x| (125.0..3800.0).contains(&x)));
    }

    #[test]
    fn composite_label_is_union_of_segments(picks in prop::collection::vec(0usize..3, 1..8)) {
        let segments: Vec<ContentLabel> = picks.iter().map(|&i| ContentLabel::ALL[i]).collect();
        let label = CompositeLabel::from_segments(&segments).unwrap();
        for c in ContentLabel::ALL {
            prop_assert_eq!(label.contains(c), segments.contains(&c));
        }
    }

    #[test]
    fn segment_is_peak_normalised(seed in 0u64..1000, dur in 0.05f64..0.6, which in 0usize..3) {
        let label = ContentLabel::ALL[which];
        let x = synth_segment(&profile(500.0), label, dur, seed, &SynthParams::default()).unwrap();
        prop_assert_eq!(x.len(), (dur * FS).round() as usize);
        let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!((peak - 10f64.powf(-3.0 / 20.0)).abs() < 1e-9);
    }
}
