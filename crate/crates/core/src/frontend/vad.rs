use super::mfcc::frame_count;
use super::wav::AudioBuffer;
use super::FrontendConfig;

/// Mean-square energy of each analysis frame in dB re full scale.
pub fn frame_log_energy(audio: &AudioBuffer, config: &FrontendConfig) -> Vec<f64> {
    let len = config.frame_len();
    let shift = config.frame_shift();
    (0..frame_count(audio.len(), len, shift))
        .map(|i| {
            let frame = &audio.samples[i * shift..i * shift + len];
            let ms = frame.iter().map(|v| v * v).sum::<f64>() / len as f64;
            10.0 * (ms + 1e-20).log10()
        })
        .collect()
}

/// Energy VAD on the MFCC frame grid: a frame is speech when its energy is
/// within `vad_threshold_db` of the loudest frame and above `vad_floor_db`.
pub fn energy_vad(audio: &AudioBuffer, config: &FrontendConfig) -> Vec<bool> {
    let energy = frame_log_energy(audio, config);
    let max = energy.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    energy
        .iter()
        .map(|&e| e > max - config.vad_threshold_db && e > config.vad_floor_db)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn tone(n: usize, amp: f64) -> Vec<f64> {
        (0..n)
            .map(|t| amp * (2.0 * PI * 440.0 * t as f64 / 8000.0).sin())
            .collect()
    }

    #[test]
    fn digital_silence_is_dropped() {
        let a = AudioBuffer::new(vec![0.0; 8000], 8000).unwrap();
        let mask = energy_vad(&a, &FrontendConfig::default());
        assert_eq!(mask.len(), 98);
        assert!(mask.iter().all(|m| !m));
    }

    #[test]
    fn full_scale_tone_is_kept() {
        let a = AudioBuffer::new(tone(8000, 1.0), 8000).unwrap();
        assert!(energy_vad(&a, &FrontendConfig::default()).iter().all(|&m| m));
    }

    #[test]
    fn leading_silence_is_trimmed() {
        // 300 ms of near-silence, then 1 s of tone
        let mut s = vec![0.0; 2400];
        s.iter_mut()
            .enumerate()
            .for_each(|(t, v)| *v = 1e-4 * ((t * 7919) % 13) as f64 / 13.0);
        s.extend(tone(8000, 0.5));
        let a = AudioBuffer::new(s, 8000).unwrap();
        let mask = energy_vad(&a, &FrontendConfig::default());
        // frame i covers samples [80i, 80i + 200); frames entirely inside the
        // silence are i <= 27, frames starting at or after 2400 are i >= 30
        let oracle: Vec<usize> = (0..mask.len()).filter(|&i| i * 80 + 200 <= 2400).collect();
        assert_eq!(oracle.len(), 28);
        assert!(oracle.iter().all(|&i| !mask[i]));
        assert!(mask[30..].iter().all(|&m| m));
        let dropped = mask.iter().filter(|m| !**m).count();
        assert!((28..=30).contains(&dropped), "{dropped}");
    }
}
