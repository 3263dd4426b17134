use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::features::FeatureMatrix;
use super::wav::AudioBuffer;
use super::{FrontendConfig, WindowKind};
use crate::error::{Error, Result};

/// Frames on the analysis grid: floor((n - len) / shift) + 1, or 0.
pub fn frame_count(num_samples: usize, frame_len: usize, shift: usize) -> usize {
    if num_samples < frame_len {
        0
    } else {
        (num_samples - frame_len) / shift + 1
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters with edges equally spaced on the mel scale.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    /// Per filter: first FFT bin and its weights.
    filters: Vec<(usize, Vec<f64>)>,
    centers_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(n_mel: usize, fft_size: usize, sample_rate: u32, f_low: f64, f_high: f64) -> Self {
        let (m_lo, m_hi) = (hz_to_mel(f_low), hz_to_mel(f_high));
        let edges: Vec<f64> = (0..n_mel + 2)
            .map(|i| mel_to_hz(m_lo + (m_hi - m_lo) * i as f64 / (n_mel + 1) as f64))
            .collect();
        let bin_hz = sample_rate as f64 / fft_size as f64;
        let n_bins = fft_size / 2 + 1;
        let filters = (0..n_mel)
            .map(|j| {
                let (lo, mid, hi) = (edges[j], edges[j + 1], edges[j + 2]);
                let weights: Vec<(usize, f64)> = (0..n_bins)
                    .filter_map(|k| {
                        let f = k as f64 * bin_hz;
                        let w = if f > lo && f <= mid {
                            (f - lo) / (mid - lo)
                        } else if f > mid && f < hi {
                            (hi - f) / (hi - mid)
                        } else {
                            0.0
                        };
                        (w > 0.0).then_some((k, w))
                    })
                    .collect();
                let first = weights.first().map_or(0, |w| w.0);
                (first, weights.into_iter().map(|(_, w)| w).collect())
            })
            .collect();
        Self {
            filters,
            centers_hz: edges[1..=n_mel].to_vec(),
        }
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    pub fn len(&self) -> usize {
        self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }

    pub fn apply(&self, spectrum: &[f64], out: &mut [f64]) {
        for ((first, w), o) in self.filters.iter().zip(out.iter_mut()) {
            *o = w.iter().zip(&spectrum[*first..]).map(|(a, b)| a * b).sum();
        }
    }
}

/// Orthonormal DCT-II.
pub fn dct_ii(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|k| {
            let scale = if k == 0 {
                (1.0 / n as f64).sqrt()
            } else {
                (2.0 / n as f64).sqrt()
            };
            scale
                * x.iter()
                    .enumerate()
                    .map(|(i, v)| v * (PI * k as f64 * (2 * i + 1) as f64 / (2 * n) as f64).cos())
                    .sum::<f64>()
        })
        .collect()
}

/// Orthonormal DCT-III, the inverse of [`dct_ii`].
pub fn dct_iii(c: &[f64]) -> Vec<f64> {
    let n = c.len();
    (0..n)
        .map(|i| {
            c.iter()
                .enumerate()
                .map(|(k, v)| {
                    let scale = if k == 0 {
                        (1.0 / n as f64).sqrt()
                    } else {
                        (2.0 / n as f64).sqrt()
                    };
                    scale * v * (PI * k as f64 * (2 * i + 1) as f64 / (2 * n) as f64).cos()
                })
                .sum()
        })
        .collect()
}

/// Reusable MFCC front-end state (FFT plan, window, filterbank, DCT rows).
#[derive(Clone)]
pub struct MfccExtractor {
    config: FrontendConfig,
    window: Vec<f64>,
    filterbank: MelFilterbank,
    dct: Vec<Vec<f64>>,
    fft: Arc<dyn Fft<f64>>,
}

impl MfccExtractor {
    pub fn new(config: &FrontendConfig) -> Result<Self> {
        config.validate()?;
        let len = config.frame_len();
        let window = (0..len)
            .map(|i| {
                let phase = 2.0 * PI * i as f64 / (len - 1) as f64;
                match config.window {
                    WindowKind::Hamming => 0.54 - 0.46 * phase.cos(),
                    WindowKind::Hann => 0.5 - 0.5 * phase.cos(),
                }
            })
            .collect();
        let filterbank = MelFilterbank::new(
            config.n_mel,
            config.fft_size,
            config.sample_rate,
            config.f_low,
            config.f_high,
        );
        let n = config.n_mel;
        let dct = (0..config.n_ceps)
            .map(|k| {
                let scale = if k == 0 {
                    (1.0 / n as f64).sqrt()
                } else {
                    (2.0 / n as f64).sqrt()
                };
                (0..n)
                    .map(|i| scale * (PI * k as f64 * (2 * i + 1) as f64 / (2 * n) as f64).cos())
                    .collect()
            })
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(config.fft_size);
        Ok(Self {
            config: config.clone(),
            window,
            filterbank,
            dct,
            fft,
        })
    }

    pub fn config(&self) -> &FrontendConfig {
        &self.config
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.filterbank
    }

    fn check_audio(&self, audio: &AudioBuffer) -> Result<usize> {
        if audio.sample_rate != self.config.sample_rate {
            return Err(Error::InvalidInput(format!(
                "audio at {} Hz, front-end expects {}",
                audio.sample_rate, self.config.sample_rate
            )));
        }
        let frames = frame_count(audio.len(), self.config.frame_len(), self.config.frame_shift());
        if frames == 0 {
            return Err(Error::InvalidInput(format!(
                "utterance of {} samples is shorter than one frame",
                audio.len()
            )));
        }
        Ok(frames)
    }

    /// Linear mel filter outputs per frame (before the log).
    pub fn mel_energies(&self, audio: &AudioBuffer) -> Result<FeatureMatrix> {
        let frames = self.check_audio(audio)?;
        let len = self.config.frame_len();
        let shift = self.config.frame_shift();
        let nfft = self.config.fft_size;
        let mut out = FeatureMatrix::zeros(frames, self.config.n_mel);
        let mut buf = vec![Complex::new(0.0, 0.0); nfft];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut magnitude = vec![0.0; nfft / 2 + 1];
        let alpha = self.config.preemphasis;
        for t in 0..frames {
            let frame = &audio.samples[t * shift..t * shift + len];
            buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
            for i in 0..len {
                let prev = if i == 0 { frame[0] } else { frame[i - 1] };
                buf[i].re = (frame[i] - alpha * prev) * self.window[i];
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (m, c) in magnitude.iter_mut().zip(&buf) {
                *m = c.norm();
            }
            self.filterbank.apply(&magnitude, out.row_mut(t));
        }
        Ok(out)
    }

    /// Static cepstra c0..c(n_ceps-1), one row per frame.
    pub fn compute(&self, audio: &AudioBuffer) -> Result<FeatureMatrix> {
        let mel = self.mel_energies(audio)?;
        let mut out = FeatureMatrix::zeros(mel.frames(), self.config.n_ceps);
        let mut logmel = vec![0.0; self.config.n_mel];
        for t in 0..mel.frames() {
            for (l, e) in logmel.iter_mut().zip(mel.row(t)) {
                *l = e.max(self.config.log_floor).ln();
            }
            for (c, basis) in out.row_mut(t).iter_mut().zip(&self.dct) {
                *c = basis.iter().zip(&logmel).map(|(a, b)| a * b).sum();
            }
        }
        Ok(out)
    }
}

/// Static MFCCs (n_ceps dims) for every frame of `audio`.
pub fn mfcc(audio: &AudioBuffer, config: &FrontendConfig) -> Result<FeatureMatrix> {
    MfccExtractor::new(config)?.compute(audio)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_count_law() {
        assert_eq!(frame_count(8000, 200, 80), 98);
        assert_eq!(frame_count(199, 200, 80), 0);
        assert_eq!(frame_count(200, 200, 80), 1);
        assert_eq!(frame_count(280, 200, 80), 2);
    }

    #[test]
    fn one_second_gives_98_frames() {
        let a = AudioBuffer::new(vec![0.1; 8000], 8000).unwrap();
        let m = mfcc(&a, &FrontendConfig::default()).unwrap();
        assert_eq!((m.frames(), m.dims()), (98, 20));
    }

    #[test]
    fn zero_signal_has_only_c0() {
        let a = AudioBuffer::new(vec![0.0; 4000], 8000).unwrap();
        let m = mfcc(&a, &FrontendConfig::default()).unwrap();
        let first = m.row(0).to_vec();
        for row in m.rows() {
            assert_eq!(row, first.as_slice());
        }
        // c0 = sqrt(24) * ln(1e-10)
        assert!((first[0] - 24f64.sqrt() * 1e-10f64.ln()).abs() < 1e-9);
        assert!(first[1..].iter().all(|c| c.abs() < 1e-9));
    }

    #[test]
    fn tone_peaks_in_nearest_filter() {
        let config = FrontendConfig::default();
        let ex = MfccExtractor::new(&config).unwrap();
        let a = AudioBuffer::new(
            (0..8000)
                .map(|t| 0.5 * (2.0 * PI * 1000.0 * t as f64 / 8000.0).sin())
                .collect(),
            8000,
        )
        .unwrap();
        let mel = ex.mel_energies(&a).unwrap();
        // oracle: filter whose centre is closest to 1 kHz, from the mel grid
        let (m_lo, m_hi) = (hz_to_mel(125.0), hz_to_mel(3800.0));
        let target = hz_to_mel(1000.0);
        let expected = (1..=24)
            .min_by(|&a, &b| {
                let ca = m_lo + (m_hi - m_lo) * a as f64 / 25.0;
                let cb = m_lo + (m_hi - m_lo) * b as f64 / 25.0;
                (ca - target).abs().total_cmp(&(cb - target).abs())
            })
            .unwrap()
            - 1;
        for row in mel.rows() {
            let argmax = (0..24).max_by(|&i, &j| row[i].total_cmp(&row[j])).unwrap();
            assert_eq!(argmax, expected);
        }
    }

    #[test]
    fn dct_roundtrip() {
        let x: Vec<f64> = (0..24).map(|i| ((i * 37) % 11) as f64 - 3.7).collect();
        let back = dct_iii(&dct_ii(&x));
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn filter_centres_span_band() {
        let fb = MelFilterbank::new(24, 256, 8000, 125.0, 3800.0);
        assert_eq!(fb.len(), 24);
        let c = fb.centers_hz();
        assert!(c[0] > 125.0 && c[23] < 3800.0);
        assert!(c.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn too_short_is_an_error() {
        let a = AudioBuffer::new(vec![0.0; 199], 8000).unwrap();
        assert!(mfcc(&a, &FrontendConfig::default()).is_err());
    }
}
