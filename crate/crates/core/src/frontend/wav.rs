use std::f64::consts::PI;
use std::path::Path;

use crate::error::{Error, Result};

/// Mono audio in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Wav("empty audio".into()));
        }
        if sample_rate == 0 {
            return Err(Error::Wav("zero sample rate".into()));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Reads 16-bit PCM mono WAV. 16 kHz input is decimated to 8 kHz.
pub fn read_wav(path: &Path) -> Result<AudioBuffer> {
    let reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Wav(format!("{}: malformed header: {other}", path.display())),
    })?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::Wav(format!(
            "{}: unsupported encoding ({:?}, {} bits); expected 16-bit PCM",
            path.display(),
            spec.sample_format,
            spec.bits_per_sample
        )));
    }
    if spec.channels != 1 {
        return Err(Error::Wav(format!(
            "{}: expected mono, found {} channels",
            path.display(),
            spec.channels
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::Wav(format!("{}: {e}", path.display())))?;
    if samples.is_empty() {
        return Err(Error::Wav(format!("{}: empty audio", path.display())));
    }
    match spec.sample_rate {
        8000 => AudioBuffer::new(samples, 8000),
        16000 => AudioBuffer::new(decimate_by_two(&samples), 8000),
        other => Err(Error::Wav(format!(
            "{}: unsupported sample rate {other} Hz (8000 or 16000 expected)",
            path.display()
        ))),
    }
}

const DECIMATION_TAPS: usize = 101;

fn lowpass_taps() -> Vec<f64> {
    // cutoff 3.6 kHz at 16 kHz, Blackman-windowed sinc
    let fc = 3600.0 / 16000.0;
    let m = (DECIMATION_TAPS - 1) as f64;
    let mut h: Vec<f64> = (0..DECIMATION_TAPS)
        .map(|k| {
            let x = k as f64 - m / 2.0;
            let sinc = if x == 0.0 {
                2.0 * fc
            } else {
                (2.0 * PI * fc * x).sin() / (PI * x)
            };
            let w = 0.42 - 0.5 * (2.0 * PI * k as f64 / m).cos() + 0.08 * (4.0 * PI * k as f64 / m).cos();
            sinc * w
        })
        .collect();
    let sum: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= sum);
    h
}

/// Anti-aliased 2:1 decimation, zero phase.
pub fn decimate_by_two(x: &[f64]) -> Vec<f64> {
    let h = lowpass_taps();
    let half = (DECIMATION_TAPS / 2) as isize;
    (0..x.len() / 2)
        .map(|m| {
            let centre = (2 * m) as isize;
            h.iter()
                .enumerate()
                .filter_map(|(k, &hk)| {
                    let idx = centre + k as isize - half;
                    (idx >= 0 && (idx as usize) < x.len()).then(|| hk * x[idx as usize])
                })
                .sum()
        })
        .collect()
}
