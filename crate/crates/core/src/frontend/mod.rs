//! 8 kHz audio to 60-dimensional frame features.
//!
//! Per frame: pre-emphasis, Hamming window, 256-point magnitude FFT,
//! 24 mel filters over 125-3800 Hz, log, orthonormal DCT-II keeping
//! c0..c19. The 20 statics are normalised with a 3 s sliding CMVN window,
//! then deltas and double-deltas are appended. Frames rejected by the energy
//! VAD are dropped last.

mod cmvn;
mod deltas;
mod features;
mod mfcc;
mod vad;
mod wav;

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use cmvn::sliding_cmvn;
pub use deltas::{append_deltas, deltas};
pub use features::FeatureMatrix;
pub use mfcc::{dct_ii, dct_iii, frame_count, mfcc, MelFilterbank, MfccExtractor};
pub use vad::{energy_vad, frame_log_energy};
pub use wav::{decimate_by_two, read_wav, AudioBuffer};

use crate::binio;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Hamming,
    Hann,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrontendConfig {
    pub sample_rate: u32,
    pub frame_len_ms: f64,
    pub frame_shift_ms: f64,
    pub window: WindowKind,
    pub preemphasis: f64,
    pub fft_size: usize,
    pub n_mel: usize,
    pub f_low: f64,
    pub f_high: f64,
    /// Cepstra kept, c0 included.
    pub n_ceps: usize,
    pub log_floor: f64,
    pub cmvn_window_s: f64,
    pub add_deltas: bool,
    /// Frames more than this far below the loudest frame are dropped.
    pub vad_threshold_db: f64,
    /// Absolute frame energy floor in dB relative to full scale (mean square).
    pub vad_floor_db: f64,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        Self {
            sample_rate: 8000,
            frame_len_ms: 25.0,
            frame_shift_ms: 10.0,
            window: WindowKind::Hamming,
            preemphasis: 0.97,
            fft_size: 256,
            n_mel: 24,
            f_low: 125.0,
            f_high: 3800.0,
            n_ceps: 20,
            log_floor: 1e-10,
            cmvn_window_s: 3.0,
            add_deltas: true,
            vad_threshold_db: 30.0,
            vad_floor_db: -55.0,
        }
    }
}

impl FrontendConfig {
    pub fn validate(&self) -> Result<()> {
        let nyquist = self.sample_rate as f64 / 2.0;
        if !(self.f_low >= 0.0 && self.f_low < self.f_high && self.f_high <= nyquist) {
            return Err(Error::Config(format!(
                "need 0 <= f_low < f_high <= {nyquist}, got {} / {}",
                self.f_low, self.f_high
            )));
        }
        if self.n_ceps == 0 || self.n_ceps > self.n_mel {
            return Err(Error::Config(format!(
                "need 0 < n_ceps <= n_mel, got {} / {}",
                self.n_ceps, self.n_mel
            )));
        }
        if self.frame_len() == 0 || self.frame_shift() == 0 {
            return Err(Error::Config("frame length and shift must be positive".into()));
        }
        if self.fft_size < self.frame_len() || !self.fft_size.is_power_of_two() {
            return Err(Error::Config(format!(
                "fft_size {} must be a power of two >= frame length {}",
                self.fft_size,
                self.frame_len()
            )));
        }
        if !(self.log_floor > 0.0) || !(self.cmvn_window_s > 0.0) {
            return Err(Error::Config("log_floor and cmvn_window_s must be positive".into()));
        }
        Ok(())
    }

    pub fn frame_len(&self) -> usize {
        (self.frame_len_ms * self.sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn frame_shift(&self) -> usize {
        (self.frame_shift_ms * self.sample_rate as f64 / 1000.0).round() as usize
    }

    /// Centred CMVN window length in frames (301 for 3 s at 10 ms).
    pub fn cmvn_window_frames(&self) -> usize {
        let half = (self.cmvn_window_s * 1000.0 / self.frame_shift_ms / 2.0).round() as usize;
        2 * half + 1
    }

    pub fn output_dims(&self) -> usize {
        if self.add_deltas {
            3 * self.n_ceps
        } else {
            self.n_ceps
        }
    }

    /// Short stable digest of the configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(json);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Full front-end: MFCC, sliding CMVN, deltas, then VAD frame removal.
pub fn extract_features(audio: &AudioBuffer, config: &FrontendConfig) -> Result<FeatureMatrix> {
    let extractor = MfccExtractor::new(config)?;
    extractor.extract_features(audio)
}

impl MfccExtractor {
    /// See [`extract_features`].
    pub fn extract_features(&self, audio: &AudioBuffer) -> Result<FeatureMatrix> {
        let config = self.config();
        let statics = self.compute(audio)?;
        let mask = energy_vad(audio, config);
        if !mask.iter().any(|&m| m) {
            return Err(Error::NoSpeech);
        }
        let normalized = sliding_cmvn(&statics, config.cmvn_window_frames());
        let full = if config.add_deltas {
            append_deltas(&normalized)?
        } else {
            normalized
        };
        let speech = full.select_rows(&mask);
        if !speech.is_finite() {
            return Err(Error::Numerical("non-finite feature value".into()));
        }
        Ok(speech)
    }
}

const FEATURE_MAGIC: &[u8; 4] = b"IVLF";

#[derive(Debug, Serialize, Deserialize)]
struct FeatureHeader {
    version: u32,
    dims: usize,
    frames: usize,
    config_hash: String,
}

pub fn write_feature_cache(path: &Path, features: &FeatureMatrix, config: &FrontendConfig) -> Result<()> {
    let header = FeatureHeader {
        version: binio::FORMAT_VERSION,
        dims: features.dims(),
        frames: features.frames(),
        config_hash: config.hash(),
    };
    binio::write_file(path, FEATURE_MAGIC, &header, features.as_slice())
}

/// Loads a cached feature file, rejecting caches built with another config.
pub fn read_feature_cache(path: &Path, config: &FrontendConfig) -> Result<FeatureMatrix> {
    let (header, data): (FeatureHeader, _) = binio::read_file(path, FEATURE_MAGIC)?;
    if header.config_hash != config.hash() {
        return Err(Error::ModelFormat(format!(
            "{}: feature cache built with a different front-end config",
            path.display()
        )));
    }
    if data.len() != header.dims * header.frames {
        return Err(Error::ModelFormat(format!("{}: payload size mismatch", path.display())));
    }
    FeatureMatrix::from_vec(header.frames, header.dims, data)
}
