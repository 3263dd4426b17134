//! i-vector speaker recognition, end to end.
//!
//! The pipeline runs from 8 kHz PCM audio through an energy VAD and a
//! 60-dimensional MFCC front-end, a diagonal-covariance GMM-UBM, a
//! total-variability (i-vector) extractor, LDA + WCCN post-processing and a
//! two-covariance PLDA back-end, down to pooled-trial EER evaluation.
//!
//! [`harness`] ties the stages together into an enrollment-composition
//! experiment on a deterministic synthetic corpus ([`synth`]): one system is
//! enrolled on neutral speech only, the other on neutral speech plus
//! laughter, and both are evaluated on seven test sets mixing neutral speech,
//! laughter and speech-laugh.
//!
//! ```no_run
//! use ivl_core::harness::{run_experiment, ExperimentConfig};
//!
//! let mut config = ExperimentConfig::with_seed(1);
//! config.output_dir = "out".into();
//! let report = run_experiment(&config, 4)?;
//! println!("{}", report.to_markdown());
//! # Ok::<(), ivl_core::Error>(())
//! ```

pub mod backend;
pub mod binio;
pub mod error;
pub mod eval;
pub mod frontend;
pub mod gmm;
pub mod harness;
pub mod linalg;
pub mod synth;
pub mod tv;

pub use error::{Error, Result};

/// Derives a 64-bit seed from a parent seed and a textual key.
///
/// Used wherever work is split into independently seeded units (utterances,
/// speakers) so that generation order never influences the output.
pub fn derive_seed(seed: u64, key: &str) -> u64 {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(key.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}
