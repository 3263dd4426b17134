//! Deterministic synthetic speech corpus.
//!
//! Every speaker is a set of three formant resonators plus a pitch range.
//! Neutral speech (NS) uses the speaker's base formants; laughter (L) scales
//! them up by `laughter_scale` and is chopped into bursts; speech-laugh (SL)
//! sits in between. Each utterance is a function of `(seed, utterance_id)`
//! only, so corpora are byte-identical regardless of generation order.

mod corpus;
mod labels;
mod manifest;
mod profile;
mod segment;

pub use corpus::{generate_corpus, planned_utterances, synth_utterance, CorpusConfig, PlannedUtterance};
pub use labels::{CompositeLabel, ContentLabel, DatasetTag, SplitRole};
pub use manifest::{CorpusManifest, ManifestEntry, MANIFEST_FILE};
pub use profile::{LaughterStyle, SpeakerPopulation, SpeakerProfile};
pub use segment::{synth_segment, SynthParams};

/// Output sample rate of every generated file.
pub const SAMPLE_RATE: u32 = 8000;
