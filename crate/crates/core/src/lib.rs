//! Speech-therapy session toolkit.
//!
//! The crate is organised around the life of a recorded therapy session:
//!
//! * [`codec`] reads and writes the recorder's IMA-ADPCM / PCM16 WAV files,
//! * [`segmentation`] finds the operator's tone markers and cuts the child's
//!   utterances out of the marked regions,
//! * [`fcl`] parses and evaluates Fuzzy Control Language knowledge bases,
//! * [`therapy`] turns evaluation scores into exercise suggestions and adapts
//!   rule weights from therapist corrections,
//! * [`datastore`] persists children, sessions, evaluations and exercises.

pub mod codec;
pub mod datastore;
pub mod fcl;
pub mod segmentation;
pub mod therapy;

pub use codec::{AdpcmBlock, AdpcmState, CodecError, PcmBuffer, WavFormat};
pub use fcl::{FuzzySystem, InferenceTrace};
pub use segmentation::{MarkerEvent, MarkerKind, Segment, SegmenterConfig};
