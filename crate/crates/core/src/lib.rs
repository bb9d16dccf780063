//! Embedding-free local-global EEND speaker diarization.
//!
//! Audio or features are cut into fixed windows, each diarized locally by a
//! [`Backend`]. Speakers from different windows are then compared by feeding
//! their concatenated frames back through the same backend, and the
//! resulting affinity matrix is clustered into global speakers.

pub mod backend;
pub mod clustering;
pub mod error;
pub mod features;
pub mod global;
pub mod local;
pub mod pipeline;
pub mod scoring;
pub mod simulate;

pub use backend::{Backend, BackendConfig, BackendSpec, LabelMatrix, OracleBackend, PosteriorMatrix, TransformerBackend};
pub use clustering::{ClusterAssignment, SpeakerCount};
pub use error::{Error, Result, Stage};
pub use features::{FeatureSequence, FrontendConfig, SpeakerId, Window};
pub use global::{AffinityMatrix, FrameSelectStrategy, PairChunk};
pub use pipeline::{diarize, diarize_detailed, Diagnostics, PipelineConfig};
pub use scoring::{compute_der, Annotation, DerReport, LabeledSegment};
pub use simulate::{generate_scenario, Scenario, SimConfig};
