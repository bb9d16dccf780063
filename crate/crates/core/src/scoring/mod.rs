//! RTTM interchange and diarization error rate.

mod der;
mod hungarian;
mod rttm;

pub use der::{compute_der, DerReport, DEFAULT_COLLAR_S};
pub use hungarian::{optimal_assignment, Assignment};
pub use rttm::{emit_rttm, parse_rttm, Annotation, LabeledSegment};
