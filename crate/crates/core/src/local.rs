//! Local step: per-window posteriors, binarization, median smoothing, speaker
//! detection and window-local segments.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::backend::{Backend, LabelMatrix, PosteriorMatrix};
use crate::error::{Error, Result};
use crate::features::Window;

/// Binarization thresholds for a threshold sweep.
pub const THRESHOLD_SWEEP: [f32; 5] = [0.3, 0.4, 0.5, 0.6, 0.7];

/// A speaker slot found active inside one window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalSpeaker {
    pub window_index: usize,
    pub slot: usize,
    /// Window-local frame indices, strictly increasing.
    pub active_frames: Vec<usize>,
    /// Frames where this slot is the only active one, or all active frames
    /// when too few of those exist (see `used_overlap_fallback`).
    pub nonoverlap_frames: Vec<usize>,
    pub used_overlap_fallback: bool,
}

impl LocalSpeaker {
    pub fn key(&self) -> SpeakerKey {
        SpeakerKey::Local { window: self.window_index, slot: self.slot }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SpeakerKey {
    Local { window: usize, slot: usize },
    Global(usize),
}

impl fmt::Display for SpeakerKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpeakerKey::Local { window, slot } => write!(f, "w{window}s{slot}"),
            SpeakerKey::Global(id) => write!(f, "spk{id}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub speaker: SpeakerKey,
    pub start_s: f64,
    pub end_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalConfig {
    pub threshold: f32,
    pub median_len: usize,
    pub min_nonoverlap: usize,
}

impl Default for LocalConfig {
    fn default() -> Self {
        Self { threshold: 0.5, median_len: 11, min_nonoverlap: 10 }
    }
}

impl LocalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!("threshold {} outside (0, 1)", self.threshold)));
        }
        if self.median_len == 0 || self.median_len.is_multiple_of(2) {
            return Err(Error::Config(format!("median length {} must be odd", self.median_len)));
        }
        Ok(())
    }
}

/// Sliding median of a 0/1 sequence with edge replication (a majority vote).
pub fn median_filter_binary(values: &[u8], len: usize) -> Vec<u8> {
    let n = values.len();
    if n == 0 || len <= 1 {
        return values.to_vec();
    }
    let half = len / 2;
    let at = |i: isize| values[i.clamp(0, n as isize - 1) as usize] as usize;
    let mut ones: usize = (-(half as isize)..=half as isize).map(at).sum();
    let mut out = Vec::with_capacity(n);
    for t in 0..n as isize {
        out.push(u8::from(ones > half));
        ones = ones + at(t + half as isize + 1) - at(t - half as isize);
    }
    out
}

/// `1` where `posterior >= threshold`, then a per-slot median filter.
pub fn binarize_and_filter(posteriors: &PosteriorMatrix, threshold: f32, median_len: usize) -> Result<LabelMatrix> {
    LocalConfig { threshold, median_len, min_nonoverlap: 0 }.validate()?;
    let (rows, cols) = (posteriors.rows(), posteriors.cols());
    let mut labels = LabelMatrix::zeros(rows, cols);
    for s in 0..cols {
        let raw: Vec<u8> = (0..rows).map(|t| u8::from(posteriors.get(t, s) >= threshold)).collect();
        for (t, v) in median_filter_binary(&raw, median_len).into_iter().enumerate() {
            labels.set(t, s, v == 1);
        }
    }
    Ok(labels)
}

/// One [`LocalSpeaker`] per slot with at least one active frame.
pub fn detect_local_speakers(labels: &LabelMatrix, window_index: usize, min_nonoverlap: usize) -> Vec<LocalSpeaker> {
    (0..labels.cols())
        .filter_map(|slot| {
            let active: Vec<usize> = (0..labels.rows()).filter(|&t| labels.get(t, slot)).collect();
            if active.is_empty() {
                return None;
            }
            let solo: Vec<usize> = active.iter().copied().filter(|&t| labels.active_count(t) == 1).collect();
            let fallback = solo.len() < min_nonoverlap;
            Some(LocalSpeaker {
                window_index,
                slot,
                nonoverlap_frames: if fallback { active.clone() } else { solo },
                active_frames: active,
                used_overlap_fallback: fallback,
            })
        })
        .collect()
}

/// Maximal runs of active frames per slot; frame `t` covers
/// `[start + t * fp, start + (t + 1) * fp)`.
pub fn segments_from_labels(labels: &LabelMatrix, window_index: usize, window_start_s: f64, frame_period: f64) -> Vec<Segment> {
    let mut out = Vec::new();
    let time = |t: usize| window_start_s + t as f64 * frame_period;
    for slot in 0..labels.cols() {
        let mut run_start = None;
        for t in 0..=labels.rows() {
            let on = t < labels.rows() && labels.get(t, slot);
            match (on, run_start) {
                (true, None) => run_start = Some(t),
                (false, Some(s)) => {
                    out.push(Segment {
                        speaker: SpeakerKey::Local { window: window_index, slot },
                        start_s: time(s),
                        end_s: time(t),
                    });
                    run_start = None;
                }
                _ => {}
            }
        }
    }
    out
}

/// Local-step result for one window.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalWindow {
    pub index: usize,
    pub start_s: f64,
    pub len_frames: usize,
    pub labels: LabelMatrix,
    pub speakers: Vec<LocalSpeaker>,
    pub segments: Vec<Segment>,
}

pub fn process_window(backend: &dyn Backend, window: &Window, config: &LocalConfig) -> Result<LocalWindow> {
    let posteriors = backend.infer(&window.features)?;
    if posteriors.rows() != window.length_frames() {
        return Err(Error::Shape(format!(
            "backend returned {} rows for a {}-frame window",
            posteriors.rows(),
            window.length_frames()
        )));
    }
    let labels = binarize_and_filter(&posteriors, config.threshold, config.median_len)?;
    let speakers = detect_local_speakers(&labels, window.index, config.min_nonoverlap);
    let segments = segments_from_labels(&labels, window.index, window.start_time(), window.features.frame_period());
    Ok(LocalWindow {
        index: window.index,
        start_s: window.start_time(),
        len_frames: window.length_frames(),
        labels,
        speakers,
        segments,
    })
}

/// Runs the local step over every window, in window order.
pub fn run_local(backend: &dyn Backend, windows: &[Window], config: &LocalConfig) -> Result<Vec<LocalWindow>> {
    config.validate()?;
    windows.iter().map(|w| process_window(backend, w, config)).collect()
}
