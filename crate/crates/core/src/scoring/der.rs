use std::fmt;

use serde::{Deserialize, Serialize};

use super::hungarian::optimal_assignment;
use super::rttm::Annotation;
use crate::error::{Error, Result};

pub const DEFAULT_COLLAR_S: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerReport {
    pub miss_s: f64,
    pub falarm_s: f64,
    pub confusion_s: f64,
    pub scored_speech_s: f64,
    pub der: f64,
}

impl DerReport {
    pub fn table(&self) -> String {
        let pct = |v: f64| 100.0 * v / self.scored_speech_s;
        format!(
            "{:<16}{:>12}{:>10}\n{:<16}{:>12.3}{:>10}\n{:<16}{:>12.3}{:>9.2}%\n{:<16}{:>12.3}{:>9.2}%\n{:<16}{:>12.3}{:>9.2}%\n{:<16}{:>12}{:>9.2}%\n",
            "component", "seconds", "share",
            "scored speech", self.scored_speech_s, "",
            "missed", self.miss_s, pct(self.miss_s),
            "false alarm", self.falarm_s, pct(self.falarm_s),
            "confusion", self.confusion_s, pct(self.confusion_s),
            "DER", "", 100.0 * self.der,
        )
    }
}

impl fmt::Display for DerReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.table())
    }
}

/// Elementary interval between consecutive event boundaries with the active
/// speaker indices on each side.
struct Piece {
    dur: f64,
    reference: Vec<usize>,
    hypothesis: Vec<usize>,
}

fn active_at(ann: &Annotation, names: &[&str], t: f64) -> Vec<usize> {
    let mut v: Vec<usize> = ann
        .segments()
        .iter()
        .filter(|s| s.start_s <= t && t < s.end_s)
        .map(|s| names.iter().position(|n| *n == s.speaker).expect("speaker listed"))
        .collect();
    v.sort_unstable();
    v.dedup();
    v
}

fn covered(spans: &[(f64, f64)], t: f64) -> bool {
    spans.iter().any(|&(a, b)| a <= t && t < b)
}

/// DER by exact interval sweep.
///
/// Same-speaker segments that touch are merged first. Everything within
/// `collar_s` of a reference boundary is excluded; with `score_overlap`
/// false, regions where the reference has two or more speakers are excluded
/// too. One global reference-to-hypothesis speaker mapping maximizing mapped
/// overlap over the scored regions is used throughout.
pub fn compute_der(reference: &Annotation, hypothesis: &Annotation, collar_s: f64, score_overlap: bool) -> Result<DerReport> {
    if reference.recording_id != hypothesis.recording_id {
        return Err(Error::RecordingMismatch {
            reference: reference.recording_id.clone(),
            hypothesis: hypothesis.recording_id.clone(),
        });
    }
    if !(collar_s >= 0.0 && collar_s.is_finite()) {
        return Err(Error::Config(format!("collar must be >= 0, got {collar_s}")));
    }
    let (reference, hypothesis) = (reference.merged(), hypothesis.merged());
    let ref_names = reference.speakers();
    let hyp_names = hypothesis.speakers();

    let mut excluded: Vec<(f64, f64)> = Vec::new();
    if collar_s > 0.0 {
        for s in reference.segments() {
            excluded.push((s.start_s - collar_s, s.start_s + collar_s));
            excluded.push((s.end_s - collar_s, s.end_s + collar_s));
        }
    }

    let mut bounds: Vec<f64> = reference
        .segments()
        .iter()
        .chain(hypothesis.segments())
        .flat_map(|s| [s.start_s, s.end_s])
        .chain(excluded.iter().flat_map(|&(a, b)| [a, b]))
        .collect();
    bounds.sort_by(f64::total_cmp);
    bounds.dedup();

    let pieces: Vec<Piece> = bounds
        .windows(2)
        .filter_map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            if covered(&excluded, mid) {
                return None;
            }
            let reference = active_at(&reference, &ref_names, mid);
            if !score_overlap && reference.len() > 1 {
                return None;
            }
            let hypothesis = active_at(&hypothesis, &hyp_names, mid);
            if reference.is_empty() && hypothesis.is_empty() {
                return None;
            }
            Some(Piece { dur: w[1] - w[0], reference, hypothesis })
        })
        .collect();

    let mut overlap = vec![vec![0.0f64; hyp_names.len()]; ref_names.len()];
    for p in &pieces {
        for &r in &p.reference {
            for &h in &p.hypothesis {
                overlap[r][h] += p.dur;
            }
        }
    }
    let mapping = optimal_assignment(&overlap).mapping;

    let (mut miss, mut falarm, mut confusion, mut scored) = (0.0, 0.0, 0.0, 0.0);
    for p in &pieces {
        let (nr, nh) = (p.reference.len(), p.hypothesis.len());
        let correct = p
            .reference
            .iter()
            .filter(|&&r| mapping[r].is_some_and(|h| p.hypothesis.contains(&h)))
            .count();
        scored += p.dur * nr as f64;
        miss += p.dur * nr.saturating_sub(nh) as f64;
        falarm += p.dur * nh.saturating_sub(nr) as f64;
        confusion += p.dur * (nr.min(nh) - correct) as f64;
    }
    if scored <= 0.0 {
        return Err(Error::UndefinedDer);
    }
    Ok(DerReport {
        miss_s: miss,
        falarm_s: falarm,
        confusion_s: confusion,
        scored_speech_s: scored,
        der: (miss + falarm + confusion) / scored,
    })
}
