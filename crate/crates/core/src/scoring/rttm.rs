use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSegment {
    pub speaker: String,
    pub start_s: f64,
    pub end_s: f64,
}

impl LabeledSegment {
    pub fn new(speaker: impl Into<String>, start_s: f64, end_s: f64) -> Self {
        Self { speaker: speaker.into(), start_s, end_s }
    }

    pub fn duration(&self) -> f64 {
        self.end_s - self.start_s
    }
}

/// Speaker-labeled segments of one recording, kept sorted by
/// `(start, speaker, end)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub recording_id: String,
    segments: Vec<LabeledSegment>,
}

impl Annotation {
    pub fn new(recording_id: impl Into<String>, mut segments: Vec<LabeledSegment>) -> Result<Self> {
        for s in &segments {
            if !(s.start_s.is_finite() && s.end_s.is_finite()) || s.start_s >= s.end_s {
                return Err(Error::Shape(format!("segment {} [{}, {}) is empty or invalid", s.speaker, s.start_s, s.end_s)));
            }
        }
        segments.sort_by(|a, b| {
            a.start_s.total_cmp(&b.start_s).then_with(|| a.speaker.cmp(&b.speaker)).then(a.end_s.total_cmp(&b.end_s))
        });
        Ok(Self { recording_id: recording_id.into(), segments })
    }

    pub fn empty(recording_id: impl Into<String>) -> Self {
        Self { recording_id: recording_id.into(), segments: Vec::new() }
    }

    pub fn segments(&self) -> &[LabeledSegment] {
        &self.segments
    }

    /// Distinct speaker names in first-appearance order.
    pub fn speakers(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for s in &self.segments {
            if !out.contains(&s.speaker.as_str()) {
                out.push(&s.speaker);
            }
        }
        out
    }

    pub fn end_time(&self) -> f64 {
        self.segments.iter().map(|s| s.end_s).fold(0.0, f64::max)
    }

    /// Same-speaker segments that touch or overlap are joined.
    pub fn merged(&self) -> Annotation {
        let mut by_speaker: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
        for s in &self.segments {
            match by_speaker.iter_mut().find(|(name, _)| *name == s.speaker) {
                Some((_, v)) => v.push((s.start_s, s.end_s)),
                None => by_speaker.push((s.speaker.clone(), vec![(s.start_s, s.end_s)])),
            }
        }
        let mut segments = Vec::new();
        for (name, mut spans) in by_speaker {
            spans.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut cur = spans[0];
            for &(s, e) in &spans[1..] {
                if s <= cur.1 {
                    cur.1 = cur.1.max(e);
                } else {
                    segments.push(LabeledSegment::new(name.clone(), cur.0, cur.1));
                    cur = (s, e);
                }
            }
            segments.push(LabeledSegment::new(name, cur.0, cur.1));
        }
        Annotation::new(self.recording_id.clone(), segments).expect("merging keeps segments valid")
    }
}

fn millis(field: &str, line: usize, what: &str) -> Result<i64> {
    let v: f64 = field.parse().map_err(|_| Error::Rttm { line, msg: format!("bad {what} {field:?}") })?;
    if !v.is_finite() {
        return Err(Error::Rttm { line, msg: format!("bad {what} {field:?}") });
    }
    Ok((v * 1000.0).round() as i64)
}

/// Parses SPEAKER lines, grouping by recording in first-appearance order.
/// Blank lines, `#` comments and other record types are skipped. Times are
/// rounded to milliseconds.
pub fn parse_rttm(text: &str) -> Result<Vec<Annotation>> {
    let mut groups: Vec<(String, Vec<LabeledSegment>)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if fields.is_empty() || fields[0].starts_with('#') {
            continue;
        }
        if fields[0] != "SPEAKER" {
            if fields[0].chars().all(|c| c.is_ascii_uppercase() || c == '-') {
                continue;
            }
            return Err(Error::Rttm { line, msg: format!("unknown record type {:?}", fields[0]) });
        }
        if !(9..=10).contains(&fields.len()) {
            return Err(Error::Rttm { line, msg: format!("expected 10 fields, found {}", fields.len()) });
        }
        let start = millis(fields[3], line, "onset")?;
        let dur = millis(fields[4], line, "duration")?;
        if start < 0 || dur <= 0 {
            return Err(Error::Rttm { line, msg: "onset must be >= 0 and duration > 0".into() });
        }
        let seg = LabeledSegment::new(fields[7], start as f64 / 1000.0, (start + dur) as f64 / 1000.0);
        match groups.iter_mut().find(|(rec, _)| rec == fields[1]) {
            Some((_, v)) => v.push(seg),
            None => groups.push((fields[1].to_string(), vec![seg])),
        }
    }
    groups.into_iter().map(|(rec, segs)| Annotation::new(rec, segs)).collect()
}

pub fn emit_rttm(annotations: &[Annotation]) -> String {
    let mut out = String::new();
    for a in annotations {
        for s in a.segments() {
            let start = (s.start_s * 1000.0).round() as i64;
            let dur = (s.end_s * 1000.0).round() as i64 - start;
            writeln!(
                out,
                "SPEAKER {} 1 {}.{:03} {}.{:03} <NA> <NA> {} <NA> <NA>",
                a.recording_id,
                start / 1000,
                start % 1000,
                dur / 1000,
                dur % 1000,
                s.speaker
            )
            .expect("writing to a String");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_the_format_example() {
        let a = parse_rttm("SPEAKER rec1 1 0.000 10.000 <NA> <NA> A <NA> <NA>\n").unwrap();
        assert_eq!(a.len(), 1);
        assert_eq!(a[0].recording_id, "rec1");
        assert_eq!(a[0].segments(), &[LabeledSegment::new("A", 0.0, 10.0)]);
    }

    #[test]
    fn short_line_reports_its_number() {
        let text = "SPEAKER r 1 0.0 1.0 <NA> <NA> A <NA> <NA>\n\nSPEAKER r 1 0.0 1.0\n";
        match parse_rttm(text) {
            Err(Error::Rttm { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(parse_rttm("SPEAKER r 1 x 1.0 <NA> <NA> A <NA> <NA>").is_err());
        assert!(parse_rttm("SPEAKER r 1 1.0 0.0 <NA> <NA> A <NA> <NA>").is_err());
    }

    #[test]
    fn emits_sorted_lines() {
        let a = Annotation::new(
            "r",
            vec![LabeledSegment::new("B", 1.5, 2.0), LabeledSegment::new("A", 1.5, 3.25), LabeledSegment::new("A", 0.0, 1.0)],
        )
        .unwrap();
        assert_eq!(
            emit_rttm(&[a]),
            "SPEAKER r 1 0.000 1.000 <NA> <NA> A <NA> <NA>\n\
             SPEAKER r 1 1.500 1.750 <NA> <NA> A <NA> <NA>\n\
             SPEAKER r 1 1.500 0.500 <NA> <NA> B <NA> <NA>\n"
        );
    }

    #[test]
    fn merge_joins_touching_segments() {
        let a = Annotation::new(
            "r",
            vec![LabeledSegment::new("A", 0.0, 1.0), LabeledSegment::new("A", 1.0, 2.0), LabeledSegment::new("A", 3.0, 4.0)],
        )
        .unwrap();
        assert_eq!(a.merged().segments(), &[LabeledSegment::new("A", 0.0, 2.0), LabeledSegment::new("A", 3.0, 4.0)]);
    }

    proptest! {
        #[test]
        fn round_trip(segs in proptest::collection::vec((0u8..4, 0i64..100_000, 1i64..20_000), 0..20)) {
            let segments = segs
                .iter()
                .map(|&(s, start, dur)| LabeledSegment::new(format!("spk{s}"), start as f64 / 1000.0, (start + dur) as f64 / 1000.0))
                .collect();
            let a = Annotation::new("rec", segments).unwrap();
            let parsed = parse_rttm(&emit_rttm(std::slice::from_ref(&a))).unwrap();
            if a.segments().is_empty() {
                prop_assert!(parsed.is_empty());
            } else {
                prop_assert_eq!(parsed, vec![a]);
            }
        }
    }
}
