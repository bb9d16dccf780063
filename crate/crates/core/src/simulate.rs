//! Synthetic multi-speaker conversations in feature space.
//!
//! Each speaker alternates pauses and utterances independently, so overlap
//! arises naturally. A frame's feature vector is the mean of the active
//! speakers' signatures plus Gaussian noise. Times are snapped to the frame
//! grid so the reference RTTM and the per-frame identities agree exactly.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{read_features, write_features, FeatureSequence, SpeakerId};
use crate::scoring::{emit_rttm, parse_rttm, Annotation, LabeledSegment};

pub const SIGNATURE_RADIUS: f64 = 3.0;
pub const MIN_SIGNATURE_DISTANCE: f64 = 2.0;
pub const MAX_REJECTIONS: usize = 1000;

/// Mean pause length for a speaker count when none is configured.
pub fn default_beta(n_speakers: usize) -> f64 {
    if n_speakers <= 2 {
        2.0
    } else {
        9.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n_speakers: usize,
    pub duration_s: f64,
    /// Mean pause in seconds; `None` picks [`default_beta`].
    pub beta_s: Option<f64>,
    pub utt_min_s: f64,
    pub utt_max_s: f64,
    pub signature_noise: f64,
    pub feature_dim: usize,
    pub frame_period_s: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_speakers: 2,
            duration_s: 300.0,
            beta_s: None,
            utt_min_s: 1.0,
            utt_max_s: 5.0,
            signature_noise: 0.3,
            feature_dim: 23,
            frame_period_s: 0.1,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn beta(&self) -> f64 {
        self.beta_s.unwrap_or_else(|| default_beta(self.n_speakers))
    }

    pub fn recording_id(&self) -> String {
        format!("sim{}_{}", self.n_speakers, self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(1..=6).contains(&self.n_speakers) {
            return bad(format!("speaker count {} outside 1..=6", self.n_speakers));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return bad(format!("duration {} must be > 0", self.duration_s));
        }
        if !(self.beta() > 0.0 && self.beta().is_finite()) {
            return bad(format!("beta {} must be > 0", self.beta()));
        }
        if !(self.utt_min_s > 0.0 && self.utt_min_s <= self.utt_max_s && self.utt_max_s.is_finite()) {
            return bad(format!("utterance bounds [{}, {}] invalid", self.utt_min_s, self.utt_max_s));
        }
        if !(self.signature_noise >= 0.0 && self.signature_noise.is_finite()) {
            return bad(format!("noise {} must be >= 0", self.signature_noise));
        }
        if self.feature_dim == 0 {
            return bad("feature dimension must be >= 1".into());
        }
        if !(self.frame_period_s > 0.0) {
            return bad(format!("frame period {} must be > 0", self.frame_period_s));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: SimConfig,
    pub reference: Annotation,
    pub features: FeatureSequence,
    pub speaker_signatures: Vec<Vec<f32>>,
}

impl Scenario {
    pub fn n_frames(&self) -> usize {
        self.features.len()
    }

    /// Fraction of speech time with two or more active speakers.
    pub fn overlap_fraction(&self) -> f64 {
        let ids = self.features.hidden_identities().expect("scenarios carry identities");
        let speech = ids.iter().filter(|s| !s.is_empty()).count();
        let overlap = ids.iter().filter(|s| s.len() > 1).count();
        if speech == 0 {
            0.0
        } else {
            overlap as f64 / speech as f64
        }
    }
}

fn signatures(cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(cfg.n_speakers);
    for k in 0..cfg.n_speakers {
        let mut accepted = None;
        for _ in 0..MAX_REJECTIONS {
            let v: Vec<f64> = (0..cfg.feature_dim).map(|_| normal.sample(rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                continue;
            }
            let v: Vec<f64> = v.iter().map(|x| x * SIGNATURE_RADIUS / norm).collect();
            let far = out.iter().all(|o| {
                o.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() >= MIN_SIGNATURE_DISTANCE
            });
            if far {
                accepted = Some(v);
                break;
            }
        }
        out.push(accepted.ok_or_else(|| {
            Error::Simulation(format!("no signature for speaker {k} after {MAX_REJECTIONS} tries"))
        })?);
    }
    Ok(out)
}

/// Frame-index utterance spans `[start, end)` for one speaker.
fn timeline(cfg: &SimConfig, n_frames: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let pause = Exp::new(1.0 / cfg.beta()).expect("positive rate");
    let utt = Uniform::new_inclusive(cfg.utt_min_s, cfg.utt_max_s).expect("ordered bounds");
    let to_frame = |t: f64| ((t / cfg.frame_period_s).round() as usize).min(n_frames);
    let mut spans = Vec::new();
    let mut t = pause.sample(rng);
    while t < cfg.duration_s {
        let end = t + utt.sample(rng);
        let (a, b) = (to_frame(t), to_frame(end));
        if a < b {
            spans.push((a, b));
        }
        t = end + pause.sample(rng);
    }
    spans
}

fn frame_time(frame: usize, period: f64) -> f64 {
    (frame as f64 * period * 1000.0).round() / 1000.0
}

/// Deterministic given `config.seed`.
pub fn generate_scenario(config: &SimConfig) -> Result<Scenario> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let sigs = signatures(config, &mut rng)?;
    let n_frames = (config.duration_s / config.frame_period_s + 1e-9).floor() as usize;

    let mut identities: Vec<Vec<SpeakerId>> = vec![Vec::new(); n_frames];
    let mut segments = Vec::new();
    for k in 0..config.n_speakers {
        let spans = timeline(config, n_frames, &mut rng);
        // Spans can touch after snapping; join them so reference runs match
        // the identity frames.
        let mut joined: Vec<(usize, usize)> = Vec::new();
        for (a, b) in spans {
            match joined.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => joined.push((a, b)),
            }
        }
        for &(a, b) in &joined {
            for ids in &mut identities[a..b] {
                ids.push(k as SpeakerId);
            }
            segments.push(LabeledSegment::new(
                format!("S{k}"),
                frame_time(a, config.frame_period_s),
                frame_time(b, config.frame_period_s),
            ));
        }
    }

    let noise = Normal::new(0.0, config.signature_noise).map_err(|e| Error::Simulation(e.to_string()))?;
    let mut data = Vec::with_capacity(n_frames * config.feature_dim);
    for ids in &identities {
        for d in 0..config.feature_dim {
            let mean = if ids.is_empty() {
                0.0
            } else {
                ids.iter().map(|&k| sigs[k as usize][d]).sum::<f64>() / ids.len() as f64
            };
            data.push((mean + noise.sample(&mut rng)) as f32);
        }
    }
    let features = FeatureSequence::from_flat(config.feature_dim, data, config.frame_period_s, 0.0)?
        .with_identities(identities)?;
    Ok(Scenario {
        config: config.clone(),
        reference: Annotation::new(config.recording_id(), segments)?,
        features,
        speaker_signatures: sigs.iter().map(|s| s.iter().map(|&v| v as f32).collect()).collect(),
    })
}

/// Pipeline input and scoring reference. Identities are kept only for the
/// oracle backend.
pub fn scenario_to_inputs(scenario: &Scenario, keep_identities: bool) -> (FeatureSequence, Annotation) {
    let features = if keep_identities {
        scenario.features.clone()
    } else {
        scenario.features.clone().without_identities()
    };
    (features, scenario.reference.clone())
}

pub const FEATURES_FILE: &str = "features.f32";
pub const REFERENCE_FILE: &str = "reference.rttm";
pub const CONFIG_FILE: &str = "config.json";

#[derive(Serialize, Deserialize)]
struct StoredConfig {
    #[serde(flatten)]
    config: SimConfig,
    speaker_signatures: Vec<Vec<f32>>,
}

/// Writes `features.f32` (with its JSON sidecar), `reference.rttm` and
/// `config.json` into `dir`.
pub fn save_scenario(scenario: &Scenario, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_features(&dir.join(FEATURES_FILE), &scenario.features)?;
    fs::write(dir.join(REFERENCE_FILE), emit_rttm(std::slice::from_ref(&scenario.reference)))?;
    let stored = StoredConfig { config: scenario.config.clone(), speaker_signatures: scenario.speaker_signatures.clone() };
    fs::write(dir.join(CONFIG_FILE), serde_json::to_string_pretty(&stored)?)?;
    Ok(())
}

pub fn load_scenario(dir: &Path) -> Result<Scenario> {
    let stored: StoredConfig = serde_json::from_str(&fs::read_to_string(dir.join(CONFIG_FILE))?)?;
    let features = read_features(&dir.join(FEATURES_FILE))?;
    let reference = parse_rttm(&fs::read_to_string(dir.join(REFERENCE_FILE))?)?
        .into_iter()
        .next()
        .unwrap_or_else(|| Annotation::empty(stored.config.recording_id()));
    Ok(Scenario { config: stored.config, reference, features, speaker_signatures: stored.speaker_signatures })
}
