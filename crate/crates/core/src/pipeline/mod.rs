//! End-to-end orchestration: windows, local step, global step, clustering,
//! relabeling and RTTM-ready output.

mod bench;

use std::collections::HashMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use bench::{bench_sweep, measure_rtf, write_bench_csv, BenchGrid, BenchResult, BenchRow, RtfReport};

use crate::backend::{Backend, BackendConfig, BackendSpec};
use crate::clustering::{spectral_cluster, spectral_cluster_rows, ClusterAssignment, SpeakerCount};
use crate::error::{Error, Result, Stage};
use crate::features::{split_windows, FeatureSequence};
use crate::global::{assemble_affinity, build_pair_chunks, run_global_with_workers, AffinityMatrix, FrameSelectStrategy};
use crate::local::{process_window, LocalConfig, LocalSpeaker, LocalWindow, SpeakerKey, THRESHOLD_SWEEP};
use crate::scoring::{compute_der, Annotation, DerReport, LabeledSegment};

pub const DEFAULT_RECORDING_ID: &str = "rec";

/// Transformer shape and oracle smoothing used when building a backend from
/// a [`PipelineConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub hidden: usize,
    pub ffn_dim: usize,
    pub epsilon_oracle: f32,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let b = BackendConfig::default();
        Self {
            input_dim: b.input_dim,
            layers: b.layers,
            heads: b.heads,
            hidden: b.hidden,
            ffn_dim: b.ffn_dim,
            epsilon_oracle: b.epsilon_oracle,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub window_frames: usize,
    pub threshold: f32,
    pub median_len: usize,
    pub s_local: usize,
    pub min_nonoverlap: usize,
    pub frame_strategy: FrameSelectStrategy,
    pub batch_size: usize,
    pub speakers: SpeakerCount,
    pub backend: BackendSpec,
    pub model: ModelConfig,
    /// Seeds random frame selection and transformer initialization.
    pub seed: u64,
    /// Threads for the local and global steps; results do not depend on it.
    pub workers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            window_frames: 300,
            threshold: 0.5,
            median_len: 11,
            s_local: 3,
            min_nonoverlap: 10,
            frame_strategy: FrameSelectStrategy::All,
            batch_size: 500,
            speakers: SpeakerCount::default(),
            backend: BackendSpec::Oracle,
            model: ModelConfig::default(),
            seed: 0,
            workers: 1,
        }
    }
}

impl PipelineConfig {
    pub fn local(&self) -> LocalConfig {
        LocalConfig { threshold: self.threshold, median_len: self.median_len, min_nonoverlap: self.min_nonoverlap }
    }

    pub fn backend_config(&self) -> BackendConfig {
        let m = &self.model;
        BackendConfig {
            s_local: self.s_local,
            input_dim: m.input_dim,
            layers: m.layers,
            heads: m.heads,
            hidden: m.hidden,
            ffn_dim: m.ffn_dim,
            seed: self.seed,
            epsilon_oracle: m.epsilon_oracle,
        }
    }

    pub fn build_backend(&self) -> Result<Box<dyn Backend>> {
        crate::backend::build_backend(&self.backend, &self.backend_config())
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_frames == 0 {
            return Err(Error::Config("window length must be >= 1 frame".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if self.s_local == 0 {
            return Err(Error::Config("s_local must be >= 1".into()));
        }
        if matches!(self.speakers, SpeakerCount::Oracle(0) | SpeakerCount::Auto { k_max: 0 }) {
            return Err(Error::Config("speaker count must be >= 1".into()));
        }
        self.local().validate()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub windowing_s: f64,
    pub local_s: f64,
    pub global_s: f64,
    pub clustering_s: f64,
    pub output_s: f64,
}

impl StageTimings {
    pub fn total_s(&self) -> f64 {
        self.windowing_s + self.local_s + self.global_s + self.clustering_s + self.output_s
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// `W`
    pub windows: usize,
    pub speakers_per_window: Vec<usize>,
    /// `C`
    pub pair_chunks: usize,
    /// `S_Global`
    pub global_speakers: usize,
    /// `M`
    pub clusters: usize,
    pub overlap_fallback_speakers: usize,
    pub global_step_skipped: bool,
    pub timings: StageTimings,
}

/// Everything [`diarize_detailed`] computes along the way.
#[derive(Debug, Clone)]
pub struct DiarizationOutput {
    pub annotation: Annotation,
    pub diagnostics: Diagnostics,
    pub local: Vec<LocalWindow>,
    pub affinity: Option<AffinityMatrix>,
    pub assignment: ClusterAssignment,
}

fn parallel_map<T: Sync, U: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> Result<U> + Sync) -> Result<Vec<U>> {
    if workers <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    let per = items.len().div_ceil(workers);
    let parts: Vec<Result<Vec<U>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(per)
            .map(|part| scope.spawn(|| part.iter().map(&f).collect::<Result<Vec<U>>>()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(items.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

fn round_ms(t: f64) -> f64 {
    (t * 1000.0).round() / 1000.0
}

pub fn speaker_name(cluster: usize) -> String {
    format!("spk{cluster}")
}

pub fn diarize(features: &FeatureSequence, config: &PipelineConfig, backend: &dyn Backend) -> Result<(Annotation, Diagnostics)> {
    diarize_detailed(features, config, backend).map(|o| (o.annotation, o.diagnostics))
}

/// Runs the full pipeline. Errors carry the stage they came from.
pub fn diarize_detailed(features: &FeatureSequence, config: &PipelineConfig, backend: &dyn Backend) -> Result<DiarizationOutput> {
    config.validate()?;
    if backend.s_local() != config.s_local {
        return Err(Error::Config(format!(
            "backend has {} output slots but the pipeline expects s_local = {}",
            backend.s_local(),
            config.s_local
        )));
    }
    let mut diag = Diagnostics::default();

    let clock = Instant::now();
    let windows = split_windows(features, config.window_frames).map_err(|e| e.at(Stage::Windowing))?;
    diag.windows = windows.len();
    diag.timings.windowing_s = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let local_cfg = config.local();
    let local = parallel_map(&windows, config.workers, |w| process_window(backend, w, &local_cfg)).map_err(|e| e.at(Stage::Local))?;
    let speakers: Vec<Vec<LocalSpeaker>> = local.iter().map(|w| w.speakers.clone()).collect();
    diag.speakers_per_window = speakers.iter().map(Vec::len).collect();
    diag.global_speakers = diag.speakers_per_window.iter().sum();
    diag.overlap_fallback_speakers = speakers.iter().flatten().filter(|s| s.used_overlap_fallback).count();
    diag.timings.local_s = clock.elapsed().as_secs_f64();

    let index_map: Vec<SpeakerKey> = speakers.iter().flatten().map(LocalSpeaker::key).collect();
    let occupied_windows = diag.speakers_per_window.iter().filter(|&&c| c > 0).count();
    let skip_global = diag.global_speakers <= 1 || diag.windows == 1 || occupied_windows <= 1;
    diag.global_step_skipped = skip_global;

    let clock = Instant::now();
    let affinity = if skip_global {
        None
    } else {
        let chunks = build_pair_chunks(&windows, &speakers, config.frame_strategy.with_seed(config.seed))
            .map_err(|e| e.at(Stage::Global))?;
        diag.pair_chunks = chunks.len();
        let scores = run_global_with_workers(backend, &chunks, config.batch_size, config.workers)
            .map_err(|e| e.at(Stage::Global))?;
        Some(assemble_affinity(&scores, &speakers).map_err(|e| e.at(Stage::Global))?)
    };
    diag.timings.global_s = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let n = index_map.len();
    let count = match config.speakers {
        SpeakerCount::Oracle(m) => SpeakerCount::Oracle(m.min(n)),
        auto => auto,
    };
    let assignment = match (&affinity, count) {
        (Some(a), count) => spectral_cluster(a, count).map_err(|e| e.at(Stage::Clustering))?,
        // Degenerate paths keep local slots, except when that would exceed
        // an oracle speaker count.
        (None, SpeakerCount::Oracle(m)) if n > m => {
            let identity: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
            spectral_cluster_rows(&identity, SpeakerCount::Oracle(m)).map_err(|e| e.at(Stage::Clustering))?
        }
        (None, _) => {
            let labels: Vec<usize> = index_map
                .iter()
                .map(|k| match k {
                    SpeakerKey::Local { slot, .. } => *slot,
                    SpeakerKey::Global(id) => *id,
                })
                .collect();
            let num_clusters = labels.iter().collect::<std::collections::HashSet<_>>().len();
            ClusterAssignment { labels, num_clusters }
        }
    };
    diag.clusters = assignment.num_clusters;
    diag.timings.clustering_s = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let cluster_of: HashMap<SpeakerKey, usize> = index_map.iter().copied().zip(assignment.labels.iter().copied()).collect();
    let end_limit = round_ms(features.start_time() + features.duration());
    let mut segments = Vec::new();
    for w in &local {
        for seg in &w.segments {
            let cluster = *cluster_of
                .get(&seg.speaker)
                .ok_or_else(|| Error::Shape(format!("segment speaker {} was not detected", seg.speaker)).at(Stage::Output))?;
            let (start, end) = (round_ms(seg.start_s), round_ms(seg.end_s).min(end_limit));
            if start < end {
                segments.push(LabeledSegment::new(speaker_name(cluster), start, end));
            }
        }
    }
    let annotation = Annotation::new(DEFAULT_RECORDING_ID, segments).map_err(|e| e.at(Stage::Output))?.merged();
    diag.timings.output_s = clock.elapsed().as_secs_f64();

    Ok(DiarizationOutput { annotation, diagnostics: diag, local, affinity, assignment })
}

/// DER at each threshold of the standard sweep.
pub fn threshold_sweep(
    features: &FeatureSequence,
    reference: &Annotation,
    config: &PipelineConfig,
    backend: &dyn Backend,
    collar_s: f64,
) -> Result<Vec<(f32, DerReport)>> {
    THRESHOLD_SWEEP
        .iter()
        .map(|&threshold| {
            let cfg = PipelineConfig { threshold, ..config.clone() };
            let (mut hyp, _) = diarize(features, &cfg, backend)?;
            hyp.recording_id = reference.recording_id.clone();
            Ok((threshold, compute_der(reference, &hyp, collar_s, true)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::OracleBackend;
    use crate::scoring::emit_rttm;
    use crate::simulate::{generate_scenario, SimConfig};

    fn seq(ids: &[&[u32]]) -> FeatureSequence {
        FeatureSequence::from_flat(2, vec![0.0; ids.len() * 2], 0.1, 0.0)
            .unwrap()
            .with_identities(ids.iter().map(|s| s.to_vec()).collect())
            .unwrap()
    }

    fn oracle() -> OracleBackend {
        OracleBackend::new(3, 0.01).unwrap()
    }

    #[test]
    fn single_window_keeps_slots() {
        let mut ids: Vec<&[u32]> = vec![&[7]; 100];
        ids.extend(vec![&[] as &[u32]; 50]);
        ids.extend(vec![&[3u32] as &[u32]; 100]);
        let cfg = PipelineConfig::default();
        let out = diarize_detailed(&seq(&ids), &cfg, &oracle()).unwrap();
        assert!(out.diagnostics.global_step_skipped);
        assert_eq!(out.diagnostics.windows, 1);
        let segs = out.annotation.segments();
        assert_eq!(segs, &[LabeledSegment::new("spk0", 0.0, 10.0), LabeledSegment::new("spk1", 15.0, 25.0)]);
    }

    #[test]
    fn oracle_count_caps_degenerate_path() {
        let mut ids: Vec<&[u32]> = vec![&[1]; 100];
        ids.extend(vec![&[2u32] as &[u32]; 100]);
        let cfg = PipelineConfig { speakers: SpeakerCount::Oracle(1), ..Default::default() };
        let (ann, d) = diarize(&seq(&ids), &cfg, &oracle()).unwrap();
        assert_eq!(d.clusters, 1);
        assert_eq!(ann.speakers(), vec!["spk0"]);
    }

    #[test]
    fn empty_input() {
        let f = FeatureSequence::new(2, 0.1, 0.0).unwrap();
        let (ann, d) = diarize(&f, &PipelineConfig::default(), &oracle()).unwrap();
        assert!(ann.segments().is_empty());
        assert_eq!((d.windows, d.clusters), (0, 0));
    }

    #[test]
    fn two_windows_swap_slots_but_keep_identity() {
        // Window 0: A then B. Window 1: B then A. Slots are assigned by first
        // appearance, so they are swapped between windows.
        let mut ids: Vec<&[u32]> = vec![&[1]; 150];
        ids.extend(vec![&[2u32] as &[u32]; 150]);
        ids.extend(vec![&[2u32] as &[u32]; 150]);
        ids.extend(vec![&[1u32] as &[u32]; 150]);
        let (ann, d) = diarize(&seq(&ids), &PipelineConfig::default(), &oracle()).unwrap();
        assert_eq!(d.pair_chunks, 4);
        assert_eq!(d.clusters, 2);
        assert_eq!(
            ann.segments(),
            &[LabeledSegment::new("spk0", 0.0, 15.0), LabeledSegment::new("spk1", 15.0, 45.0), LabeledSegment::new("spk0", 45.0, 60.0)]
        );
    }

    #[test]
    fn backend_slot_mismatch_is_rejected() {
        let cfg = PipelineConfig { s_local: 4, ..Default::default() };
        assert!(matches!(diarize(&seq(&[&[1]]), &cfg, &oracle()), Err(Error::Config(_))));
    }

    #[test]
    fn errors_carry_the_stage() {
        let mut ids: Vec<&[u32]> = vec![&[1, 2, 3, 4]; 20];
        ids.extend(vec![&[1u32] as &[u32]; 20]);
        match diarize(&seq(&ids), &PipelineConfig::default(), &oracle()) {
            Err(Error::Stage { stage: Stage::Local, .. }) => {}
            other => panic!("expected a local-stage error, got {other:?}"),
        }
    }

    #[test]
    fn oracle_end_to_end_two_speakers() {
        let s = generate_scenario(&SimConfig { n_speakers: 2, duration_s: 300.0, seed: 1, ..Default::default() }).unwrap();
        let (mut hyp, d) = diarize(&s.features, &PipelineConfig::default(), &oracle()).unwrap();
        hyp.recording_id = s.reference.recording_id.clone();
        let der = compute_der(&s.reference, &hyp, 0.25, true).unwrap();
        assert_eq!(d.clusters, 2);
        assert!(der.der < 0.02, "{der:?}");
    }

    #[test]
    fn output_invariants_and_determinism() {
        let s = generate_scenario(&SimConfig { n_speakers: 3, duration_s: 200.0, seed: 8, ..Default::default() }).unwrap();
        let cfg = PipelineConfig { speakers: SpeakerCount::Oracle(3), workers: 3, batch_size: 7, ..Default::default() };
        let (a, _) = diarize(&s.features, &cfg, &oracle()).unwrap();
        let (b, _) = diarize(&s.features, &PipelineConfig { workers: 1, batch_size: 500, ..cfg.clone() }, &oracle()).unwrap();
        assert_eq!(emit_rttm(std::slice::from_ref(&a)), emit_rttm(&[b]));
        assert!(a.speakers().len() <= 3);
        for spk in a.speakers() {
            let segs: Vec<_> = a.segments().iter().filter(|x| x.speaker == spk).collect();
            assert!(segs.windows(2).all(|w| w[0].end_s < w[1].start_s));
        }
        assert!(a.segments().iter().all(|x| x.start_s >= 0.0 && x.end_s <= 200.0));
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = PipelineConfig {
            frame_strategy: FrameSelectStrategy::RandomN { n: 64, seed: 3 },
            speakers: SpeakerCount::Oracle(4),
            backend: BackendSpec::TransformerRandom(5),
            ..Default::default()
        };
        let back: PipelineConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        let partial: PipelineConfig = serde_json::from_str(r#"{"batch_size": 8, "speakers": "auto:4"}"#).unwrap();
        assert_eq!(partial.batch_size, 8);
        assert_eq!(partial.speakers, SpeakerCount::Auto { k_max: 4 });
        assert_eq!(partial.window_frames, 300);
    }
}
