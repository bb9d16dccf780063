//! Shared fixtures for the criterion benches.

use lgdiar::features::{split_windows, Window};
use lgdiar::global::{build_pair_chunks, FrameSelectStrategy, PairChunk};
use lgdiar::local::{run_local, LocalConfig};
use lgdiar::pipeline::ModelConfig;
use lgdiar::{generate_scenario, Backend, BackendSpec, PipelineConfig, SimConfig};

/// Transformer small enough that a bench iteration stays under a second.
pub fn bench_model() -> ModelConfig {
    ModelConfig { hidden: 16, heads: 4, layers: 1, ffn_dim: 32, ..ModelConfig::default() }
}

pub fn random_transformer() -> Box<dyn Backend> {
    PipelineConfig { backend: BackendSpec::TransformerRandom(0), model: bench_model(), ..Default::default() }
        .build_backend()
        .expect("random transformer")
}

/// Windows of a synthetic recording with identities stripped.
pub fn windows(n_speakers: usize, duration_s: f64, seed: u64) -> Vec<Window> {
    let s = generate_scenario(&SimConfig { n_speakers, duration_s, seed, ..Default::default() }).expect("scenario");
    split_windows(&s.features.without_identities(), 300).expect("windows")
}

/// Pair chunks built from the backend's own local decisions.
pub fn pair_chunks(backend: &dyn Backend, windows: &[Window], strategy: FrameSelectStrategy) -> Vec<PairChunk> {
    let local = run_local(backend, windows, &LocalConfig::default()).expect("local step");
    let speakers: Vec<_> = local.into_iter().map(|w| w.speakers).collect();
    build_pair_chunks(windows, &speakers, strategy).expect("pair chunks")
}
