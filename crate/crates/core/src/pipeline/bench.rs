use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{diarize, PipelineConfig};
use crate::backend::{Backend, BackendSpec};
use crate::error::{Error, Result};
use crate::global::FrameSelectStrategy;
use crate::scoring::{compute_der, DEFAULT_COLLAR_S};
use crate::simulate::{scenario_to_inputs, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RtfReport {
    pub wall_s: f64,
    pub rtf: f64,
}

/// Times `run` and divides by the audio duration.
pub fn measure_rtf<T>(run: impl FnOnce() -> Result<T>, audio_duration_s: f64) -> Result<(T, RtfReport)> {
    if !(audio_duration_s > 0.0 && audio_duration_s.is_finite()) {
        return Err(Error::Config(format!("audio duration must be > 0, got {audio_duration_s}")));
    }
    let start = Instant::now();
    let value = run()?;
    // Clock granularity can report zero for trivial runs; keep RTF positive.
    let wall_s = start.elapsed().as_secs_f64().max(1e-9);
    Ok((value, RtfReport { wall_s, rtf: wall_s / audio_duration_s }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub frame_select: FrameSelectStrategy,
    pub batch_size: usize,
}

/// Grid file: the backend, optional base pipeline settings and one row per
/// (strategy, batch size) configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchGrid {
    pub backend: BackendSpec,
    #[serde(default)]
    pub base: Option<PipelineConfig>,
    pub rows: Vec<BenchRow>,
}

impl BenchGrid {
    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig { backend: self.backend.clone(), ..self.base.clone().unwrap_or_default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub strategy: String,
    pub batch_size: usize,
    pub rtf: f64,
    pub der: f64,
}

/// One result per grid row. RTF is total wall time over total audio; DER is
/// pooled over scenarios (total error time over total scored speech).
pub fn bench_sweep(
    rows: &[BenchRow],
    scenarios: &[Scenario],
    base: &PipelineConfig,
    backend: &dyn Backend,
) -> Result<Vec<BenchResult>> {
    if scenarios.is_empty() {
        return Ok(Vec::new());
    }
    let keep_identities = base.backend == BackendSpec::Oracle;
    let inputs: Vec<_> = scenarios.iter().map(|s| scenario_to_inputs(s, keep_identities)).collect();
    let audio: f64 = inputs.iter().map(|(f, _)| f.duration()).sum();
    rows.iter()
        .map(|row| {
            let cfg = PipelineConfig { frame_strategy: row.frame_select, batch_size: row.batch_size, ..base.clone() };
            let (hyps, rtf) = measure_rtf(
                || inputs.iter().map(|(f, _)| diarize(f, &cfg, backend).map(|(a, _)| a)).collect::<Result<Vec<_>>>(),
                audio,
            )?;
            let (mut errors, mut scored) = (0.0, 0.0);
            for ((_, reference), mut hyp) in inputs.iter().zip(hyps) {
                hyp.recording_id = reference.recording_id.clone();
                let r = compute_der(reference, &hyp, DEFAULT_COLLAR_S, true)?;
                errors += r.miss_s + r.falarm_s + r.confusion_s;
                scored += r.scored_speech_s;
            }
            Ok(BenchResult { strategy: row.frame_select.label(), batch_size: row.batch_size, rtf: rtf.rtf, der: errors / scored })
        })
        .collect()
}

/// CSV with the fixed header `strategy,batch_size,rtf,der`.
pub fn write_bench_csv<W: Write>(results: &[BenchResult], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(["strategy", "batch_size", "rtf", "der"])?;
    for r in results {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
