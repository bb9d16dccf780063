use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use lgdiar::features::{extract_features, read_features, read_wav, FrontendConfig};
use lgdiar::pipeline::{bench_sweep, write_bench_csv, BenchGrid};
use lgdiar::scoring::{emit_rttm, parse_rttm};
use lgdiar::simulate::{load_scenario, save_scenario, CONFIG_FILE};
use lgdiar::{
    compute_der, diarize, Annotation, BackendSpec, FrameSelectStrategy, PipelineConfig, SimConfig, SpeakerCount,
};

#[derive(Parser)]
#[command(name = "lgdiar", version, about = "Embedding-free local-global EEND speaker diarization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scenario directory (features, reference RTTM, config).
    Simulate(SimulateArgs),
    /// Diarize a feature file or 8 kHz mono WAV and write RTTM.
    Diarize(Box<DiarizeArgs>),
    /// Score a hypothesis RTTM against a reference RTTM.
    Score(ScoreArgs),
    /// Sweep frame-selection strategies and batch sizes over scenarios, writing CSV.
    Bench(BenchArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 2)]
    speakers: usize,
    /// Duration in seconds.
    #[arg(long, default_value_t = 300.0)]
    duration: f64,
    /// Mean pause in seconds (default depends on the speaker count).
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-frame Gaussian noise around the speaker signatures.
    #[arg(long, default_value_t = 0.3)]
    noise: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DiarizeArgs {
    /// Feature file (with `.json` sidecar) or `.wav` audio.
    #[arg(long = "in")]
    input: PathBuf,
    /// JSON pipeline configuration; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// oracle | transformer:<path> | transformer:random:<seed>
    #[arg(long)]
    backend: Option<BackendSpec>,
    #[arg(long)]
    window_frames: Option<usize>,
    #[arg(long)]
    threshold: Option<f32>,
    #[arg(long)]
    median: Option<usize>,
    #[arg(long)]
    s_local: Option<usize>,
    /// all | first:N | sub:F | random:N[:SEED]
    #[arg(long)]
    frame_select: Option<FrameSelectStrategy>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// auto | auto:K | oracle:M
    #[arg(long)]
    speakers: Option<SpeakerCount>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Recording id in the RTTM (default: input file stem).
    #[arg(long)]
    recording_id: Option<String>,
    /// Output RTTM (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write pipeline diagnostics as JSON here.
    #[arg(long)]
    diagnostics: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    hyp: PathBuf,
    #[arg(long, default_value_t = 0.25)]
    collar: f64,
    /// Exclude regions where the reference has overlapping speakers.
    #[arg(long)]
    no_overlap: bool,
    /// Print the report as JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// A scenario directory, or a directory of scenario directories.
    #[arg(long)]
    scenarios: PathBuf,
    #[arg(long)]
    grid: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate(a) => simulate(a),
        Command::Diarize(a) => run_diarize(*a),
        Command::Score(a) => score(a),
        Command::Bench(a) => bench(a),
    }
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let cfg = SimConfig {
        n_speakers: a.speakers,
        duration_s: a.duration,
        beta_s: a.beta,
        signature_noise: a.noise,
        seed: a.seed,
        ..SimConfig::default()
    };
    let scenario = lgdiar::generate_scenario(&cfg)?;
    save_scenario(&scenario, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    eprintln!(
        "wrote {} frames, {} reference segments to {}",
        scenario.n_frames(),
        scenario.reference.segments().len(),
        a.out.display()
    );
    Ok(())
}

fn pipeline_config(a: &DiarizeArgs) -> Result<PipelineConfig> {
    let mut cfg: PipelineConfig = match &a.config {
        Some(p) => serde_json::from_str(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
            .with_context(|| format!("parsing {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(v) = &a.backend {
        cfg.backend = v.clone();
    }
    if let Some(v) = a.window_frames {
        cfg.window_frames = v;
    }
    if let Some(v) = a.threshold {
        cfg.threshold = v;
    }
    if let Some(v) = a.median {
        cfg.median_len = v;
    }
    if let Some(v) = a.s_local {
        cfg.s_local = v;
    }
    if let Some(v) = a.frame_select {
        cfg.frame_strategy = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.speakers {
        cfg.speakers = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.workers {
        cfg.workers = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn is_wav(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav"))
}

fn run_diarize(a: DiarizeArgs) -> Result<()> {
    let cfg = pipeline_config(&a)?;
    let features = if is_wav(&a.input) {
        let (samples, rate) = read_wav(&a.input)?;
        extract_features(&samples, rate, &FrontendConfig::default())?
    } else {
        read_features(&a.input).with_context(|| format!("reading features {}", a.input.display()))?
    };
    let features = if cfg.backend == BackendSpec::Oracle { features } else { features.without_identities() };
    let backend = cfg.build_backend()?;
    let (mut annotation, diagnostics) = diarize(&features, &cfg, backend.as_ref())?;
    annotation.recording_id = a.recording_id.clone().unwrap_or_else(|| {
        a.input.file_stem().map_or_else(|| "rec".into(), |s| s.to_string_lossy().into_owned())
    });

    let rttm = emit_rttm(std::slice::from_ref(&annotation));
    match &a.out {
        Some(p) => fs::write(p, rttm).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{rttm}"),
    }
    if let Some(p) = &a.diagnostics {
        fs::write(p, serde_json::to_string_pretty(&diagnostics)?)?;
    }
    eprintln!(
        "W={} S_Global={} C={} M={} ({:.2} s)",
        diagnostics.windows,
        diagnostics.global_speakers,
        diagnostics.pair_chunks,
        diagnostics.clusters,
        diagnostics.timings.total_s()
    );
    Ok(())
}

fn read_rttm(path: &Path) -> Result<Vec<Annotation>> {
    parse_rttm(&fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?)
        .with_context(|| format!("parsing {}", path.display()))
}

fn score(a: ScoreArgs) -> Result<()> {
    let refs = read_rttm(&a.reference)?;
    let hyps = read_rttm(&a.hyp)?;
    if refs.is_empty() {
        bail!("reference {} has no SPEAKER lines", a.reference.display());
    }
    // Single-recording files are paired even if their ids differ.
    let pairs: Vec<(Annotation, Annotation)> = if refs.len() == 1 && hyps.len() <= 1 {
        let mut hyp = hyps.into_iter().next().unwrap_or_else(|| Annotation::empty(&refs[0].recording_id));
        hyp.recording_id = refs[0].recording_id.clone();
        vec![(refs[0].clone(), hyp)]
    } else {
        refs.iter()
            .map(|r| {
                let h = hyps
                    .iter()
                    .find(|h| h.recording_id == r.recording_id)
                    .cloned()
                    .unwrap_or_else(|| Annotation::empty(&r.recording_id));
                (r.clone(), h)
            })
            .collect()
    };
    for (r, h) in &pairs {
        let report = compute_der(r, h, a.collar, !a.no_overlap)
            .with_context(|| format!("scoring recording {}", r.recording_id))?;
        if a.json {
            println!("{}", serde_json::to_string(&serde_json::json!({ "recording_id": r.recording_id, "report": report }))?);
        } else {
            println!("recording {}", r.recording_id);
            print!("{}", report.table());
        }
    }
    Ok(())
}

fn scenario_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    if root.join(CONFIG_FILE).exists() {
        return Ok(vec![root.to_path_buf()]);
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .with_context(|| format!("listing {}", root.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(CONFIG_FILE).exists())
        .collect();
    dirs.sort();
    Ok(dirs)
}

fn bench(a: BenchArgs) -> Result<()> {
    let grid: BenchGrid = serde_json::from_str(&fs::read_to_string(&a.grid).with_context(|| format!("reading {}", a.grid.display()))?)
        .with_context(|| format!("parsing {}", a.grid.display()))?;
    let scenarios = scenario_dirs(&a.scenarios)?
        .iter()
        .map(|d| load_scenario(d).with_context(|| format!("loading scenario {}", d.display())))
        .collect::<Result<Vec<_>>>()?;
    let cfg = grid.pipeline_config();
    let backend = cfg.build_backend()?;
    let results = bench_sweep(&grid.rows, &scenarios, &cfg, backend.as_ref())?;
    let file = fs::File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write_bench_csv(&results, file)?;
    eprintln!("{} rows over {} scenarios written to {}", results.len(), scenarios.len(), a.out.display());
    Ok(())
}
