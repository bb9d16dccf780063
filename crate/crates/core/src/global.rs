//! Global step: cross-window pairwise-speaker chunks, backend rescoring, and
//! the cannot-link constrained affinity matrix.
//!
//! Every speaker detected in window `j` is paired with every speaker of each
//! later window `k`. The pair's frames are concatenated (earlier window
//! first), passed through the backend, and the cosine similarity of the two
//! halves' mean posteriors becomes the affinity entry. Speakers that share a
//! window get affinity 0.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backend::{Backend, PosteriorMatrix};
use crate::error::{Error, Result};
use crate::features::{FeatureSequence, Window};
use crate::local::LocalSpeaker;

/// How many of a speaker's frames enter each pair chunk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FrameSelectStrategy {
    All,
    FirstN(usize),
    Subsample(usize),
    RandomN { n: usize, seed: u64 },
}

impl FrameSelectStrategy {
    /// Short name without the seed, e.g. `random:64`.
    pub fn label(&self) -> String {
        match self {
            FrameSelectStrategy::All => "all".into(),
            FrameSelectStrategy::FirstN(n) => format!("first:{n}"),
            FrameSelectStrategy::Subsample(f) => format!("sub:{f}"),
            FrameSelectStrategy::RandomN { n, .. } => format!("random:{n}"),
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        match self {
            FrameSelectStrategy::RandomN { n, .. } => FrameSelectStrategy::RandomN { n, seed },
            other => other,
        }
    }
}

impl fmt::Display for FrameSelectStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FrameSelectStrategy::RandomN { n, seed } => write!(f, "random:{n}:{seed}"),
            other => f.write_str(&other.label()),
        }
    }
}

impl FromStr for FrameSelectStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad frame selection {s:?} (all | first:N | sub:F | random:N[:SEED])"));
        let positive = |v: &str| v.parse::<usize>().ok().filter(|&n| n >= 1).ok_or_else(bad);
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["all"] => Ok(FrameSelectStrategy::All),
            ["first", n] => Ok(FrameSelectStrategy::FirstN(positive(n)?)),
            ["sub", f] => Ok(FrameSelectStrategy::Subsample(positive(f)?)),
            ["random", n] => Ok(FrameSelectStrategy::RandomN { n: positive(n)?, seed: 0 }),
            ["random", n, seed] => Ok(FrameSelectStrategy::RandomN {
                n: positive(n)?,
                seed: seed.parse().map_err(|_| bad())?,
            }),
            _ => Err(bad()),
        }
    }
}

impl Serialize for FrameSelectStrategy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FrameSelectStrategy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Applies `strategy` to an ordered frame-index list. The output stays in
/// ascending order.
pub fn select_frames(frames: &[usize], strategy: FrameSelectStrategy) -> Vec<usize> {
    match strategy {
        FrameSelectStrategy::All => frames.to_vec(),
        FrameSelectStrategy::FirstN(n) => frames[..n.min(frames.len())].to_vec(),
        FrameSelectStrategy::Subsample(f) => frames.iter().step_by(f.max(1)).copied().collect(),
        FrameSelectStrategy::RandomN { n, seed } => {
            if n >= frames.len() {
                return frames.to_vec();
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut picked: Vec<usize> = sample(&mut rng, frames.len(), n).into_iter().map(|i| frames[i]).collect();
            picked.sort_unstable();
            picked
        }
    }
}

/// Per-speaker seed so a speaker's random subset does not depend on which
/// pair requests it first.
fn speaker_seed(seed: u64, speaker: SpeakerRef) -> u64 {
    let mut z = seed ^ (speaker.window as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (speaker.slot as u64) << 48;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SpeakerRef {
    pub window: usize,
    pub slot: usize,
}

impl fmt::Display for SpeakerRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "w{}s{}", self.window, self.slot)
    }
}

impl From<&LocalSpeaker> for SpeakerRef {
    fn from(s: &LocalSpeaker) -> Self {
        SpeakerRef { window: s.window_index, slot: s.slot }
    }
}

/// The selected frames of one local speaker, shared by all chunks that use it.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerBlock {
    pub speaker: SpeakerRef,
    pub features: FeatureSequence,
    pub used_overlap_fallback: bool,
}

/// Two speakers from different windows, left from the earlier window.
/// Features are the left block followed by the right block.
#[derive(Debug, Clone)]
pub struct PairChunk {
    pub left: Arc<SpeakerBlock>,
    pub right: Arc<SpeakerBlock>,
}

impl PairChunk {
    pub fn key(&self) -> (SpeakerRef, SpeakerRef) {
        (self.left.speaker, self.right.speaker)
    }

    /// Frame count of the left part (`M`).
    pub fn boundary_m(&self) -> usize {
        self.left.features.len()
    }

    /// Frame count of the right part (`N`).
    pub fn right_count_n(&self) -> usize {
        self.right.features.len()
    }

    pub fn len(&self) -> usize {
        self.boundary_m() + self.right_count_n()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn features(&self) -> FeatureSequence {
        let mut f = self.left.features.clone();
        f.append(&self.right.features).expect("blocks share the window feature dimension");
        f
    }
}

/// Gathers each speaker's selected frames into a block.
pub fn speaker_blocks(
    windows: &[Window],
    speakers: &[Vec<LocalSpeaker>],
    strategy: FrameSelectStrategy,
) -> Result<Vec<Vec<Arc<SpeakerBlock>>>> {
    if windows.len() != speakers.len() {
        return Err(Error::Shape(format!("{} windows but {} speaker lists", windows.len(), speakers.len())));
    }
    windows
        .iter()
        .zip(speakers)
        .map(|(w, list)| {
            list.iter()
                .map(|s| {
                    let r = SpeakerRef::from(s);
                    if s.window_index != w.index {
                        return Err(Error::Shape(format!("speaker {r} listed under window {}", w.index)));
                    }
                    if s.nonoverlap_frames.is_empty() {
                        return Err(Error::Shape(format!("speaker {r} has no frames")));
                    }
                    let strategy = match strategy {
                        FrameSelectStrategy::RandomN { n, seed } => {
                            FrameSelectStrategy::RandomN { n, seed: speaker_seed(seed, r) }
                        }
                        other => other,
                    };
                    let frames = select_frames(&s.nonoverlap_frames, strategy);
                    Ok(Arc::new(SpeakerBlock {
                        speaker: r,
                        features: w.features.gather(&frames),
                        used_overlap_fallback: s.used_overlap_fallback,
                    }))
                })
                .collect()
        })
        .collect()
}

/// One chunk per cross-window speaker pair (`j < k`, every slot combination),
/// ordered by `(j, m, k, n)`.
pub fn build_pair_chunks(
    windows: &[Window],
    speakers: &[Vec<LocalSpeaker>],
    strategy: FrameSelectStrategy,
) -> Result<Vec<PairChunk>> {
    let blocks = speaker_blocks(windows, speakers, strategy)?;
    let mut chunks = Vec::with_capacity(pair_count(&blocks.iter().map(Vec::len).collect::<Vec<_>>()));
    for (j, left_window) in blocks.iter().enumerate() {
        for left in left_window {
            for right_window in &blocks[j + 1..] {
                for right in right_window {
                    chunks.push(PairChunk { left: Arc::clone(left), right: Arc::clone(right) });
                }
            }
        }
    }
    Ok(chunks)
}

/// `sum_{j<k} s_j * s_k` for per-window speaker counts.
pub fn pair_count(counts: &[usize]) -> usize {
    let total: usize = counts.iter().sum();
    let squares: usize = counts.iter().map(|c| c * c).sum();
    (total * total - squares) / 2
}

/// Upper bound `W (W - 1) / 2 * S_local^2` on the pair count.
pub fn pair_count_bound(windows: usize, s_local: usize) -> usize {
    windows * windows.saturating_sub(1) / 2 * s_local * s_local
}

/// Cosine similarity of the mean posterior rows `[0, M)` and `[M, rows)`.
/// Zero-norm means score 0.
pub fn score_pair(posteriors: &PosteriorMatrix, boundary_m: usize) -> Result<f64> {
    let rows = posteriors.rows();
    if boundary_m == 0 || boundary_m >= rows {
        return Err(Error::Boundary { boundary: boundary_m, rows });
    }
    let cols = posteriors.cols();
    let mean = |range: std::ops::Range<usize>| -> Vec<f64> {
        let n = range.len() as f64;
        let mut acc = vec![0.0f64; cols];
        for t in range {
            for (a, &p) in acc.iter_mut().zip(posteriors.row(t)) {
                *a += p as f64;
            }
        }
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    };
    let (zm, zn) = (mean(0..boundary_m), mean(boundary_m..rows));
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let (a, b) = (norm(&zm), norm(&zn));
    if a == 0.0 || b == 0.0 {
        return Ok(0.0);
    }
    let dot: f64 = zm.iter().zip(&zn).map(|(x, y)| x * y).sum();
    Ok((dot / (a * b)).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairScore {
    pub left: SpeakerRef,
    pub right: SpeakerRef,
    pub similarity: f64,
}

/// Sizes of consecutive batches covering `n` items.
pub fn batch_plan(n: usize, batch_size: usize) -> Vec<usize> {
    let b = batch_size.max(1);
    (0..n.div_ceil(b)).map(|i| b.min(n - i * b)).collect()
}

fn score_batch(backend: &dyn Backend, batch: &[PairChunk]) -> Result<Vec<PairScore>> {
    let features: Vec<FeatureSequence> = batch.iter().map(PairChunk::features).collect();
    let refs: Vec<&FeatureSequence> = features.iter().collect();
    let pair_error = |i: usize, e: Error| {
        let (l, r) = batch[i].key();
        Error::Pair { pair: format!("{l}-{r}"), source: Box::new(e) }
    };
    let posteriors = backend.infer_batch(&refs).map_err(|f| pair_error(f.index, f.error))?;
    batch
        .iter()
        .zip(&posteriors)
        .enumerate()
        .map(|(i, (chunk, p))| {
            let similarity = score_pair(p, chunk.boundary_m()).map_err(|e| pair_error(i, e))?;
            Ok(PairScore { left: chunk.left.speaker, right: chunk.right.speaker, similarity })
        })
        .collect()
}

/// Scores every chunk once, `batch_size` chunks per backend call. The result
/// is sorted by pair key and does not depend on `batch_size`.
pub fn run_global(backend: &dyn Backend, chunks: &[PairChunk], batch_size: usize) -> Result<Vec<PairScore>> {
    run_global_with_workers(backend, chunks, batch_size, 1)
}

/// [`run_global`] with `workers` threads pulling batches from a shared queue.
pub fn run_global_with_workers(
    backend: &dyn Backend,
    chunks: &[PairChunk],
    batch_size: usize,
    workers: usize,
) -> Result<Vec<PairScore>> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be >= 1".into()));
    }
    let batches: Vec<&[PairChunk]> = chunks.chunks(batch_size).collect();
    let mut scores = if workers <= 1 || batches.len() <= 1 {
        let mut all = Vec::with_capacity(chunks.len());
        for batch in &batches {
            all.extend(score_batch(backend, batch)?);
        }
        all
    } else {
        let next = AtomicUsize::new(0);
        let results: Mutex<Vec<(usize, Result<Vec<PairScore>>)>> = Mutex::new(Vec::new());
        std::thread::scope(|scope| {
            for _ in 0..workers.min(batches.len()) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(batch) = batches.get(i) else { break };
                    let r = score_batch(backend, batch);
                    results.lock().expect("result lock").push((i, r));
                });
            }
        });
        let mut results = results.into_inner().expect("result lock");
        results.sort_by_key(|(i, _)| *i);
        let mut all = Vec::with_capacity(chunks.len());
        for (_, r) in results {
            all.extend(r?);
        }
        all
    };
    scores.sort_by_key(|s| (s.left, s.right));
    Ok(scores)
}

/// Symmetric speaker affinity with cannot-link zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    dim: usize,
    entries: Vec<f64>,
    index_map: Vec<SpeakerRef>,
}

impl AffinityMatrix {
    /// Builds from explicit rows; checks symmetry, unit diagonal and range.
    pub fn from_rows(rows: &[Vec<f64>], index_map: Vec<SpeakerRef>) -> Result<Self> {
        let dim = rows.len();
        if index_map.len() != dim || rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Shape("affinity must be square and match its index map".into()));
        }
        for i in 0..dim {
            if rows[i][i] != 1.0 {
                return Err(Error::Shape(format!("affinity diagonal {i} is {}", rows[i][i])));
            }
            for j in 0..dim {
                if rows[i][j] != rows[j][i] {
                    return Err(Error::Asymmetric { row: i, col: j, diff: (rows[i][j] - rows[j][i]).abs() });
                }
                if !(0.0..=1.0).contains(&rows[i][j]) {
                    return Err(Error::Shape(format!("affinity entry {} outside [0, 1]", rows[i][j])));
                }
            }
        }
        Ok(Self { dim, entries: rows.concat(), index_map })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn index_map(&self) -> &[SpeakerRef] {
        &self.index_map
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.dim.max(1)).map(<[f64]>::to_vec).take(self.dim).collect()
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.entries
    }
}

/// Places pair scores into the affinity matrix. Speakers are indexed
/// window-major, slot order within a window.
pub fn assemble_affinity(scores: &[PairScore], speakers: &[Vec<LocalSpeaker>]) -> Result<AffinityMatrix> {
    let index_map: Vec<SpeakerRef> = speakers.iter().flatten().map(SpeakerRef::from).collect();
    let lookup: HashMap<(SpeakerRef, SpeakerRef), f64> = scores
        .iter()
        .flat_map(|s| [((s.left, s.right), s.similarity), ((s.right, s.left), s.similarity)])
        .collect();
    let dim = index_map.len();
    let mut entries = vec![0.0f64; dim * dim];
    for i in 0..dim {
        entries[i * dim + i] = 1.0;
        for j in i + 1..dim {
            let (a, b) = (index_map[i], index_map[j]);
            if a.window == b.window {
                continue;
            }
            let s = *lookup.get(&(a, b)).ok_or_else(|| Error::MissingScore(format!("{a}-{b}")))?;
            entries[i * dim + j] = s;
            entries[j * dim + i] = s;
        }
    }
    Ok(AffinityMatrix { dim, entries, index_map })
}
