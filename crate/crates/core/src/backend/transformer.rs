//! Self-attention EEND encoder (forward pass only).
//!
//! Linear input projection, `layers` post-norm encoder blocks (multi-head
//! self-attention and a ReLU feed-forward, each wrapped in residual + layer
//! norm), then a linear head with logistic output. There is no positional
//! encoding, so the network is equivariant to frame permutations.
//!
//! Batched inference stacks the frames of all chunks into one matrix for
//! every position-wise layer and runs attention per chunk. Each output row of
//! a linear layer is accumulated in the same order regardless of how many
//! rows are stacked, so batched and single-chunk results are bit-identical.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{read_f32_le, sidecar_path, write_f32_le, FeatureSequence};

use super::{Backend, BackendConfig, BatchFailure, PosteriorMatrix};

const LN_EPS: f32 = 1e-5;
/// Row-block size for threaded linear layers.
const PAR_ROWS: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
struct Linear {
    in_dim: usize,
    out_dim: usize,
    /// Row-major `in_dim x out_dim`.
    weight: Vec<f32>,
    bias: Vec<f32>,
}

impl Linear {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self { in_dim, out_dim, weight: vec![0.0; in_dim * out_dim], bias: vec![0.0; out_dim] }
    }

    fn xavier(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let a = (6.0 / (in_dim + out_dim) as f32).sqrt();
        let weight = (0..in_dim * out_dim).map(|_| rng.random_range(-a..a)).collect();
        Self { in_dim, out_dim, weight, bias: vec![0.0; out_dim] }
    }

    /// `out = x * W + b` for `rows` stacked input rows. Large inputs are
    /// split into row blocks across threads.
    fn forward(&self, x: &[f32], rows: usize, out: &mut [f32]) {
        if rows < 2 * PAR_ROWS {
            return self.forward_serial(x, rows, out);
        }
        out.par_chunks_mut(PAR_ROWS * self.out_dim)
            .zip(x.par_chunks(PAR_ROWS * self.in_dim))
            .for_each(|(o, xs)| self.forward_serial(xs, o.len() / self.out_dim, o));
    }

    fn forward_serial(&self, x: &[f32], rows: usize, out: &mut [f32]) {
        let (k_dim, n) = (self.in_dim, self.out_dim);
        debug_assert_eq!(x.len(), rows * k_dim);
        debug_assert_eq!(out.len(), rows * n);
        let bias = &self.bias[..n];

        // Four rows share each weight-row load; per-element accumulation order
        // is bias, then k = 0, 1, ... in both the blocked and remainder paths.
        let mut blocks = out.chunks_exact_mut(4 * n);
        let mut r = 0;
        for block in &mut blocks {
            let (o0, rest) = block.split_at_mut(n);
            let (o1, rest) = rest.split_at_mut(n);
            let (o2, o3) = rest.split_at_mut(n);
            o0.copy_from_slice(bias);
            o1.copy_from_slice(bias);
            o2.copy_from_slice(bias);
            o3.copy_from_slice(bias);
            let xs = &x[r * k_dim..(r + 4) * k_dim];
            for k in 0..k_dim {
                let w = &self.weight[k * n..(k + 1) * n];
                let (a0, a1, a2, a3) = (xs[k], xs[k_dim + k], xs[2 * k_dim + k], xs[3 * k_dim + k]);
                for j in 0..n {
                    let wj = w[j];
                    o0[j] += a0 * wj;
                    o1[j] += a1 * wj;
                    o2[j] += a2 * wj;
                    o3[j] += a3 * wj;
                }
            }
            r += 4;
        }
        for o in blocks.into_remainder().chunks_exact_mut(n) {
            o.copy_from_slice(bias);
            let xs = &x[r * k_dim..(r + 1) * k_dim];
            for (k, &a) in xs.iter().enumerate() {
                let w = &self.weight[k * n..(k + 1) * n];
                for j in 0..n {
                    o[j] += a * w[j];
                }
            }
            r += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct LayerNorm {
    gamma: Vec<f32>,
    beta: Vec<f32>,
}

impl LayerNorm {
    fn identity(dim: usize) -> Self {
        Self { gamma: vec![1.0; dim], beta: vec![0.0; dim] }
    }

    fn apply(&self, x: &mut [f32]) {
        let dim = self.gamma.len();
        for row in x.chunks_exact_mut(dim) {
            let mean = row.iter().sum::<f32>() / dim as f32;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / dim as f32;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            for ((v, g), b) in row.iter_mut().zip(&self.gamma).zip(&self.beta) {
                *v = (*v - mean) * inv * g + b;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct EncoderLayer {
    qkv: Linear,
    proj: Linear,
    norm1: LayerNorm,
    ff1: Linear,
    ff2: Linear,
    norm2: LayerNorm,
}

/// Weights and shape of the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformerWeights {
    pub input_dim: usize,
    pub hidden: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub s_local: usize,
    input: Linear,
    layers: Vec<EncoderLayer>,
    output: Linear,
}

#[derive(Debug, Serialize, Deserialize)]
struct WeightsHeader {
    input_dim: usize,
    hidden: usize,
    heads: usize,
    layers: usize,
    ffn_dim: usize,
    s_local: usize,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Offset in f32 elements from the start of the data file.
    offset: usize,
}

impl TransformerWeights {
    fn build(config: &BackendConfig, mut linear: impl FnMut(usize, usize) -> Linear) -> Result<Self> {
        config.validate()?;
        let h = config.hidden;
        let input = linear(config.input_dim, h);
        let layers = (0..config.layers)
            .map(|_| EncoderLayer {
                qkv: linear(h, 3 * h),
                proj: linear(h, h),
                norm1: LayerNorm::identity(h),
                ff1: linear(h, config.ffn_dim),
                ff2: linear(config.ffn_dim, h),
                norm2: LayerNorm::identity(h),
            })
            .collect();
        let output = linear(h, config.s_local);
        Ok(Self {
            input_dim: config.input_dim,
            hidden: h,
            heads: config.heads,
            ffn_dim: config.ffn_dim,
            s_local: config.s_local,
            input,
            layers,
            output,
        })
    }

    /// Xavier-uniform weights from `config.seed`; zero biases, unit layer-norm gains.
    pub fn random(config: &BackendConfig) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        Self::build(config, |i, o| Linear::xavier(i, o, &mut rng))
    }

    pub fn zeros(config: &BackendConfig) -> Result<Self> {
        Self::build(config, Linear::zeros)
    }

    pub fn layers(&self) -> usize {
        self.layers.len()
    }

    pub fn set_output_bias(&mut self, bias: &[f32]) -> Result<()> {
        if bias.len() != self.s_local {
            return Err(Error::Dimension { expected: self.s_local, found: bias.len() });
        }
        self.output.bias.copy_from_slice(bias);
        Ok(())
    }

    fn tensors(&self) -> Vec<(String, Vec<usize>, &[f32])> {
        fn push_linear<'a>(out: &mut Vec<(String, Vec<usize>, &'a [f32])>, name: String, l: &'a Linear) {
            out.push((format!("{name}.weight"), vec![l.in_dim, l.out_dim], &l.weight[..]));
            out.push((format!("{name}.bias"), vec![l.out_dim], &l.bias[..]));
        }
        let mut out = Vec::new();
        push_linear(&mut out, "input".into(), &self.input);
        for (i, layer) in self.layers.iter().enumerate() {
            push_linear(&mut out, format!("layers.{i}.qkv"), &layer.qkv);
            push_linear(&mut out, format!("layers.{i}.proj"), &layer.proj);
            out.push((format!("layers.{i}.norm1.gamma"), vec![self.hidden], &layer.norm1.gamma[..]));
            out.push((format!("layers.{i}.norm1.beta"), vec![self.hidden], &layer.norm1.beta[..]));
            push_linear(&mut out, format!("layers.{i}.ff1"), &layer.ff1);
            push_linear(&mut out, format!("layers.{i}.ff2"), &layer.ff2);
            out.push((format!("layers.{i}.norm2.gamma"), vec![self.hidden], &layer.norm2.gamma[..]));
            out.push((format!("layers.{i}.norm2.beta"), vec![self.hidden], &layer.norm2.beta[..]));
        }
        push_linear(&mut out, "output".into(), &self.output);
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Vec<f32>)> {
        let mut out: Vec<(String, &mut Vec<f32>)> = Vec::new();
        fn push<'a>(out: &mut Vec<(String, &'a mut Vec<f32>)>, name: String, l: &'a mut Linear) {
            out.push((format!("{name}.weight"), &mut l.weight));
            out.push((format!("{name}.bias"), &mut l.bias));
        }
        push(&mut out, "input".into(), &mut self.input);
        for (i, layer) in self.layers.iter_mut().enumerate() {
            push(&mut out, format!("layers.{i}.qkv"), &mut layer.qkv);
            push(&mut out, format!("layers.{i}.proj"), &mut layer.proj);
            out.push((format!("layers.{i}.norm1.gamma"), &mut layer.norm1.gamma));
            out.push((format!("layers.{i}.norm1.beta"), &mut layer.norm1.beta));
            push(&mut out, format!("layers.{i}.ff1"), &mut layer.ff1);
            push(&mut out, format!("layers.{i}.ff2"), &mut layer.ff2);
            out.push((format!("layers.{i}.norm2.gamma"), &mut layer.norm2.gamma));
            out.push((format!("layers.{i}.norm2.beta"), &mut layer.norm2.beta));
        }
        push(&mut out, "output".into(), &mut self.output);
        out
    }

    /// Writes raw little-endian f32 tensors to `path` and a JSON header to `<path>.json`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut data = Vec::new();
        let mut entries = Vec::new();
        for (name, shape, values) in self.tensors() {
            entries.push(TensorEntry { name, shape, offset: data.len() });
            data.extend_from_slice(values);
        }
        write_f32_le(path, &data)?;
        let header = WeightsHeader {
            input_dim: self.input_dim,
            hidden: self.hidden,
            heads: self.heads,
            layers: self.layers.len(),
            ffn_dim: self.ffn_dim,
            s_local: self.s_local,
            tensors: entries,
        };
        fs::write(sidecar_path(path), serde_json::to_string_pretty(&header)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let header: WeightsHeader = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
        let data = read_f32_le(path)?;
        let config = BackendConfig {
            s_local: header.s_local,
            input_dim: header.input_dim,
            layers: header.layers,
            heads: header.heads,
            hidden: header.hidden,
            ffn_dim: header.ffn_dim,
            ..BackendConfig::default()
        };
        let mut weights = Self::zeros(&config)?;
        let mut index: HashMap<&str, &TensorEntry> = HashMap::new();
        for e in &header.tensors {
            index.insert(e.name.as_str(), e);
        }
        for (name, target) in weights.tensors_mut() {
            let entry = index
                .get(name.as_str())
                .ok_or_else(|| Error::Shape(format!("weight file lacks tensor {name}")))?;
            let count: usize = entry.shape.iter().product();
            if count != target.len() {
                return Err(Error::Shape(format!(
                    "tensor {name} has {count} values, model expects {}",
                    target.len()
                )));
            }
            let src = data
                .get(entry.offset..entry.offset + count)
                .ok_or_else(|| Error::Shape(format!("tensor {name} runs past end of data")))?;
            target.copy_from_slice(src);
        }
        Ok(weights)
    }

    fn check_finite(&self) -> Result<()> {
        if self.tensors().iter().all(|(_, _, v)| v.iter().all(|x| x.is_finite())) {
            Ok(())
        } else {
            Err(Error::NonFinite("transformer weights"))
        }
    }

    /// Runs the encoder over chunks stacked row-wise. `lens[i]` is the frame
    /// count of chunk `i`; `x` holds `sum(lens) x input_dim` values.
    fn forward_stacked(&self, x: &[f32], lens: &[usize]) -> Vec<f32> {
        let total: usize = lens.iter().sum();
        let h = self.hidden;
        let mut hid = vec![0.0f32; total * h];
        self.input.forward(x, total, &mut hid);

        let mut qkv = vec![0.0f32; total * 3 * h];
        let mut ctx = vec![0.0f32; total * h];
        let mut tmp = vec![0.0f32; total * h];
        let mut ff = vec![0.0f32; total * self.ffn_dim];
        for layer in &self.layers {
            layer.qkv.forward(&hid, total, &mut qkv);
            attention_stacked(&qkv, lens, h, self.heads, &mut ctx);
            layer.proj.forward(&ctx, total, &mut tmp);
            add_assign(&mut hid, &tmp);
            layer.norm1.apply(&mut hid);

            layer.ff1.forward(&hid, total, &mut ff);
            ff.iter_mut().for_each(|v| *v = v.max(0.0));
            layer.ff2.forward(&ff, total, &mut tmp);
            add_assign(&mut hid, &tmp);
            layer.norm2.apply(&mut hid);
        }

        let mut out = vec![0.0f32; total * self.s_local];
        self.output.forward(&hid, total, &mut out);
        out.iter_mut().for_each(|v| *v = 1.0 / (1.0 + (-*v).exp()));
        out
    }
}

fn add_assign(acc: &mut [f32], x: &[f32]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}

/// Fixed-order dot product with eight partial sums.
fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0f32;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

fn attention_stacked(qkv: &[f32], lens: &[usize], hidden: usize, heads: usize, ctx: &mut [f32]) {
    let mut parts = Vec::with_capacity(lens.len());
    let (mut q_rest, mut c_rest) = (qkv, &mut ctx[..]);
    for &len in lens {
        let (q, qr) = q_rest.split_at(len * 3 * hidden);
        let (c, cr) = std::mem::take(&mut c_rest).split_at_mut(len * hidden);
        parts.push((q, c, len));
        q_rest = qr;
        c_rest = cr;
    }
    if parts.len() == 1 {
        let (q, c, len) = parts.pop().expect("one part");
        attention_chunk(q, len, hidden, heads, c);
    } else {
        parts
            .into_par_iter()
            .for_each(|(q, c, len)| attention_chunk(q, len, hidden, heads, c));
    }
}

/// Multi-head scaled dot-product self-attention within one chunk.
fn attention_chunk(qkv: &[f32], len: usize, hidden: usize, heads: usize, ctx: &mut [f32]) {
    let d = hidden / heads;
    let scale = 1.0 / (d as f32).sqrt();
    let stride = 3 * hidden;
    let mut kt = vec![0.0f32; d * len];
    let mut vt = vec![0.0f32; d * len];
    let mut scores = vec![0.0f32; len];
    for head in 0..heads {
        let off = head * d;
        for j in 0..len {
            let row = &qkv[j * stride..(j + 1) * stride];
            for c in 0..d {
                kt[c * len + j] = row[hidden + off + c];
                vt[c * len + j] = row[2 * hidden + off + c];
            }
        }
        for i in 0..len {
            let q = &qkv[i * stride + off..i * stride + off + d];
            scores.fill(0.0);
            for c in 0..d {
                let qc = q[c] * scale;
                let krow = &kt[c * len..(c + 1) * len];
                for (s, k) in scores.iter_mut().zip(krow) {
                    *s += qc * k;
                }
            }
            let max = scores.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            let mut sum = 0.0f32;
            for s in scores.iter_mut() {
                *s = (*s - max).exp();
                sum += *s;
            }
            let out = &mut ctx[i * hidden + off..i * hidden + off + d];
            for (c, o) in out.iter_mut().enumerate() {
                *o = dot(&scores, &vt[c * len..(c + 1) * len]) / sum;
            }
        }
    }
}

/// Transformer EEND backend. Immutable after construction.
#[derive(Debug, Clone)]
pub struct TransformerBackend {
    weights: TransformerWeights,
}

impl TransformerBackend {
    pub fn new(weights: TransformerWeights) -> Result<Self> {
        weights.check_finite()?;
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &TransformerWeights {
        &self.weights
    }

    fn check_chunk(&self, chunk: &FeatureSequence) -> Result<()> {
        if chunk.is_empty() {
            return Err(Error::EmptyChunk);
        }
        if chunk.dim() != self.weights.input_dim {
            return Err(Error::Dimension { expected: self.weights.input_dim, found: chunk.dim() });
        }
        if !chunk.as_flat().iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("input features"));
        }
        Ok(())
    }
}

impl Backend for TransformerBackend {
    fn name(&self) -> String {
        let w = &self.weights;
        format!("transformer(L={}, H={}, heads={}, ff={})", w.layers(), w.hidden, w.heads, w.ffn_dim)
    }

    fn s_local(&self) -> usize {
        self.weights.s_local
    }

    fn infer(&self, chunk: &FeatureSequence) -> Result<PosteriorMatrix> {
        self.check_chunk(chunk)?;
        let out = self.weights.forward_stacked(chunk.as_flat(), &[chunk.len()]);
        PosteriorMatrix::new(chunk.len(), self.weights.s_local, out)
    }

    fn infer_batch(&self, chunks: &[&FeatureSequence]) -> Result<Vec<PosteriorMatrix>, BatchFailure> {
        for (index, c) in chunks.iter().enumerate() {
            self.check_chunk(c).map_err(|error| BatchFailure { index, error })?;
        }
        let lens: Vec<usize> = chunks.iter().map(|c| c.len()).collect();
        let mut x = Vec::with_capacity(lens.iter().sum::<usize>() * self.weights.input_dim);
        for c in chunks {
            x.extend_from_slice(c.as_flat());
        }
        let out = self.weights.forward_stacked(&x, &lens);
        let s = self.weights.s_local;
        let mut offset = 0;
        lens.iter()
            .enumerate()
            .map(|(index, &len)| {
                let part = out[offset * s..(offset + len) * s].to_vec();
                offset += len;
                PosteriorMatrix::new(len, s, part).map_err(|error| BatchFailure { index, error })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> BackendConfig {
        BackendConfig { input_dim: 5, hidden: 16, heads: 4, layers: 2, ffn_dim: 24, s_local: 3, seed: 11, ..Default::default() }
    }

    fn chunk(len: usize, dim: usize, phase: f32) -> FeatureSequence {
        let data = (0..len * dim).map(|i| ((i as f32) * 0.37 + phase).sin()).collect();
        FeatureSequence::from_flat(dim, data, 0.1, 0.0).unwrap()
    }

    #[test]
    fn linear_matches_naive_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut l = Linear::xavier(7, 5, &mut rng);
        l.bias = (0..5).map(|v| v as f32 * 0.1).collect();
        for rows in [1usize, 3, 4, 9] {
            let x: Vec<f32> = (0..rows * 7).map(|v| (v as f32 * 0.13).cos()).collect();
            let mut out = vec![0.0; rows * 5];
            l.forward(&x, rows, &mut out);
            for r in 0..rows {
                for j in 0..5 {
                    let want: f64 = l.bias[j] as f64
                        + (0..7).map(|k| x[r * 7 + k] as f64 * l.weight[k * 5 + j] as f64).sum::<f64>();
                    assert!((out[r * 5 + j] as f64 - want).abs() < 1e-5);
                }
            }
        }
    }

    #[test]
    fn zero_weights_give_logistic_bias() {
        let mut w = TransformerWeights::zeros(&small()).unwrap();
        w.set_output_bias(&[0.0, 1.0, -2.0]).unwrap();
        let b = TransformerBackend::new(w).unwrap();
        let p = b.infer(&chunk(6, 5, 0.3)).unwrap();
        let want = [0.5f32, 1.0 / (1.0 + (-1.0f32).exp()), 1.0 / (1.0 + 2.0f32.exp())];
        for t in 0..6 {
            assert_eq!(p.row(t), &want);
        }
    }

    #[test]
    fn shape_and_errors() {
        let b = TransformerBackend::new(TransformerWeights::random(&small()).unwrap()).unwrap();
        let p = b.infer(&chunk(10, 5, 0.0)).unwrap();
        assert_eq!((p.rows(), p.cols()), (10, 3));
        assert!(matches!(b.infer(&chunk(0, 5, 0.0)), Err(Error::EmptyChunk)));
        assert!(matches!(b.infer(&chunk(4, 6, 0.0)), Err(Error::Dimension { expected: 5, found: 6 })));
        let bad = FeatureSequence::from_flat(5, vec![f32::NAN; 5], 0.1, 0.0).unwrap();
        assert!(matches!(b.infer(&bad), Err(Error::NonFinite(_))));

        let mut w = TransformerWeights::random(&small()).unwrap();
        w.output.weight[0] = f32::INFINITY;
        assert!(matches!(TransformerBackend::new(w), Err(Error::NonFinite(_))));
    }

    #[test]
    fn batch_equals_single_bitwise() {
        let b = TransformerBackend::new(TransformerWeights::random(&small()).unwrap()).unwrap();
        let chunks: Vec<FeatureSequence> = [1usize, 4, 7, 13, 2].iter().map(|&n| chunk(n, 5, n as f32)).collect();
        let refs: Vec<&FeatureSequence> = chunks.iter().collect();
        let batched = b.infer_batch(&refs).unwrap();
        for (c, p) in chunks.iter().zip(&batched) {
            assert_eq!(&b.infer(c).unwrap(), p);
        }
    }

    #[test]
    fn threaded_rows_match_serial() {
        let b = TransformerBackend::new(TransformerWeights::random(&small()).unwrap()).unwrap();
        let chunks: Vec<FeatureSequence> = (0..9).map(|i| chunk(300 + i, 5, i as f32)).collect();
        let refs: Vec<&FeatureSequence> = chunks.iter().collect();
        let batched = b.infer_batch(&refs).unwrap();
        for (c, p) in chunks.iter().zip(&batched) {
            assert_eq!(&b.infer(c).unwrap(), p);
        }
    }

    #[test]
    fn frame_permutation_equivariance() {
        let b = TransformerBackend::new(TransformerWeights::random(&small()).unwrap()).unwrap();
        let c = chunk(17, 5, 0.4);
        let order: Vec<usize> = (0..17).map(|i| (i * 5 + 3) % 17).collect();
        let permuted = b.infer(&c.gather(&order)).unwrap();
        let base = b.infer(&c).unwrap().permute_rows(&order);
        for (x, y) in permuted.as_flat().iter().zip(base.as_flat()) {
            assert!((x - y).abs() <= 1e-5);
            assert!((0.0..=1.0).contains(x));
        }
    }

    #[test]
    fn batch_reports_failing_index() {
        let b = TransformerBackend::new(TransformerWeights::random(&small()).unwrap()).unwrap();
        let good = chunk(3, 5, 0.0);
        let bad = chunk(0, 5, 0.0);
        let err = b.infer_batch(&[&good, &bad]).unwrap_err();
        assert_eq!(err.index, 1);
    }

    #[test]
    fn weights_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.f32");
        let w = TransformerWeights::random(&small()).unwrap();
        w.save(&path).unwrap();
        let back = TransformerWeights::load(&path).unwrap();
        assert_eq!(back, w);
        let spec = format!("transformer:{}", path.display()).parse().unwrap();
        let backend = super::super::build_backend(&spec, &BackendConfig::default()).unwrap();
        assert_eq!(backend.s_local(), 3);
    }
}
