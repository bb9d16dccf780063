//! Acoustic front end: log-Mel filterbank extraction, frame decimation to the
//! EEND frame rate, fixed-length windowing, and the feature file format.
//!
//! Feature files are raw little-endian `f32` frames (row-major, `frames x dim`)
//! with a JSON sidecar at `<path>.json`:
//!
//! ```text
//! {"frames": 300, "dim": 23, "frame_period_s": 0.1, "start_time_s": 0.0}
//! ```
//!
//! Simulated scenarios additionally store `hidden_identities` in the sidecar so
//! the oracle backend can be driven from disk.

use std::f64::consts::PI;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ground-truth speaker identifier carried by simulated features.
pub type SpeakerId = u32;

/// Time-major matrix of feature frames at a fixed frame period.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    dim: usize,
    data: Vec<f32>,
    frame_period: f64,
    start_time: f64,
    /// Per-frame sorted set of active ground-truth speakers. Only the oracle
    /// backend reads this.
    hidden_identities: Option<Vec<Vec<SpeakerId>>>,
}

impl FeatureSequence {
    pub fn new(dim: usize, frame_period: f64, start_time: f64) -> Result<Self> {
        Self::from_flat(dim, Vec::new(), frame_period, start_time)
    }

    pub fn from_flat(dim: usize, data: Vec<f32>, frame_period: f64, start_time: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("feature dimension must be >= 1".into()));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::Shape(format!(
                "{} values do not divide into frames of dimension {dim}",
                data.len()
            )));
        }
        if !(frame_period > 0.0) || !frame_period.is_finite() {
            return Err(Error::Config(format!("frame period must be > 0, got {frame_period}")));
        }
        if !(start_time >= 0.0) || !start_time.is_finite() {
            return Err(Error::Config(format!("start time must be >= 0, got {start_time}")));
        }
        Ok(Self { dim, data, frame_period, start_time, hidden_identities: None })
    }

    pub fn from_frames(frames: &[Vec<f32>], frame_period: f64, start_time: f64) -> Result<Self> {
        let dim = frames.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(frames.len() * dim);
        for (t, f) in frames.iter().enumerate() {
            if f.len() != dim {
                return Err(Error::Shape(format!("frame {t} has dimension {}, expected {dim}", f.len())));
            }
            data.extend_from_slice(f);
        }
        Self::from_flat(dim, data, frame_period, start_time)
    }

    pub fn with_identities(mut self, identities: Vec<Vec<SpeakerId>>) -> Result<Self> {
        if identities.len() != self.len() {
            return Err(Error::Shape(format!(
                "{} identity entries for {} frames",
                identities.len(),
                self.len()
            )));
        }
        let mut identities = identities;
        for set in &mut identities {
            set.sort_unstable();
            set.dedup();
        }
        self.hidden_identities = Some(identities);
        Ok(self)
    }

    pub fn without_identities(mut self) -> Self {
        self.hidden_identities = None;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn frame_period(&self) -> f64 {
        self.frame_period
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 * self.frame_period
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn frames(&self) -> impl ExactSizeIterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f32] {
        &self.data
    }

    pub fn hidden_identities(&self) -> Option<&[Vec<SpeakerId>]> {
        self.hidden_identities.as_deref()
    }

    /// Copies the frames at `indices` (in the given order) into a new sequence.
    /// Identities travel with their frames.
    pub fn gather(&self, indices: &[usize]) -> FeatureSequence {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &t in indices {
            data.extend_from_slice(self.frame(t));
        }
        let hidden_identities = self
            .hidden_identities
            .as_ref()
            .map(|ids| indices.iter().map(|&t| ids[t].clone()).collect());
        FeatureSequence {
            dim: self.dim,
            data,
            frame_period: self.frame_period,
            start_time: self.start_time,
            hidden_identities,
        }
    }

    /// Appends `other` in place. Identities are kept only if both sides carry them.
    pub fn append(&mut self, other: &FeatureSequence) -> Result<()> {
        if other.dim != self.dim {
            return Err(Error::Dimension { expected: self.dim, found: other.dim });
        }
        let had_frames = !self.is_empty();
        self.data.extend_from_slice(&other.data);
        self.hidden_identities = match (self.hidden_identities.take(), &other.hidden_identities) {
            (Some(mut a), Some(b)) => {
                a.extend(b.iter().cloned());
                Some(a)
            }
            (None, Some(b)) if !had_frames => Some(b.clone()),
            _ => None,
        };
        Ok(())
    }

    fn slice(&self, start: usize, end: usize) -> FeatureSequence {
        FeatureSequence {
            dim: self.dim,
            data: self.data[start * self.dim..end * self.dim].to_vec(),
            frame_period: self.frame_period,
            start_time: self.start_time + start as f64 * self.frame_period,
            hidden_identities: self.hidden_identities.as_ref().map(|ids| ids[start..end].to_vec()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrontendConfig {
    pub sample_rate_hz: u32,
    pub fft_window_s: f64,
    pub fft_hop_s: f64,
    pub n_mels: usize,
    pub log_floor: f64,
    pub subsample_factor: usize,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: 8000,
            fft_window_s: 0.025,
            fft_hop_s: 0.010,
            n_mels: 23,
            log_floor: 1e-10,
            subsample_factor: 10,
        }
    }
}

impl FrontendConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_mels == 0 {
            return Err(Error::Config("n_mels must be >= 1".into()));
        }
        if self.subsample_factor == 0 {
            return Err(Error::Config("subsample_factor must be >= 1".into()));
        }
        if !(self.fft_hop_s > 0.0) || self.fft_hop_s > self.fft_window_s {
            return Err(Error::Config("need 0 < fft_hop_s <= fft_window_s".into()));
        }
        if !(self.log_floor > 0.0) {
            return Err(Error::Config("log_floor must be positive".into()));
        }
        Ok(())
    }

    pub fn window_samples(&self) -> usize {
        (self.fft_window_s * self.sample_rate_hz as f64).round() as usize
    }

    pub fn hop_samples(&self) -> usize {
        (self.fft_hop_s * self.sample_rate_hz as f64).round() as usize
    }

    pub fn fft_size(&self) -> usize {
        self.window_samples().next_power_of_two()
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Center frequencies (Hz) of the `n_mels` triangular filters spanning 0 Hz to Nyquist.
pub fn mel_center_frequencies(n_mels: usize, sample_rate_hz: u32) -> Vec<f64> {
    mel_edges(n_mels, sample_rate_hz)[1..=n_mels].to_vec()
}

fn mel_edges(n_mels: usize, sample_rate_hz: u32) -> Vec<f64> {
    let top = hz_to_mel(sample_rate_hz as f64 / 2.0);
    (0..n_mels + 2)
        .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
        .collect()
}

/// Triangular HTK-style filterbank, `n_mels` rows of `fft_size / 2 + 1` weights.
pub fn mel_filterbank(n_mels: usize, fft_size: usize, sample_rate_hz: u32) -> Vec<Vec<f64>> {
    let edges = mel_edges(n_mels, sample_rate_hz);
    let bins = fft_size / 2 + 1;
    let bin_hz = sample_rate_hz as f64 / fft_size as f64;
    (0..n_mels)
        .map(|m| {
            let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..bins)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    if f <= lo || f >= hi {
                        0.0
                    } else if f <= center {
                        (f - lo) / (center - lo)
                    } else {
                        (hi - f) / (hi - center)
                    }
                })
                .collect()
        })
        .collect()
}

fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Log-Mel filterbank features at the analysis hop (10 ms by default).
///
/// `samples` are mono PCM scaled to [-1, 1]. Frame count is
/// `floor((n - win) / hop) + 1`.
pub fn compute_logmel(samples: &[f32], sample_rate_hz: u32, config: &FrontendConfig) -> Result<FeatureSequence> {
    config.validate()?;
    if sample_rate_hz != config.sample_rate_hz {
        return Err(Error::SampleRate { expected: config.sample_rate_hz, found: sample_rate_hz });
    }
    let win = config.window_samples();
    let hop = config.hop_samples();
    if win == 0 || hop == 0 {
        return Err(Error::Config("analysis window or hop rounds to zero samples".into()));
    }
    if samples.len() < win {
        return Err(Error::EmptyInput { samples: samples.len(), needed: win });
    }

    let nfft = config.fft_size();
    let window = hamming(win);
    let bank = mel_filterbank(config.n_mels, nfft, config.sample_rate_hz);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(nfft);
    let n_frames = (samples.len() - win) / hop + 1;

    let mut data = Vec::with_capacity(n_frames * config.n_mels);
    let mut buf = vec![Complex::new(0.0, 0.0); nfft];
    let mut power = vec![0.0f64; nfft / 2 + 1];
    for t in 0..n_frames {
        let frame = &samples[t * hop..t * hop + win];
        for (slot, (&s, &w)) in buf.iter_mut().zip(frame.iter().zip(&window)) {
            *slot = Complex::new(s as f64 * w, 0.0);
        }
        buf[win..].fill(Complex::new(0.0, 0.0));
        fft.process(&mut buf);
        for (p, c) in power.iter_mut().zip(&buf) {
            *p = c.norm_sqr();
        }
        for filter in &bank {
            let energy: f64 = filter.iter().zip(&power).map(|(w, p)| w * p).sum();
            data.push(energy.max(config.log_floor).ln() as f32);
        }
    }
    FeatureSequence::from_flat(config.n_mels, data, config.fft_hop_s, 0.0)
}

/// Keeps frames `0, factor, 2*factor, ...` and scales the frame period.
pub fn subsample(features: &FeatureSequence, factor: usize) -> Result<FeatureSequence> {
    if factor == 0 {
        return Err(Error::Config("subsample factor must be >= 1".into()));
    }
    let keep: Vec<usize> = (0..features.len()).step_by(factor).collect();
    let mut out = features.gather(&keep);
    out.frame_period = features.frame_period * factor as f64;
    Ok(out)
}

/// Full front end: log-Mel at 10 ms, then decimation to the EEND frame rate.
pub fn extract_features(samples: &[f32], sample_rate_hz: u32, config: &FrontendConfig) -> Result<FeatureSequence> {
    let fine = compute_logmel(samples, sample_rate_hz, config)?;
    subsample(&fine, config.subsample_factor)
}

/// A fixed-length slice of the recording processed independently by the local step.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub index: usize,
    pub features: FeatureSequence,
}

impl Window {
    pub fn length_frames(&self) -> usize {
        self.features.len()
    }

    pub fn start_time(&self) -> f64 {
        self.features.start_time()
    }
}

/// Tiles the sequence into `ceil(len / window_frames)` consecutive windows.
pub fn split_windows(features: &FeatureSequence, window_frames: usize) -> Result<Vec<Window>> {
    if window_frames == 0 {
        return Err(Error::Config("window length must be >= 1 frame".into()));
    }
    let n = features.len();
    Ok((0..n.div_ceil(window_frames))
        .map(|i| {
            let start = i * window_frames;
            Window { index: i, features: features.slice(start, (start + window_frames).min(n)) }
        })
        .collect())
}

/// Reads 16-bit little-endian PCM mono WAV, returning samples scaled to [-1, 1].
pub fn read_wav(path: &Path) -> Result<(Vec<f32>, u32)> {
    let mut reader = hound::WavReader::open(path).map_err(|e| Error::Audio(e.to_string()))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::Audio(format!("expected mono, found {} channels", spec.channels)));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::Audio("expected 16-bit integer PCM".into()));
    }
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| v as f32 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::Audio(e.to_string()))?;
    Ok((samples, spec.sample_rate))
}

pub fn write_wav(path: &Path, samples: &[f32], sample_rate_hz: u32) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: sample_rate_hz,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| Error::Audio(e.to_string()))?;
    for &s in samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        writer.write_sample(v).map_err(|e| Error::Audio(e.to_string()))?;
    }
    writer.finalize().map_err(|e| Error::Audio(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureHeader {
    pub frames: usize,
    pub dim: usize,
    pub frame_period_s: f64,
    pub start_time_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden_identities: Option<Vec<Vec<SpeakerId>>>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub(crate) fn write_f32_le(path: &Path, values: &[f32]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn read_f32_le(path: &Path) -> Result<Vec<f32>> {
    let bytes = fs::read(path)?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Shape(format!("{} is not a whole number of f32 values", path.display())));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect())
}

pub fn write_features(path: &Path, features: &FeatureSequence) -> Result<()> {
    write_f32_le(path, &features.data)?;
    let header = FeatureHeader {
        frames: features.len(),
        dim: features.dim,
        frame_period_s: features.frame_period,
        start_time_s: features.start_time,
        hidden_identities: features.hidden_identities.clone(),
    };
    fs::write(sidecar_path(path), serde_json::to_string(&header)?)?;
    Ok(())
}

pub fn read_features(path: &Path) -> Result<FeatureSequence> {
    let header: FeatureHeader = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
    let data = read_f32_le(path)?;
    if data.len() != header.frames * header.dim {
        return Err(Error::Shape(format!(
            "header declares {}x{} values, file holds {}",
            header.frames,
            header.dim,
            data.len()
        )));
    }
    let seq = FeatureSequence::from_flat(header.dim, data, header.frame_period_s, header.start_time_s)?;
    match header.hidden_identities {
        Some(ids) => seq.with_identities(ids),
        None => Ok(seq),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(n: usize, dim: usize) -> FeatureSequence {
        let data = (0..n * dim).map(|v| v as f32).collect();
        FeatureSequence::from_flat(dim, data, 0.01, 0.0).unwrap()
    }

    #[test]
    fn silence_hits_the_floor() {
        let cfg = FrontendConfig::default();
        let feats = compute_logmel(&vec![0.0; 8000], 8000, &cfg).unwrap();
        assert_eq!(feats.len(), 98);
        assert_eq!(feats.dim(), 23);
        let floor = (1e-10f64).ln() as f32;
        assert!(feats.as_flat().iter().all(|&v| v == floor));
    }

    #[test]
    fn frame_count_arithmetic() {
        let cfg = FrontendConfig::default();
        assert_eq!(cfg.window_samples(), 200);
        assert_eq!(cfg.hop_samples(), 80);
        for n in [200usize, 279, 280, 8000, 8001] {
            let feats = compute_logmel(&vec![0.1; n], 8000, &cfg).unwrap();
            assert_eq!(feats.len(), (n - 200) / 80 + 1, "n = {n}");
        }
    }

    #[test]
    fn sine_peaks_in_nearest_mel_bin() {
        let cfg = FrontendConfig::default();
        // Centers computed from the closed-form HTK scale, independent of the filterbank builder.
        let top = 2595.0 * (1.0f64 + 4000.0 / 700.0).log10();
        let centers: Vec<f64> = (1..=23)
            .map(|i| 700.0 * (10f64.powf(top * i as f64 / 24.0 / 2595.0) - 1.0))
            .collect();
        let nearest = centers
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - 1000.0).abs().total_cmp(&(b.1 - 1000.0).abs()))
            .unwrap()
            .0;
        let samples: Vec<f32> = (0..8000)
            .map(|i| (0.5 * (2.0 * PI * 1000.0 * i as f64 / 8000.0).sin()) as f32)
            .collect();
        let feats = compute_logmel(&samples, 8000, &cfg).unwrap();
        for frame in feats.frames() {
            let argmax = frame
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            assert_eq!(argmax, nearest);
        }
    }

    #[test]
    fn short_audio_is_an_error() {
        let err = compute_logmel(&[0.0; 199], 8000, &FrontendConfig::default()).unwrap_err();
        assert!(matches!(err, Error::EmptyInput { samples: 199, needed: 200 }));
    }

    #[test]
    fn wrong_rate_is_an_error() {
        let err = compute_logmel(&[0.0; 16000], 16000, &FrontendConfig::default()).unwrap_err();
        assert!(matches!(err, Error::SampleRate { expected: 8000, found: 16000 }));
    }

    #[test]
    fn subsample_to_eend_rate() {
        let seq = ramp(3000, 2);
        let sub = subsample(&seq, 10).unwrap();
        assert_eq!(sub.len(), 300);
        assert!((sub.frame_period() - 0.1).abs() < 1e-12);
        assert!((sub.duration() - 30.0).abs() < 1e-9);
        assert_eq!(subsample(&seq, 1).unwrap(), seq);

        let seven = ramp(7, 1).with_identities((0..7).map(|t| vec![t]).collect()).unwrap();
        let s = subsample(&seven, 3).unwrap();
        assert_eq!(s.as_flat(), &[0.0, 3.0, 6.0]);
        assert_eq!(s.hidden_identities().unwrap(), &[vec![0], vec![3], vec![6]]);
    }

    #[test]
    fn window_lengths() {
        let lens = |n| {
            split_windows(&ramp(n, 1), 300)
                .unwrap()
                .iter()
                .map(Window::length_frames)
                .collect::<Vec<_>>()
        };
        assert_eq!(lens(750), vec![300, 300, 150]);
        assert_eq!(lens(300), vec![300]);
        assert_eq!(lens(301), vec![300, 1]);
        assert!(lens(0).is_empty());
        let w = split_windows(&ramp(750, 1), 300).unwrap();
        assert!((w[2].start_time() - 2.0 * 300.0 * 0.01).abs() < 1e-12);
    }

    #[test]
    fn feature_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.f32");
        let seq = ramp(5, 3).with_identities(vec![vec![], vec![1], vec![1, 2], vec![2], vec![]]).unwrap();
        write_features(&path, &seq).unwrap();
        assert_eq!(read_features(&path).unwrap(), seq);

        let header: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(sidecar_path(&path)).unwrap()).unwrap();
        assert_eq!(header["frames"], 5);
        assert_eq!(header["dim"], 3);
    }

    #[test]
    fn wav_round_trip_feeds_frontend() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let samples: Vec<f32> = (0..4000).map(|i| ((i as f32) * 0.3).sin() * 0.2).collect();
        write_wav(&path, &samples, 8000).unwrap();
        let (back, rate) = read_wav(&path).unwrap();
        assert_eq!(rate, 8000);
        assert_eq!(back.len(), samples.len());
        let feats = extract_features(&back, rate, &FrontendConfig::default()).unwrap();
        assert_eq!(feats.len(), ((4000 - 200) / 80 + 1usize).div_ceil(10));
    }

    proptest! {
        #[test]
        fn windows_concatenate_to_input(n in 0usize..1000, t in 1usize..400) {
            let seq = ramp(n, 2);
            let windows = split_windows(&seq, t).unwrap();
            prop_assert_eq!(windows.len(), n.div_ceil(t));
            let mut joined: Vec<f32> = Vec::new();
            for (i, w) in windows.iter().enumerate() {
                prop_assert_eq!(w.index, i);
                prop_assert!(w.length_frames() <= t);
                if i + 1 < windows.len() { prop_assert_eq!(w.length_frames(), t); }
                joined.extend_from_slice(w.features.as_flat());
            }
            prop_assert_eq!(joined.as_slice(), seq.as_flat());
        }

        #[test]
        fn subsample_composes(n in 0usize..500, a in 1usize..6, b in 1usize..6) {
            let seq = ramp(n, 1);
            let twice = subsample(&subsample(&seq, a).unwrap(), b).unwrap();
            let once = subsample(&seq, a * b).unwrap();
            prop_assert_eq!(twice.as_flat(), once.as_flat());
        }

        #[test]
        fn logmel_is_finite(samples in proptest::collection::vec(-1.0f32..1.0, 200..1200)) {
            let feats = compute_logmel(&samples, 8000, &FrontendConfig::default()).unwrap();
            prop_assert!(feats.as_flat().iter().all(|v| v.is_finite()));
        }
    }
}
