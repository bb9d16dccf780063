//! Frame-posterior estimators ("EEND models").
//!
//! A [`Backend`] maps a chunk of feature frames to per-frame speaker activity
//! posteriors over `s_local` output slots. Slots carry no global identity; two
//! calls on different chunks may order the same speaker differently.

mod adapt;
mod oracle;
mod pit;
mod transformer;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureSequence;

pub use adapt::{concat_adaptation_reformat, reformat_half_batch, Reformatted};
pub use oracle::OracleBackend;
pub use pit::{pit_loss, PIT_CLAMP};
pub use transformer::{TransformerBackend, TransformerWeights};

/// Per-frame speaker posteriors, `rows x cols`, every entry in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl PosteriorMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!("{} values for a {rows}x{cols} posterior matrix", data.len())));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Shape(format!("posterior {v} outside [0, 1]")));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged posterior rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.data[t * self.cols..(t + 1) * self.cols]
    }

    pub fn get(&self, t: usize, s: usize) -> f32 {
        self.data[t * self.cols + s]
    }

    pub fn as_flat(&self) -> &[f32] {
        &self.data
    }

    /// Column `s` of the result is column `perm[s]` of `self`.
    pub fn permute_columns(&self, perm: &[usize]) -> PosteriorMatrix {
        assert_eq!(perm.len(), self.cols, "permutation length must equal column count");
        let mut data = Vec::with_capacity(self.data.len());
        for t in 0..self.rows {
            let row = self.row(t);
            data.extend(perm.iter().map(|&p| row[p]));
        }
        PosteriorMatrix { rows: self.rows, cols: self.cols, data }
    }

    /// Rows of the result are `self.row(order[i])`.
    pub fn permute_rows(&self, order: &[usize]) -> PosteriorMatrix {
        let mut data = Vec::with_capacity(order.len() * self.cols);
        for &t in order {
            data.extend_from_slice(self.row(t));
        }
        PosteriorMatrix { rows: order.len(), cols: self.cols, data }
    }
}

/// Binary per-frame speaker activity, `rows x cols`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMatrix {
    rows: usize,
    cols: usize,
    data: Vec<u8>,
}

impl LabelMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0; rows * cols] }
    }

    pub fn new(rows: usize, cols: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!("{} values for a {rows}x{cols} label matrix", data.len())));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(Error::Shape("label entries must be 0 or 1".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged label rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, t: usize, s: usize) -> bool {
        self.data[t * self.cols + s] != 0
    }

    pub fn set(&mut self, t: usize, s: usize, active: bool) {
        self.data[t * self.cols + s] = u8::from(active);
    }

    pub fn row(&self, t: usize) -> &[u8] {
        &self.data[t * self.cols..(t + 1) * self.cols]
    }

    pub fn column(&self, s: usize) -> Vec<u8> {
        (0..self.rows).map(|t| self.data[t * self.cols + s]).collect()
    }

    pub fn active_count(&self, t: usize) -> usize {
        self.row(t).iter().map(|&v| v as usize).sum()
    }

    pub fn as_flat(&self) -> &[u8] {
        &self.data
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub s_local: usize,
    pub input_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub hidden: usize,
    pub ffn_dim: usize,
    pub seed: u64,
    pub epsilon_oracle: f32,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            s_local: 3,
            input_dim: 23,
            layers: 6,
            heads: 8,
            hidden: 256,
            ffn_dim: 1024,
            seed: 0,
            epsilon_oracle: 0.01,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<()> {
        if self.s_local == 0 {
            return Err(Error::Config("s_local must be >= 1".into()));
        }
        if self.heads == 0 || !self.hidden.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "hidden size {} must be divisible by head count {}",
                self.hidden, self.heads
            )));
        }
        if self.input_dim == 0 || self.ffn_dim == 0 {
            return Err(Error::Config("input_dim and ffn_dim must be >= 1".into()));
        }
        if !(self.epsilon_oracle >= 0.0 && self.epsilon_oracle < 0.5) {
            return Err(Error::Config("epsilon_oracle must lie in [0, 0.5)".into()));
        }
        Ok(())
    }
}

/// A failed item inside [`Backend::infer_batch`].
#[derive(Debug)]
pub struct BatchFailure {
    pub index: usize,
    pub error: Error,
}

pub trait Backend: Send + Sync {
    fn name(&self) -> String;

    /// Number of output slots per frame.
    fn s_local(&self) -> usize;

    /// Posteriors for one chunk. Must be deterministic for a given chunk.
    fn infer(&self, chunk: &FeatureSequence) -> Result<PosteriorMatrix>;

    /// Scores several chunks in one call. Results must equal per-chunk
    /// [`Backend::infer`] bit-for-bit; batching only changes throughput.
    fn infer_batch(&self, chunks: &[&FeatureSequence]) -> Result<Vec<PosteriorMatrix>, BatchFailure> {
        chunks
            .iter()
            .enumerate()
            .map(|(index, c)| self.infer(c).map_err(|error| BatchFailure { index, error }))
            .collect()
    }
}

/// Backend selector: `oracle`, `transformer:<weights-path>` or `transformer:random:<seed>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    Oracle,
    TransformerFile(PathBuf),
    TransformerRandom(u64),
}

impl FromStr for BackendSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "oracle" {
            return Ok(BackendSpec::Oracle);
        }
        match s.strip_prefix("transformer:") {
            Some(rest) => match rest.strip_prefix("random:") {
                Some(seed) => seed
                    .parse()
                    .map(BackendSpec::TransformerRandom)
                    .map_err(|_| Error::Config(format!("bad transformer seed {seed:?}"))),
                None if !rest.is_empty() => Ok(BackendSpec::TransformerFile(PathBuf::from(rest))),
                None => Err(Error::Config("transformer backend needs a weights path".into())),
            },
            None => Err(Error::Config(format!(
                "unknown backend {s:?} (expected oracle | transformer:<path> | transformer:random:<seed>)"
            ))),
        }
    }
}

impl fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendSpec::Oracle => f.write_str("oracle"),
            BackendSpec::TransformerFile(p) => write!(f, "transformer:{}", p.display()),
            BackendSpec::TransformerRandom(seed) => write!(f, "transformer:random:{seed}"),
        }
    }
}

impl Serialize for BackendSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BackendSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Instantiates the backend named by `spec`. Transformer weights loaded from
/// file carry their own shape; `config` supplies it for random initialization.
pub fn build_backend(spec: &BackendSpec, config: &BackendConfig) -> Result<Box<dyn Backend>> {
    config.validate()?;
    Ok(match spec {
        BackendSpec::Oracle => Box::new(OracleBackend::new(config.s_local, config.epsilon_oracle)?),
        BackendSpec::TransformerFile(path) => Box::new(TransformerBackend::new(TransformerWeights::load(path)?)?),
        BackendSpec::TransformerRandom(seed) => {
            let cfg = BackendConfig { seed: *seed, ..config.clone() };
            Box::new(TransformerBackend::new(TransformerWeights::random(&cfg)?)?)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_strings() {
        assert_eq!("oracle".parse::<BackendSpec>().unwrap(), BackendSpec::Oracle);
        assert_eq!(
            "transformer:random:42".parse::<BackendSpec>().unwrap(),
            BackendSpec::TransformerRandom(42)
        );
        assert_eq!(
            "transformer:/tmp/w.f32".parse::<BackendSpec>().unwrap(),
            BackendSpec::TransformerFile("/tmp/w.f32".into())
        );
        assert!("transformer:".parse::<BackendSpec>().is_err());
        assert!("transformer:random:x".parse::<BackendSpec>().is_err());
        assert!("cnn".parse::<BackendSpec>().is_err());
        for s in ["oracle", "transformer:random:7", "transformer:w.bin"] {
            assert_eq!(s.parse::<BackendSpec>().unwrap().to_string(), s);
        }
    }

    #[test]
    fn config_validation() {
        assert!(BackendConfig::default().validate().is_ok());
        assert!(BackendConfig { hidden: 250, ..Default::default() }.validate().is_err());
        assert!(BackendConfig { s_local: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn posterior_range_is_checked() {
        assert!(PosteriorMatrix::new(1, 2, vec![0.0, 1.0]).is_ok());
        assert!(PosteriorMatrix::new(1, 2, vec![0.0, 1.5]).is_err());
        assert!(PosteriorMatrix::new(1, 2, vec![0.0]).is_err());
    }
}
