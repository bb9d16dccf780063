use crate::error::{Error, Result};
use crate::features::{FeatureSequence, SpeakerId};

use super::{Backend, PosteriorMatrix};

/// Ideal EEND stand-in driven by the hidden identities of simulated features.
///
/// Slots are assigned in order of first appearance inside each chunk, so the
/// same speaker can land in different slots across chunks, like a real model.
#[derive(Debug, Clone)]
pub struct OracleBackend {
    s_local: usize,
    epsilon: f32,
}

impl OracleBackend {
    pub fn new(s_local: usize, epsilon: f32) -> Result<Self> {
        if s_local == 0 {
            return Err(Error::Config("s_local must be >= 1".into()));
        }
        if !(0.0..0.5).contains(&epsilon) {
            return Err(Error::Config(format!("oracle epsilon {epsilon} outside [0, 0.5)")));
        }
        Ok(Self { s_local, epsilon })
    }
}

impl Backend for OracleBackend {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn s_local(&self) -> usize {
        self.s_local
    }

    fn infer(&self, chunk: &FeatureSequence) -> Result<PosteriorMatrix> {
        if chunk.is_empty() {
            return Err(Error::EmptyChunk);
        }
        let ids = chunk.hidden_identities().ok_or(Error::MissingIdentities)?;

        let mut slots: Vec<SpeakerId> = Vec::with_capacity(self.s_local);
        for set in ids {
            for id in set {
                if !slots.contains(id) {
                    slots.push(*id);
                }
            }
        }
        if slots.len() > self.s_local {
            return Err(Error::Capacity { capacity: self.s_local, found: slots.len() });
        }

        let mut data = vec![self.epsilon; ids.len() * self.s_local];
        for (t, set) in ids.iter().enumerate() {
            for id in set {
                let slot = slots.iter().position(|s| s == id).expect("slot registered above");
                data[t * self.s_local + slot] = 1.0 - self.epsilon;
            }
        }
        PosteriorMatrix::new(ids.len(), self.s_local, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chunk(ids: Vec<Vec<SpeakerId>>) -> FeatureSequence {
        let n = ids.len();
        FeatureSequence::from_flat(1, vec![0.0; n], 0.1, 0.0)
            .unwrap()
            .with_identities(ids)
            .unwrap()
    }

    fn mean(p: &PosteriorMatrix, rows: std::ops::Range<usize>) -> Vec<f64> {
        let n = rows.len() as f64;
        (0..p.cols())
            .map(|s| rows.clone().map(|t| p.get(t, s) as f64).sum::<f64>() / n)
            .collect()
    }

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        dot / (a.iter().map(|x| x * x).sum::<f64>().sqrt() * b.iter().map(|x| x * x).sum::<f64>().sqrt())
    }

    #[test]
    fn first_appearance_slots() {
        let b = OracleBackend::new(3, 0.01).unwrap();
        let p = b.infer(&chunk(vec![vec![0], vec![0], vec![1], vec![1]])).unwrap();
        assert_eq!(
            p.as_flat(),
            &[0.99, 0.01, 0.01, 0.99, 0.01, 0.01, 0.01, 0.99, 0.01, 0.01, 0.99, 0.01]
        );

        let p = b.infer(&chunk(vec![vec![7], vec![7], vec![3]])).unwrap();
        assert_eq!(p.row(0), &[0.99, 0.01, 0.01]);
        assert_eq!(p.row(2), &[0.01, 0.99, 0.01]);
    }

    #[test]
    fn overlap_and_silence_rows() {
        let b = OracleBackend::new(3, 0.01).unwrap();
        let p = b.infer(&chunk(vec![vec![4, 9], vec![]])).unwrap();
        assert_eq!(p.row(0), &[0.99, 0.99, 0.01]);
        assert_eq!(p.row(1), &[0.01, 0.01, 0.01]);
    }

    #[test]
    fn capacity_and_input_errors() {
        let b = OracleBackend::new(3, 0.01).unwrap();
        let err = b.infer(&chunk(vec![vec![0], vec![1], vec![2], vec![3]])).unwrap_err();
        assert!(matches!(err, Error::Capacity { capacity: 3, found: 4 }));
        assert!(matches!(b.infer(&chunk(vec![])), Err(Error::EmptyChunk)));
        let bare = FeatureSequence::from_flat(1, vec![0.0; 2], 0.1, 0.0).unwrap();
        assert!(matches!(b.infer(&bare), Err(Error::MissingIdentities)));
    }

    #[test]
    fn group_means_separate_speakers() {
        for eps in [0.0f32, 0.01, 0.05, 0.1] {
            let b = OracleBackend::new(3, eps).unwrap();
            let e = eps as f64;
            // same identity on both halves, then different identities
            let same = b.infer(&chunk(vec![vec![1], vec![1], vec![2], vec![1], vec![1]])).unwrap();
            assert!(cosine(&mean(&same, 0..2), &mean(&same, 3..5)) >= 1.0 - 4.0 * e - 1e-7);
            let diff = b.infer(&chunk(vec![vec![1], vec![1], vec![2], vec![2]])).unwrap();
            assert!(cosine(&mean(&diff, 0..2), &mean(&diff, 2..4)) <= 4.0 * e + 1e-7);
        }
    }
}
