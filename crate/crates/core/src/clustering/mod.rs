//! Constrained spectral clustering of the speaker affinity matrix.

mod eigen;
mod kmeans;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use eigen::{symmetric_eig, SymmetricEigen};
pub use kmeans::{kmeans, KMeansResult};

use crate::error::{Error, Result};
use crate::global::AffinityMatrix;

/// Added to every degree so isolated speakers do not divide by zero.
pub const DEGREE_GUARD: f64 = 1e-8;
pub const DEFAULT_K_MAX: usize = 10;
pub const KMEANS_SEED: u64 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpeakerCount {
    Oracle(usize),
    Auto { k_max: usize },
}

impl Default for SpeakerCount {
    fn default() -> Self {
        SpeakerCount::Auto { k_max: DEFAULT_K_MAX }
    }
}

impl fmt::Display for SpeakerCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpeakerCount::Oracle(m) => write!(f, "oracle:{m}"),
            SpeakerCount::Auto { k_max } => write!(f, "auto:{k_max}"),
        }
    }
}

impl FromStr for SpeakerCount {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad speaker count {s:?} (auto | auto:K | oracle:M)"));
        let positive = |v: &str| v.parse::<usize>().ok().filter(|&n| n >= 1).ok_or_else(bad);
        match s.split_once(':') {
            None if s == "auto" => Ok(SpeakerCount::default()),
            Some(("auto", k)) => Ok(SpeakerCount::Auto { k_max: positive(k)? }),
            Some(("oracle", m)) => Ok(SpeakerCount::Oracle(positive(m)?)),
            _ => Err(bad()),
        }
    }
}

impl Serialize for SpeakerCount {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SpeakerCount {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub num_clusters: usize,
}

/// Cluster count at the largest gap between consecutive ascending
/// eigenvalues, searched over `1..=min(k_max, n - 1)`. Ties go to the larger
/// count.
pub fn estimate_num_clusters(eigenvalues: &[f64], k_max: usize) -> usize {
    let n = eigenvalues.len();
    let upper = k_max.min(n.saturating_sub(1));
    let mut best = (1, f64::NEG_INFINITY);
    for i in 1..=upper {
        let gap = eigenvalues[i] - eigenvalues[i - 1];
        if gap >= best.1 {
            best = (i, gap);
        }
    }
    best.0
}

/// `I - D^-1/2 S D^-1/2` with degrees `d_i = sum_j S_ij + DEGREE_GUARD`.
pub fn normalized_laplacian(s: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let inv_sqrt: Vec<f64> = s.iter().map(|r| 1.0 / (r.iter().sum::<f64>() + DEGREE_GUARD).sqrt()).collect();
    s.iter()
        .enumerate()
        .map(|(i, r)| {
            r.iter()
                .enumerate()
                .map(|(j, &v)| f64::from(u8::from(i == j)) - v * inv_sqrt[i] * inv_sqrt[j])
                .collect()
        })
        .collect()
}

/// Spectral clustering of a dense symmetric affinity given as rows.
pub fn spectral_cluster_rows(s: &[Vec<f64>], count: SpeakerCount) -> Result<ClusterAssignment> {
    let n = s.len();
    if n == 0 {
        return Ok(ClusterAssignment { labels: Vec::new(), num_clusters: 0 });
    }
    if s.iter().flatten().any(|&v| v < 0.0) {
        return Err(Error::Shape("affinity entries must be nonnegative".into()));
    }
    let eig = symmetric_eig(&normalized_laplacian(s))?;
    let m = match count {
        SpeakerCount::Oracle(0) | SpeakerCount::Auto { k_max: 0 } => {
            return Err(Error::Config("speaker count must be >= 1".into()))
        }
        SpeakerCount::Oracle(m) if m > n => return Err(Error::TooManyClusters { k: m, n }),
        SpeakerCount::Oracle(m) => m,
        SpeakerCount::Auto { k_max } => estimate_num_clusters(&eig.values, k_max),
    };

    let embedding: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let row: Vec<f64> = eig.vectors[..m].iter().map(|v| v[i]).collect();
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                row.iter().map(|x| x / norm).collect()
            } else {
                (0..m).map(|d| f64::from(u8::from(d == 0))).collect()
            }
        })
        .collect();
    let km = kmeans(&embedding, m, KMEANS_SEED)?;
    Ok(ClusterAssignment { num_clusters: km.centroids.len(), labels: km.labels })
}

pub fn spectral_cluster(affinity: &AffinityMatrix, count: SpeakerCount) -> Result<ClusterAssignment> {
    spectral_cluster_rows(&affinity.rows(), count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn blocks(sizes: &[usize]) -> Vec<Vec<f64>> {
        let ids: Vec<usize> = sizes.iter().enumerate().flat_map(|(b, &s)| std::iter::repeat_n(b, s)).collect();
        ids.iter().map(|a| ids.iter().map(|b| f64::from(u8::from(a == b))).collect()).collect()
    }

    #[test]
    fn eigengap_examples() {
        assert_eq!(estimate_num_clusters(&[0.0, 0.0, 1.0, 1.0], 10), 2);
        assert_eq!(estimate_num_clusters(&[0.0, 1.0, 1.0, 1.0], 10), 1);
        assert_eq!(estimate_num_clusters(&[0.0, 0.0, 0.0, 0.0, 0.9, 1.0], 3), 3);
        assert_eq!(estimate_num_clusters(&[0.4], 10), 1);
    }

    #[test]
    fn block_laplacian_eigenvalues() {
        // Two disjoint 2-cliques with unit self-affinity: S/2 per block, so
        // eigenvalues 0, 0, 1, 1 up to the degree guard.
        let e = symmetric_eig(&normalized_laplacian(&blocks(&[2, 2]))).unwrap();
        for (got, want) in e.values.iter().zip([0.0, 0.0, 1.0, 1.0]) {
            assert!((got - want).abs() < 1e-7);
        }
    }

    #[test]
    fn speaker_count_strings() {
        assert_eq!("auto".parse::<SpeakerCount>().unwrap(), SpeakerCount::Auto { k_max: 10 });
        assert_eq!("auto:4".parse::<SpeakerCount>().unwrap(), SpeakerCount::Auto { k_max: 4 });
        assert_eq!("oracle:2".parse::<SpeakerCount>().unwrap(), SpeakerCount::Oracle(2));
        assert!("oracle".parse::<SpeakerCount>().is_err());
        assert!("oracle:0".parse::<SpeakerCount>().is_err());
    }

    #[test]
    fn block_affinity_recovers_partition() {
        let r = spectral_cluster_rows(&blocks(&[2, 3]), SpeakerCount::default()).unwrap();
        assert_eq!(r.labels, vec![0, 0, 1, 1, 1]);
        assert_eq!(r.num_clusters, 2);
        let one = spectral_cluster_rows(&blocks(&[2, 3]), SpeakerCount::Oracle(1)).unwrap();
        assert_eq!(one.labels, vec![0; 5]);
        assert!(matches!(
            spectral_cluster_rows(&blocks(&[2]), SpeakerCount::Oracle(3)),
            Err(Error::TooManyClusters { .. })
        ));
    }

    #[test]
    fn isolated_speakers_do_not_break() {
        let r = spectral_cluster_rows(&blocks(&[1, 1, 1]), SpeakerCount::Oracle(3)).unwrap();
        assert_eq!(r.labels, vec![0, 1, 2]);
        // The eigengap search stops at n - 1, so Auto cannot split n isolated speakers fully.
        let auto = spectral_cluster_rows(&blocks(&[1, 1, 1]), SpeakerCount::default()).unwrap();
        assert!(auto.num_clusters < 3);
    }

    proptest! {
        #[test]
        fn laplacian_spectrum_in_zero_two(vals in proptest::collection::vec(0.0f64..=1.0, 36)) {
            let n = 6;
            let mut s = vec![vec![0.0; n]; n];
            for i in 0..n {
                s[i][i] = 1.0;
                for j in i + 1..n {
                    s[i][j] = vals[i * n + j];
                    s[j][i] = vals[i * n + j];
                }
            }
            for v in symmetric_eig(&normalized_laplacian(&s)).unwrap().values {
                prop_assert!((-1e-8..=2.0 + 1e-8).contains(&v));
            }
        }

        #[test]
        fn auto_counts_noiseless_blocks(sizes in proptest::collection::vec(2usize..5, 2..=6)) {
            let r = spectral_cluster_rows(&blocks(&sizes), SpeakerCount::default()).unwrap();
            prop_assert_eq!(r.num_clusters, sizes.len());
        }

        #[test]
        fn permutation_equivariance(sizes in proptest::collection::vec(2usize..4, 2..=4), seed in 0u64..1000) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let s = blocks(&sizes);
            let n = s.len();
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let permuted: Vec<Vec<f64>> = perm.iter().map(|&i| perm.iter().map(|&j| s[i][j]).collect()).collect();
            let base = spectral_cluster_rows(&s, SpeakerCount::default()).unwrap();
            let moved = spectral_cluster_rows(&permuted, SpeakerCount::default()).unwrap();
            for a in 0..n {
                for b in 0..n {
                    prop_assert_eq!(moved.labels[a] == moved.labels[b], base.labels[perm[a]] == base.labels[perm[b]]);
                }
            }
        }
    }
}
