use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const RESTARTS: usize = 10;
pub const MAX_ITERATIONS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    /// Cluster per point, numbered by first occurrence.
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Sum of squared distances to the assigned centroid.
    pub objective: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    centroids
        .iter()
        .enumerate()
        .map(|(c, m)| (c, sq_dist(p, m)))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

fn seed_plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    while centroids.len() < k {
        let d2: Vec<f64> = points.iter().map(|p| nearest(p, &centroids).1).collect();
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random_range(0.0..total);
            d2.iter()
                .position(|&d| {
                    r -= d;
                    r < 0.0 && d > 0.0
                })
                .unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).expect("positive total"))
        } else {
            rng.random_range(0..points.len())
        };
        centroids.push(points[pick].clone());
    }
    centroids
}

fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>) -> (Vec<usize>, Vec<Vec<f64>>, f64) {
    let (n, k, dim) = (points.len(), centroids.len(), points[0].len());
    let mut labels = vec![usize::MAX; n];
    for _ in 0..MAX_ITERATIONS {
        let assigned: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
        if assigned == labels {
            break;
        }
        labels = assigned;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            sums[l].iter_mut().zip(p).for_each(|(s, x)| *s += x);
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        // An empty cluster takes over the point farthest from its centroid
        // among clusters that can spare one.
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let donor = (0..n)
                .filter(|&i| counts[labels[i]] > 1)
                .max_by(|&i, &j| {
                    sq_dist(&points[i], &centroids[labels[i]]).total_cmp(&sq_dist(&points[j], &centroids[labels[j]]))
                });
            if let Some(i) = donor {
                counts[labels[i]] -= 1;
                counts[c] = 1;
                labels[i] = c;
                centroids[c] = points[i].clone();
            }
        }
    }
    let objective = points.iter().zip(&labels).map(|(p, &l)| sq_dist(p, &centroids[l])).sum();
    (labels, centroids, objective)
}

/// Renumbers labels by first occurrence and drops unused centroids.
fn canonicalize(labels: &[usize], centroids: &[Vec<f64>]) -> (Vec<usize>, Vec<Vec<f64>>) {
    let mut map = vec![usize::MAX; centroids.len()];
    let mut order = Vec::new();
    let labels = labels
        .iter()
        .map(|&l| {
            if map[l] == usize::MAX {
                map[l] = order.len();
                order.push(l);
            }
            map[l]
        })
        .collect();
    (labels, order.iter().map(|&l| centroids[l].clone()).collect())
}

/// K-means with k-means++ seeding; best of [`RESTARTS`] runs by objective.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeansResult> {
    let n = points.len();
    if k == 0 {
        return Err(Error::Config("k-means needs k >= 1".into()));
    }
    if k > n {
        return Err(Error::TooManyClusters { k, n });
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::Shape("k-means points differ in dimension".into()));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("k-means points"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Vec<usize>, Vec<Vec<f64>>, f64)> = None;
    for _ in 0..RESTARTS {
        let run = lloyd(points, seed_plus_plus(points, k, &mut rng));
        if best.as_ref().is_none_or(|b| run.2 < b.2) {
            best = Some(run);
        }
    }
    let (labels, centroids, objective) = best.expect("at least one restart");
    let (labels, centroids) = canonicalize(&labels, &centroids);
    Ok(KMeansResult { labels, centroids, objective })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn objective_of(points: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
        (0..k)
            .map(|c| {
                let members: Vec<&Vec<f64>> = points.iter().zip(labels).filter(|(_, &l)| l == c).map(|(p, _)| p).collect();
                if members.is_empty() {
                    return 0.0;
                }
                let dim = points[0].len();
                let mean: Vec<f64> =
                    (0..dim).map(|d| members.iter().map(|p| p[d]).sum::<f64>() / members.len() as f64).collect();
                members.iter().map(|p| sq_dist(p, &mean)).sum::<f64>()
            })
            .sum()
    }

    #[test]
    fn pairs_cluster_together() {
        let pts = vec![vec![0.0, 0.0], vec![0.1, 0.0], vec![5.0, 5.0], vec![5.1, 5.0]];
        let r = kmeans(&pts, 2, 0).unwrap();
        assert_eq!(r.labels, vec![0, 0, 1, 1]);
        // Brute force over all 2-partitions.
        let best = (1u32..(1 << pts.len()) - 1)
            .map(|mask| {
                let labels: Vec<usize> = (0..pts.len()).map(|i| ((mask >> i) & 1) as usize).collect();
                objective_of(&pts, &labels, 2)
            })
            .fold(f64::INFINITY, f64::min);
        assert!((r.objective - best).abs() < 1e-12);
    }

    #[test]
    fn singletons_and_duplicates() {
        let pts = vec![vec![0.0], vec![1.0], vec![3.0]];
        let r = kmeans(&pts, 3, 4).unwrap();
        assert_eq!(r.labels, vec![0, 1, 2]);
        assert_eq!(r.objective, 0.0);

        let dup = vec![vec![2.0, 1.0]; 5];
        let r = kmeans(&dup, 1, 4).unwrap();
        assert_eq!(r.labels, vec![0; 5]);
        assert_eq!(r.centroids, vec![vec![2.0, 1.0]]);
    }

    #[test]
    fn errors_and_determinism() {
        let pts = vec![vec![0.0], vec![1.0]];
        assert!(matches!(kmeans(&pts, 3, 0), Err(Error::TooManyClusters { k: 3, n: 2 })));
        assert!(kmeans(&pts, 0, 0).is_err());
        let many: Vec<Vec<f64>> = (0..40).map(|i| vec![(i * 37 % 11) as f64, (i * 7 % 5) as f64]).collect();
        assert_eq!(kmeans(&many, 4, 9).unwrap(), kmeans(&many, 4, 9).unwrap());
    }

    #[test]
    fn labels_numbered_by_first_occurrence() {
        let pts = vec![vec![9.0], vec![0.0], vec![9.1], vec![0.1], vec![4.0]];
        let r = kmeans(&pts, 3, 1).unwrap();
        assert_eq!(r.labels, vec![0, 1, 0, 1, 2]);
    }
}
