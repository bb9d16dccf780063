/// One-to-one partial mapping maximizing the summed weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// Column mapped to each row, `None` for rows left over when R > H.
    pub mapping: Vec<Option<usize>>,
    pub total: f64,
}

/// Hungarian algorithm (shortest augmenting paths with potentials) on the
/// zero-padded square matrix. Entries must be finite.
pub fn optimal_assignment(weights: &[Vec<f64>]) -> Assignment {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    let n = rows.max(cols);
    if n == 0 {
        return Assignment { mapping: vec![None; rows], total: 0.0 };
    }
    let max = weights.iter().flatten().copied().fold(0.0f64, f64::max);
    let cost = |i: usize, j: usize| -> f64 {
        let w = if i < rows && j < cols { weights[i][j] } else { 0.0 };
        max - w
    };

    // 1-based arrays; index 0 is the virtual start column.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut mapping = vec![None; rows];
    for j in 1..=n {
        let i = owner[j] - 1;
        if i < rows && j - 1 < cols {
            mapping[i] = Some(j - 1);
        }
    }
    let total = mapping.iter().enumerate().filter_map(|(i, m)| m.map(|j| weights[i][j])).sum();
    Assignment { mapping, total }
}

#[cfg(test)]
mod tests {
    use super::*;
    use itertools::Itertools;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn small_examples() {
        let a = optimal_assignment(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert_eq!(a.mapping, vec![Some(1), Some(0)]);
        assert_eq!(a.total, 4.0);
        assert_eq!(optimal_assignment(&[vec![5.0]]).mapping, vec![Some(0)]);
        assert_eq!(optimal_assignment(&[]).total, 0.0);
    }

    #[test]
    fn rectangular() {
        let tall = optimal_assignment(&[vec![1.0], vec![3.0], vec![2.0]]);
        assert_eq!(tall.mapping, vec![None, Some(0), None]);
        let wide = optimal_assignment(&[vec![1.0, 3.0, 2.0]]);
        assert_eq!(wide.mapping, vec![Some(1)]);
        assert_eq!(optimal_assignment(&[vec![], vec![]]).mapping, vec![None, None]);
    }

    #[test]
    fn matches_exhaustive_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let (r, h) = (rng.random_range(1..=5), rng.random_range(1..=5));
            let w: Vec<Vec<f64>> = (0..r).map(|_| (0..h).map(|_| rng.random_range(0.0..10.0)).collect()).collect();
            let n = r.max(h);
            let best = (0..n)
                .permutations(n)
                .map(|p| (0..r).filter(|&i| p[i] < h).map(|i| w[i][p[i]]).sum::<f64>())
                .fold(f64::NEG_INFINITY, f64::max);
            assert!((optimal_assignment(&w).total - best).abs() < 1e-9);
        }
    }
}
