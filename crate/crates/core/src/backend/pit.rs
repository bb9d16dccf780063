use itertools::Itertools;

use crate::error::{Error, Result};

use super::{LabelMatrix, PosteriorMatrix};

/// Probabilities are clamped to `[PIT_CLAMP, 1 - PIT_CLAMP]` before the log.
pub const PIT_CLAMP: f64 = 1e-7;

/// Permutation-invariant binary cross-entropy: the minimum, over all column
/// permutations of the labels, of the mean per-entry BCE.
pub fn pit_loss(posteriors: &PosteriorMatrix, labels: &LabelMatrix) -> Result<f64> {
    if posteriors.rows() != labels.rows() || posteriors.cols() != labels.cols() {
        return Err(Error::Shape(format!(
            "posteriors {}x{} vs labels {}x{}",
            posteriors.rows(),
            posteriors.cols(),
            labels.rows(),
            labels.cols()
        )));
    }
    let (rows, cols) = (posteriors.rows(), posteriors.cols());
    if rows == 0 || cols == 0 {
        return Ok(0.0);
    }

    // cost[a][b]: summed BCE of label column a against posterior column b.
    let mut cost = vec![vec![0.0f64; cols]; cols];
    for (a, row) in cost.iter_mut().enumerate() {
        for (b, c) in row.iter_mut().enumerate() {
            *c = (0..rows)
                .map(|t| {
                    let p = (posteriors.get(t, b) as f64).clamp(PIT_CLAMP, 1.0 - PIT_CLAMP);
                    if labels.get(t, a) {
                        -p.ln()
                    } else {
                        -(1.0 - p).ln()
                    }
                })
                .sum();
        }
    }

    let best = (0..cols)
        .permutations(cols)
        .map(|perm| perm.iter().enumerate().map(|(a, &b)| cost[a][b]).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    Ok(best / (rows * cols) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels() -> LabelMatrix {
        LabelMatrix::from_rows(&[vec![1, 0, 0], vec![1, 1, 0], vec![0, 1, 0], vec![0, 0, 1]]).unwrap()
    }

    #[test]
    fn perfect_prediction() {
        let l = labels();
        let p = PosteriorMatrix::new(4, 3, l.as_flat().iter().map(|&v| v as f32).collect()).unwrap();
        assert!(pit_loss(&p, &l).unwrap() < 1e-6);
    }

    #[test]
    fn half_everywhere_is_ln2() {
        let p = PosteriorMatrix::new(4, 3, vec![0.5; 12]).unwrap();
        assert!((pit_loss(&p, &labels()).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch() {
        let p = PosteriorMatrix::new(3, 3, vec![0.5; 9]).unwrap();
        assert!(pit_loss(&p, &labels()).is_err());
    }

    proptest! {
        #[test]
        fn column_swap_is_invisible(vals in proptest::collection::vec(0.0f32..=1.0, 12), a in 0usize..3, b in 0usize..3) {
            let p = PosteriorMatrix::new(4, 3, vals).unwrap();
            let mut perm = vec![0, 1, 2];
            perm.swap(a, b);
            let l = labels();
            let base = pit_loss(&p, &l).unwrap();
            prop_assert!(base >= 0.0);
            prop_assert_eq!(base, pit_loss(&p.permute_columns(&perm), &l).unwrap());
        }
    }
}
