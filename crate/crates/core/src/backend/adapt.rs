use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::features::FeatureSequence;

use super::LabelMatrix;

/// Output of [`concat_adaptation_reformat`]. `reformatted` is false when the
/// input had fewer than two speakers with single-speaker frames and was
/// passed through untouched.
#[derive(Debug, Clone, PartialEq)]
pub struct Reformatted {
    pub features: FeatureSequence,
    pub labels: LabelMatrix,
    pub reformatted: bool,
}

/// Rewrites a training utterance into the two-speaker concatenated layout the
/// global step feeds the model.
///
/// Frames with two or more active speakers (and silent frames) are dropped,
/// the rest are grouped into one block per speaker in temporal order, and two
/// rng-chosen blocks are concatenated. Labels are re-indexed so the first
/// block's speaker is column 0 and the second's column 1.
pub fn concat_adaptation_reformat<R: Rng + ?Sized>(
    features: &FeatureSequence,
    labels: &LabelMatrix,
    rng: &mut R,
) -> Result<Reformatted> {
    if labels.rows() != features.len() {
        return Err(Error::Shape(format!(
            "{} label rows for {} feature frames",
            labels.rows(),
            features.len()
        )));
    }
    let passthrough = || Reformatted { features: features.clone(), labels: labels.clone(), reformatted: false };
    if labels.cols() < 2 {
        return Ok(passthrough());
    }

    let mut blocks: Vec<Vec<usize>> = vec![Vec::new(); labels.cols()];
    for t in 0..labels.rows() {
        if labels.active_count(t) == 1 {
            let s = labels.row(t).iter().position(|&v| v == 1).expect("one active slot");
            blocks[s].push(t);
        }
    }
    let speakers: Vec<usize> = (0..blocks.len()).filter(|&s| !blocks[s].is_empty()).collect();
    if speakers.len() < 2 {
        return Ok(passthrough());
    }

    let picked = sample(rng, speakers.len(), 2);
    let (first, second) = (&blocks[speakers[picked.index(0)]], &blocks[speakers[picked.index(1)]]);
    let order: Vec<usize> = first.iter().chain(second).copied().collect();

    let mut out_labels = LabelMatrix::zeros(order.len(), labels.cols());
    for t in 0..order.len() {
        out_labels.set(t, usize::from(t >= first.len()), true);
    }
    Ok(Reformatted { features: features.gather(&order), labels: out_labels, reformatted: true })
}

/// Applies [`concat_adaptation_reformat`] to a randomly chosen half
/// (`floor(n / 2)`) of the batch; the rest pass through.
pub fn reformat_half_batch<R: Rng + ?Sized>(
    batch: &[(FeatureSequence, LabelMatrix)],
    rng: &mut R,
) -> Result<Vec<Reformatted>> {
    let chosen = sample(rng, batch.len(), batch.len() / 2).into_vec();
    batch
        .iter()
        .enumerate()
        .map(|(i, (f, l))| {
            if chosen.contains(&i) {
                concat_adaptation_reformat(f, l, rng)
            } else {
                Ok(Reformatted { features: f.clone(), labels: l.clone(), reformatted: false })
            }
        })
        .collect()
}
