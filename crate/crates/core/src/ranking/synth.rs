use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::ranks::true_ranks;
use crate::numerics::Tensor;
use crate::rng::{stream, Rng};

/// One batch of synthetic sorter training data.
#[derive(Clone, Debug, PartialEq)]
pub struct SorterBatch {
    /// `[batch, seq_len]` raw scores.
    pub scores: Tensor,
    /// `[batch, seq_len]` exact normalized ranks of `scores`.
    pub ranks: Tensor,
}

/// Deterministic batch for `seed`.
pub fn gen_sorter_batch(seed: u64, seq_len: usize, batch: usize) -> SorterBatch {
    sample_sorter_batch(&mut stream(seed, crate::rng::tags::SORTER_TRAIN), seq_len, batch)
}

/// Draws score vectors from a mixture of uniform, Gaussian, skewed and
/// piecewise-sorted generators, covering both random and nearly-ordered inputs.
pub fn sample_sorter_batch(rng: &mut Rng, seq_len: usize, batch: usize) -> SorterBatch {
    let mut scores = Vec::with_capacity(batch * seq_len);
    let mut ranks = Vec::with_capacity(batch * seq_len);
    for _ in 0..batch {
        let v = sample_vector(rng, seq_len);
        ranks.extend(true_ranks(&v).expect("finite vector of length >= 2"));
        scores.extend(v);
    }
    SorterBatch {
        scores: Tensor::new([batch, seq_len], scores).expect("sized"),
        ranks: Tensor::new([batch, seq_len], ranks).expect("sized"),
    }
}

fn sample_vector(rng: &mut Rng, n: usize) -> Vec<f64> {
    match rng.random_range(0..4) {
        0 => (0..n).map(|_| rng.random::<f64>()).collect(),
        1 => {
            let mean = rng.random_range(-2.0..2.0);
            let std = rng.random_range(0.1..2.0);
            let normal = Normal::new(mean, std).expect("positive std");
            (0..n).map(|_| normal.sample(rng)).collect()
        }
        2 => {
            // Loss-like: many small values, a few large ones.
            let scale = rng.random_range(0.05..3.0);
            (0..n).map(|_| -scale * (1.0 - rng.random::<f64>()).ln()).collect()
        }
        _ => {
            let segments = rng.random_range(1..=4usize).min(n);
            let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let mut start = 0;
            for s in 0..segments {
                let end = if s + 1 == segments { n } else { start + n / segments };
                let seg = &mut v[start..end];
                seg.sort_by(f64::total_cmp);
                if rng.random::<bool>() {
                    seg.reverse();
                }
                start = end;
            }
            v
        }
    }
}
