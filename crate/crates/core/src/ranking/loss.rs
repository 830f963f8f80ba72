use super::ranks::true_ranks;
use super::sorter::Ranker;
use crate::error::{structural, Error, Result};
use crate::numerics::{Graph, Tensor, Var};

/// Mean L1 distance between the soft ranks of `pred` and the exact ranks of
/// `target`. `pred` is `[seq_len]` or `[chunks, seq_len]`; `target` holds the
/// same number of values and is treated as fixed ground truth.
pub fn ranking_loss(g: &mut Graph, ranker: &dyn Ranker, pred: Var, target: &[f64]) -> Result<Var> {
    let n_s = ranker.seq_len();
    let shape = g.value(pred).shape().to_vec();
    let chunks = match shape[..] {
        [len] if len == n_s => 1,
        [rows, len] if len == n_s => rows,
        _ => return Err(structural!("ranking loss needs rows of length {n_s}, got shape {shape:?}")),
    };
    if target.len() != chunks * n_s {
        return Err(structural!("{} target values for {} predictions", target.len(), chunks * n_s));
    }
    let pred = g.reshape(pred, [chunks, n_s])?;
    let mut truth = Vec::with_capacity(target.len());
    for row in target.chunks(n_s) {
        truth.extend(true_ranks(row)?);
    }
    let truth = g.constant(Tensor::new([chunks, n_s], truth)?)?;
    let soft = ranker.soft_ranks(g, pred)?;
    let diff = g.sub(soft, truth)?;
    let abs = g.abs(diff)?;
    g.mean(abs)
}

/// [`ranking_loss`] over consecutive chunks of `seq_len` samples of a `[n]`
/// prediction vector. A trailing partial chunk is left out; `None` when no
/// full chunk fits.
pub fn chunked_ranking_loss(g: &mut Graph, ranker: &dyn Ranker, pred: Var, target: &[f64]) -> Result<Option<Var>> {
    let n_s = ranker.seq_len();
    let n = g.value(pred).numel();
    if target.len() != n {
        return Err(structural!("{} targets for {n} predictions", target.len()));
    }
    let chunks = n / n_s;
    if chunks == 0 {
        return Ok(None);
    }
    let row = g.reshape(pred, [1, n])?;
    let used = g.slice_cols(row, 0, chunks * n_s)?;
    let used = g.reshape(used, [chunks, n_s])?;
    ranking_loss(g, ranker, used, &target[..chunks * n_s]).map(Some)
}

/// `L = L_target + λ·L_ranking`. With `λ = 0` or no ranking term the target
/// loss node is returned unchanged.
pub fn task_loss(g: &mut Graph, target_mean: Var, ranking: Option<Var>, lambda: f64) -> Result<Var> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!("lambda must be a finite value >= 0, got {lambda}")));
    }
    match ranking {
        Some(r) if lambda > 0.0 => {
            let weighted = g.scale(r, lambda)?;
            g.add(target_mean, weighted)
        }
        _ => Ok(target_mean),
    }
}
