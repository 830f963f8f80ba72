use rand::seq::index::sample;

use super::strategy::StrategyKind;
use crate::error::{structural, Result};
use crate::nets::Inference;
use crate::rng::Rng;

/// Positions of the `b` smallest values; ties go to the lower position. Fewer
/// than `b` candidates selects all of them. Output is ascending.
pub fn select_samples(probs: &[f64], b: usize) -> Result<Vec<usize>> {
    pick(probs, b, |a, c| a.total_cmp(c))
}

/// Positions of the `b` largest values, same tie rule.
fn select_largest(values: &[f64], b: usize) -> Result<Vec<usize>> {
    pick(values, b, |a, c| c.total_cmp(a))
}

fn pick(values: &[f64], b: usize, cmp: impl Fn(&f64, &f64) -> std::cmp::Ordering) -> Result<Vec<usize>> {
    if values.is_empty() {
        return Err(structural!("selection from an empty unlabeled pool"));
    }
    if b == 0 {
        return Err(structural!("selection budget must be at least 1"));
    }
    if let Some(i) = values.iter().position(|v| v.is_nan()) {
        return Err(crate::Error::Numeric(format!("selection score {i} is NaN")));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| cmp(&values[i], &values[j]).then(i.cmp(&j)));
    order.truncate(b);
    order.sort_unstable();
    Ok(order)
}

/// Shannon entropy (nats) of each probability row.
pub fn prediction_entropy(probs: &crate::numerics::Tensor) -> Result<Vec<f64>> {
    let (n, _) = probs.dims2()?;
    Ok((0..n)
        .map(|i| -probs.row(i).iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>())
        .collect())
}

/// Non-adversarial query strategies over the unlabeled pool.
pub fn baseline_select(strategy: StrategyKind, unlabeled: &Inference, b: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    let n = unlabeled.probs.shape()[0];
    match strategy {
        StrategyKind::Random => {
            if n == 0 {
                return Err(structural!("selection from an empty unlabeled pool"));
            }
            if b == 0 {
                return Err(structural!("selection budget must be at least 1"));
            }
            let mut picks = sample(rng, n, b.min(n)).into_vec();
            picks.sort_unstable();
            Ok(picks)
        }
        StrategyKind::Entropy => select_largest(&prediction_entropy(&unlabeled.probs)?, b),
        StrategyKind::Maxloss => select_largest(&unlabeled.predicted_loss, b),
        other => Err(structural!("`{other}` is not a baseline strategy")),
    }
}
