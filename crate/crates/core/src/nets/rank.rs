//! Per-sample rank scalars that condition the VAE decoder and the discriminator.
//! Both pools use the same orientation: 1 marks the highest loss in the batch.

use crate::error::{structural, Result};
use crate::ranking::true_ranks;

/// Rank signal for labeled samples from their target losses: the ascending
/// normalized rank within the batch (highest loss → 1).
pub fn labeled_rank_signal(target_losses: &[f64]) -> Result<Vec<f64>> {
    match target_losses.len() {
        0 => Err(structural!("rank signal of an empty batch")),
        1 => Ok(vec![0.5]),
        _ => Ok(true_ranks(target_losses)?.into_iter().map(|r| 1.0 - r).collect()),
    }
}

/// Min-max normalization of predicted losses to `[0, 1]`; a constant batch maps to 0.5.
pub fn normalize_predicted_losses(predicted: &[f64]) -> Result<Vec<f64>> {
    if predicted.is_empty() {
        return Err(structural!("normalizing an empty batch"));
    }
    let lo = predicted.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = predicted.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi - lo).is_finite() {
        return Err(crate::Error::Numeric("non-finite predicted loss".into()));
    }
    if hi - lo <= 0.0 {
        return Ok(vec![0.5; predicted.len()]);
    }
    Ok(predicted.iter().map(|v| (v - lo) / (hi - lo)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labeled_signal_puts_highest_loss_at_one() {
        assert_eq!(labeled_rank_signal(&[0.3, 0.9, 0.1]).unwrap(), vec![0.5, 1.0, 0.0]);
    }

    #[test]
    fn min_max_and_constant_batches() {
        assert_eq!(normalize_predicted_losses(&[2.0, 4.0, 3.0]).unwrap(), vec![0.0, 1.0, 0.5]);
        assert_eq!(normalize_predicted_losses(&[7.0, 7.0]).unwrap(), vec![0.5, 0.5]);
        assert!(normalize_predicted_losses(&[]).is_err());
    }

    #[test]
    fn signals_stay_in_unit_interval() {
        let xs: Vec<f64> = (0..50).map(|i| ((i * 37) % 11) as f64 - 3.0).collect();
        for v in labeled_rank_signal(&xs).unwrap().into_iter().chain(normalize_predicted_losses(&xs).unwrap()) {
            assert!((0.0..=1.0).contains(&v));
        }
    }
}
