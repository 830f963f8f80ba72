use rand::seq::SliceRandom;

use super::pool::PoolState;
use crate::capl::{kmeans_fit, map_clusters, pseudo_label, ClusterLabeler, PseudoLabelMode, PseudoLabelRecord};
use crate::dataio::ExperimentConfig;
use crate::error::{Error, Result};
use crate::nets::TargetModel;
use crate::numerics::{Graph, Optimizer, SgdMomentum, Tensor};
use crate::ranking::{chunked_ranking_loss, task_loss, Ranker};
use crate::rng::{stream, tags};

/// Result of one target-training stage.
#[derive(Clone, Debug)]
pub struct TargetCycle {
    /// Trained model with parameters rounded to checkpoint precision.
    pub model: TargetModel,
    /// One record per unlabeled sample when pseudo labeling ran, else empty.
    pub records: Vec<PseudoLabelRecord>,
    /// Mean training loss of the last epoch.
    pub final_loss: f64,
}

/// Learning rate of supervised epoch `epoch` under the step schedule.
pub fn supervised_lr(cfg: &ExperimentConfig, epoch: usize) -> f64 {
    let passed = cfg
        .lr_milestones
        .iter()
        .filter(|&&m| epoch >= (m * cfg.supervised_epochs as f64).round() as usize)
        .count();
    cfg.lr * cfg.lr_decay.powi(passed as i32)
}

struct Trainer<'a> {
    model: TargetModel,
    opt: Optimizer,
    ranker: Option<&'a dyn Ranker>,
    lambda: f64,
    detach_taps: bool,
}

impl Trainer<'_> {
    /// One SGD step on `x`; the first `n_labeled` rows are oracle-labeled and
    /// feed the ranking loss.
    fn step(&mut self, x: Tensor, y: &[usize], n_labeled: usize) -> Result<f64> {
        let mut g = Graph::new();
        let p = self.model.params().bind(&mut g)?;
        let xv = g.constant(x)?;
        let out = self.model.forward(&mut g, &p, xv)?;
        let ce = g.cross_entropy(out.logits, y)?;
        let mean = g.mean(ce)?;
        let ranking = match self.ranker {
            Some(r) if self.lambda > 0.0 && n_labeled >= r.seq_len() => {
                let taps = if self.detach_taps {
                    out.taps
                        .iter()
                        .map(|&t| g.constant(g.value(t).clone()))
                        .collect::<Result<Vec<_>>>()?
                } else {
                    out.taps.clone()
                };
                let pred = self.model.predicted_loss(&mut g, &p, &taps)?;
                let n = y.len();
                let row = g.reshape(pred, [1, n])?;
                let head = g.slice_cols(row, 0, n_labeled)?;
                let head = g.reshape(head, [n_labeled])?;
                let target = g.value(ce).data()[..n_labeled].to_vec();
                chunked_ranking_loss(&mut g, r, head, &target)?
            }
            _ => None,
        };
        let loss = task_loss(&mut g, mean, ranking, self.lambda)?;
        let value = g.value(loss).item()?;
        if !value.is_finite() {
            return Err(Error::Numeric("non-finite target loss".into()));
        }
        let mut grads = g.backward(loss)?;
        let grads = grads.collect(&p)?;
        self.opt.step(self.model.params_mut().tensors_mut(), &grads)?;
        Ok(value)
    }
}

/// Supervised epochs with `L_target + λ·L_ranking`, pseudo labeling of the
/// unlabeled pool, then semi-supervised epochs on labeled plus pseudo-labeled data.
pub fn train_target_cycle(pool: &PoolState, cfg: &ExperimentConfig, ranker: Option<&dyn Ranker>) -> Result<TargetCycle> {
    let data = pool.dataset();
    let strategy = cfg.strategy;
    let ranking = strategy.uses_ranking() && cfg.lambda > 0.0;
    if ranking && ranker.is_none() {
        return Err(Error::Config(format!("strategy `{strategy}` needs a pretrained sorter")));
    }
    let cycle = pool.cycle();
    let model = TargetModel::new(
        cfg.target_config(data.dim(), data.classes()),
        &mut stream(cfg.seed, tags::cycle(cycle, tags::TARGET_INIT)),
    )?;
    let mut shuffle = stream(cfg.seed, tags::cycle(cycle, tags::TARGET_SHUFFLE));
    let mut t = Trainer {
        model,
        opt: Optimizer::Sgd(SgdMomentum::new(cfg.lr, cfg.momentum, cfg.weight_decay)),
        ranker: if ranking { ranker } else { None },
        lambda: if ranking { cfg.lambda } else { 0.0 },
        detach_taps: cfg.detach_taps,
    };
    let features = data.features();
    let labels = data.labels();
    let mut order = pool.labeled().to_vec();
    let bs = cfg.batch_size;
    let mut final_loss = f64::NAN;

    for epoch in 0..cfg.supervised_epochs {
        t.opt.set_lr(supervised_lr(cfg, epoch));
        order.shuffle(&mut shuffle);
        let mut total = 0.0;
        for batch in order.chunks(bs) {
            let y: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            total += t.step(features.select_rows(batch), &y, batch.len()).map_err(|e| at_epoch(e, epoch))?;
        }
        final_loss = total / order.len().div_ceil(bs) as f64;
    }

    let records = match strategy.pseudo_mode().filter(|_| cfg.capl) {
        Some(mode) if !pool.unlabeled().is_empty() => {
            let unl = features.select_rows(pool.unlabeled());
            let inf = t.model.infer(&unl)?;
            let labeler = match mode {
                PseudoLabelMode::Agreement => {
                    let lab = t.model.infer(&features.select_rows(pool.labeled()))?;
                    let targets = pool.labeled_targets();
                    let k = data.classes().min(targets.len());
                    let kmeans = kmeans_fit(
                        &lab.features,
                        k,
                        &mut stream(cfg.seed, tags::cycle(cycle, tags::KMEANS)),
                    )?;
                    let map = map_clusters(&kmeans, &lab.features, &targets)?;
                    Some(ClusterLabeler { kmeans, map })
                }
                PseudoLabelMode::ThresholdOnly => None,
            };
            pseudo_label(mode, pool.unlabeled(), &inf.probs, &inf.features, labeler.as_ref(), cfg.tau)?
        }
        _ => Vec::new(),
    };
    let mut pseudo: Vec<(usize, usize)> = records
        .iter()
        .filter_map(|r| r.final_label.map(|y| (r.index, y)))
        .collect();

    t.opt.set_lr(cfg.semi_lr);
    let per_batch = bs * cfg.pseudo_ratio;
    for epoch in 0..cfg.semi_epochs {
        let e = cfg.supervised_epochs + epoch;
        order.shuffle(&mut shuffle);
        pseudo.shuffle(&mut shuffle);
        let mut cursor = 0;
        let mut total = 0.0;
        for batch in order.chunks(bs) {
            let mut rows = batch.to_vec();
            let mut y: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            for _ in 0..per_batch.min(pseudo.len()) {
                let (i, label) = pseudo[cursor % pseudo.len()];
                cursor += 1;
                rows.push(i);
                y.push(label);
            }
            total += t.step(features.select_rows(&rows), &y, batch.len()).map_err(|err| at_epoch(err, e))?;
        }
        final_loss = total / order.len().div_ceil(bs) as f64;
    }

    let mut model = t.model;
    model.params_mut().quantize_f32();
    Ok(TargetCycle {
        model,
        records,
        final_loss,
    })
}

fn at_epoch(e: Error, epoch: usize) -> Error {
    match e {
        Error::Numeric(m) => Error::Numeric(format!("target training, epoch {epoch}: {m}")),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::alcore::StrategyKind;
    use crate::dataio::{make_blobs, DatasetKind};

    fn quick(strategy: StrategyKind) -> ExperimentConfig {
        ExperimentConfig {
            dataset: DatasetKind::Blobs,
            strategy,
            supervised_epochs: 20,
            semi_epochs: 5,
            widths: vec![16, 16],
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn schedule_cuts_at_milestones() {
        let cfg = ExperimentConfig::default();
        assert_eq!(supervised_lr(&cfg, 0), 0.05);
        assert!((supervised_lr(&cfg, 42) - 0.005).abs() < 1e-15);
        assert!((supervised_lr(&cfg, 54) - 0.0005).abs() < 1e-15);
    }

    #[test]
    fn beats_majority_class_on_blobs() {
        let ds = Arc::new(make_blobs(0, 400, 4, 2, 0.8).unwrap().normalized().unwrap());
        let pool = PoolState::random_initial(ds.clone(), 20, &mut stream(0, tags::INITIAL_POOL)).unwrap();
        let out = train_target_cycle(&pool, &quick(StrategyKind::Random), None).unwrap();
        let acc = out.model.accuracy(ds.features(), ds.labels()).unwrap();
        assert!(acc > 0.5, "accuracy {acc}");
        assert!(out.records.is_empty());
    }

    #[test]
    fn plain_pseudo_labels_skip_clustering() {
        let ds = Arc::new(make_blobs(1, 300, 3, 2, 0.5).unwrap().normalized().unwrap());
        let pool = PoolState::random_initial(ds, 20, &mut stream(1, tags::INITIAL_POOL)).unwrap();
        let out = train_target_cycle(&pool, &quick(StrategyKind::SsvaalPlainPl), None).unwrap();
        assert_eq!(out.records.len(), 280);
        assert!(out.records.iter().all(|r| r.clustering.is_none() && r.final_label == r.initial));
    }

    #[test]
    fn ranking_without_sorter_is_a_config_error() {
        let ds = Arc::new(make_blobs(0, 40, 2, 2, 0.5).unwrap());
        let pool = PoolState::random_initial(ds, 20, &mut stream(0, 3)).unwrap();
        let err = train_target_cycle(&pool, &quick(StrategyKind::Ssvaal), None).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
