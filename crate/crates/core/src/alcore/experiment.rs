use std::sync::Arc;
use std::time::Instant;

use super::adversarial::{mean, train_adversarial, AdversarialInputs, PoolScores};
use super::pool::PoolState;
use super::select::{baseline_select, select_samples};
use super::train::train_target_cycle;
use crate::capl::pseudo_label_stats;
use crate::dataio::{Dataset, ExperimentConfig, MetricsRecord};
use crate::error::{Error, Result};
use crate::nets::{normalize_predicted_losses, TargetModel};
use crate::ranking::Ranker;
use crate::rng::{stream, tags};

/// Everything measured in one cycle. Cycle 0 is the model trained on the
/// initial labeled set; adversarial fields describe the selection made at the
/// end of the cycle and are absent when none ran.
#[derive(Clone, Debug, PartialEq)]
pub struct CycleMetrics {
    pub cycle: usize,
    pub labeled_count: usize,
    pub test_accuracy: f64,
    pub pseudo_count: usize,
    pub pseudo_error_rate: Option<f64>,
    pub disc_acc: Option<f64>,
    pub disc_mean_labeled: Option<f64>,
    pub disc_mean_unlabeled: Option<f64>,
    pub vae_loss: Option<f64>,
    pub vae_recon: Option<f64>,
    pub vae_kl: Option<f64>,
    pub vae_adversarial: Option<f64>,
    /// Wall-clock time of the cycle; 0 unless time recording is on.
    pub seconds: f64,
}

impl CycleMetrics {
    pub fn record(&self) -> MetricsRecord {
        MetricsRecord {
            cycle: self.cycle,
            labeled_count: self.labeled_count,
            test_accuracy: self.test_accuracy,
            pseudo_count: self.pseudo_count,
            pseudo_error_rate: self.pseudo_error_rate,
            disc_acc: self.disc_acc,
            vae_loss: self.vae_loss,
            seconds: self.seconds,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub metrics: Vec<CycleMetrics>,
    /// Model of the last cycle (parameters at checkpoint precision).
    pub model: TargetModel,
    pub pool: PoolState,
}

/// Validates the configuration against the sorter that will be used.
pub fn check_run(cfg: &ExperimentConfig, ranker: Option<&dyn Ranker>) -> Result<()> {
    let mut problems = Vec::new();
    if let Err(Error::Config(m)) = cfg.validate() {
        problems.push(m);
    }
    if cfg.strategy.uses_ranking() && cfg.lambda > 0.0 {
        match ranker {
            None => problems.push(format!(
                "strategy `{}` trains with the ranking loss and needs a sorter checkpoint (sorter_path)",
                cfg.strategy
            )),
            Some(r) if r.seq_len() > cfg.batch_size => problems.push(format!(
                "batch_size {} is smaller than the sorter length {}",
                cfg.batch_size,
                r.seq_len()
            )),
            Some(_) => {}
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(problems.join("; ")))
    }
}

/// Builds the dataset for `cfg.seed` and runs every cycle.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    ranker: Option<&dyn Ranker>,
    progress: impl FnMut(&CycleMetrics, &PoolState),
) -> Result<RunOutput> {
    check_run(cfg, ranker)?;
    let (train, test) = cfg.build_split(cfg.seed)?;
    run_on_split(cfg, Arc::new(train), &test, ranker, progress)
}

/// Runs all cycles on a prepared train pool and test set.
pub fn run_on_split(
    cfg: &ExperimentConfig,
    train: Arc<Dataset>,
    test: &Dataset,
    ranker: Option<&dyn Ranker>,
    mut progress: impl FnMut(&CycleMetrics, &PoolState),
) -> Result<RunOutput> {
    check_run(cfg, ranker)?;
    if cfg.initial_labeled > train.len() {
        return Err(Error::Config(format!(
            "initial_labeled {} exceeds the {} training samples",
            cfg.initial_labeled,
            train.len()
        )));
    }
    if test.dim() != train.dim() || test.classes() != train.classes() {
        return Err(Error::Structural("train and test sets disagree in shape".into()));
    }
    let mut pool = PoolState::random_initial(
        train.clone(),
        cfg.initial_labeled,
        &mut stream(cfg.seed, tags::INITIAL_POOL),
    )?;
    let mut metrics = Vec::with_capacity(cfg.cycles + 1);
    let mut last_model = None;
    for t in 0..=cfg.cycles {
        let started = Instant::now();
        let trained = train_target_cycle(&pool, cfg, ranker)?;
        let model = trained.model;
        let test_accuracy = model.accuracy(test.features(), test.labels())?;
        let stats = pseudo_label_stats(&trained.records, train.labels());
        let mut m = CycleMetrics {
            cycle: t,
            labeled_count: pool.labeled().len(),
            test_accuracy,
            pseudo_count: stats.count,
            pseudo_error_rate: stats.defined.then_some(stats.error_rate),
            disc_acc: None,
            disc_mean_labeled: None,
            disc_mean_unlabeled: None,
            vae_loss: None,
            vae_recon: None,
            vae_kl: None,
            vae_adversarial: None,
            seconds: 0.0,
        };
        if t < cfg.cycles && !pool.unlabeled().is_empty() {
            let unl_x = train.features().select_rows(pool.unlabeled());
            let picks = if cfg.strategy.adversarial() {
                let inputs = AdversarialInputs::from_model(
                    &model,
                    train.features().select_rows(pool.labeled()),
                    &pool.labeled_targets(),
                    unl_x,
                )?;
                let outcome = train_adversarial(&inputs, cfg, t)?;
                let scores = PoolScores::compute(&outcome, &inputs)?;
                m.disc_acc = Some(scores.membership_accuracy());
                m.disc_mean_labeled = Some(mean(&scores.labeled));
                m.disc_mean_unlabeled = Some(mean(&scores.unlabeled));
                if let Some(s) = outcome.summary {
                    m.vae_loss = Some(s.vae_loss);
                    m.vae_recon = Some(s.recon);
                    m.vae_kl = Some(s.kl);
                    m.vae_adversarial = Some(s.adversarial);
                }
                debug_assert_eq!(normalize_predicted_losses(&inputs.unlabeled_pred)?.len(), scores.unlabeled.len());
                select_samples(&scores.unlabeled, cfg.budget)?
            } else {
                let inf = model.infer(&unl_x)?;
                baseline_select(
                    cfg.strategy,
                    &inf,
                    cfg.budget,
                    &mut stream(cfg.seed, tags::cycle(t, tags::SELECT)),
                )?
            };
            let chosen: Vec<usize> = picks.iter().map(|&p| pool.unlabeled()[p]).collect();
            pool.acquire(&chosen)?;
        }
        if cfg.record_time {
            m.seconds = started.elapsed().as_secs_f64();
        }
        progress(&m, &pool);
        metrics.push(m);
        last_model = Some(model);
    }
    Ok(RunOutput {
        metrics,
        model: last_model.expect("at least one cycle"),
        pool,
    })
}
