use serde::{Deserialize, Serialize};

use super::ranks::{spearman, true_ranks};
use super::synth::sample_sorter_batch;
use crate::error::{structural, Error, Result};
use crate::nets::SorterNet;
use crate::numerics::{Adam, Graph, Tensor, Var};
use crate::rng::{stream, tags};

/// Anything that maps `[batch, seq_len]` scores to soft ranks of the same shape.
pub trait Ranker {
    fn seq_len(&self) -> usize;
    fn soft_ranks(&self, g: &mut Graph, scores: Var) -> Result<Var>;
}

/// Exact ranks as a constant node. Carries no gradient; useful as a reference.
#[derive(Clone, Copy, Debug)]
pub struct ExactRanker {
    pub seq_len: usize,
}

impl Ranker for ExactRanker {
    fn seq_len(&self) -> usize {
        self.seq_len
    }

    fn soft_ranks(&self, g: &mut Graph, scores: Var) -> Result<Var> {
        let t = g.value(scores);
        let (rows, cols) = t.dims2()?;
        if cols != self.seq_len {
            return Err(structural!("ranker length {}, got {cols}", self.seq_len));
        }
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            out.extend(true_ranks(t.row(r))?);
        }
        g.constant(Tensor::new([rows, cols], out)?)
    }
}

/// Pretrained differentiable sorter. Immutable once trained.
#[derive(Clone, Debug, PartialEq)]
pub struct Sorter {
    net: SorterNet,
}

impl Sorter {
    pub fn new(net: SorterNet) -> Self {
        Sorter { net }
    }

    pub fn net(&self) -> &SorterNet {
        &self.net
    }

    /// Soft ranks of plain score rows.
    pub fn rank_rows(&self, scores: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let x = g.constant(scores.clone())?;
        let y = self.soft_ranks(&mut g, x)?;
        Ok(g.value(y).clone())
    }

    /// Mean per-vector Spearman correlation between soft and exact ranks.
    pub fn mean_spearman(&self, scores: &Tensor, exact: &Tensor) -> Result<f64> {
        let soft = self.rank_rows(scores)?;
        let rows = scores.dims2()?.0;
        let mut total = 0.0;
        for r in 0..rows {
            total += spearman(soft.row(r), exact.row(r))?;
        }
        Ok(total / rows as f64)
    }
}

impl Ranker for Sorter {
    fn seq_len(&self) -> usize {
        self.net.seq_len()
    }

    fn soft_ranks(&self, g: &mut Graph, scores: Var) -> Result<Var> {
        let p = self.net.params().bind_frozen(g)?;
        self.net.forward(g, &p, scores)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SorterConfig {
    pub seq_len: usize,
    pub hidden: usize,
    pub epochs: usize,
    /// Fresh synthetic vectors drawn per epoch.
    pub vectors_per_epoch: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub heldout: usize,
    pub seed: u64,
}

impl Default for SorterConfig {
    fn default() -> Self {
        SorterConfig {
            seq_len: 16,
            hidden: 128,
            epochs: 100,
            vectors_per_epoch: 500,
            batch_size: 32,
            lr: 2e-3,
            heldout: 1000,
            seed: 0,
        }
    }
}

impl SorterConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.seq_len < 2 {
            problems.push("sorter seq_len must be >= 2");
        }
        if self.hidden == 0 {
            problems.push("sorter hidden must be > 0");
        }
        if self.vectors_per_epoch == 0 || self.batch_size == 0 {
            problems.push("sorter vectors_per_epoch and batch_size must be > 0");
        }
        if self.heldout == 0 {
            problems.push("sorter heldout must be > 0");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            problems.push("sorter lr must be positive");
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

/// Training curve and held-out quality of a pretrained sorter.
#[derive(Clone, Debug, PartialEq)]
pub struct SorterReport {
    pub epoch_losses: Vec<f64>,
    /// L1 loss on one fixed strictly decreasing input, after each epoch.
    pub identity_losses: Vec<f64>,
    pub untrained_spearman: f64,
    pub heldout_spearman: f64,
}

/// Trains a sorter on synthetic data with an L1 loss between soft and exact
/// ranks. `progress(epoch, mean_loss)` is called after every epoch.
pub fn pretrain_sorter(config: &SorterConfig, mut progress: impl FnMut(usize, f64)) -> Result<(Sorter, SorterReport)> {
    config.validate()?;
    let mut net = SorterNet::new(config.seq_len, config.hidden, &mut stream(config.seed, tags::SORTER_INIT))?;
    let heldout = sample_sorter_batch(&mut stream(config.seed, tags::SORTER_HELDOUT), config.seq_len, config.heldout);
    let untrained_spearman = Sorter::new(net.clone()).mean_spearman(&heldout.scores, &heldout.ranks)?;

    let identity_scores: Vec<f64> = (0..config.seq_len).rev().map(|v| v as f64).collect();
    let identity = Tensor::new([1, config.seq_len], identity_scores.clone())?;
    let identity_ranks = Tensor::new([1, config.seq_len], true_ranks(&identity_scores)?)?;

    let mut opt = Adam::new(config.lr);
    let mut rng = stream(config.seed, tags::SORTER_TRAIN);
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut identity_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let at_epoch = |e: Error| Error::Numeric(format!("sorter diverged in epoch {epoch}: {e}"));
        let mut remaining = config.vectors_per_epoch;
        let mut total = 0.0;
        while remaining > 0 {
            let b = remaining.min(config.batch_size);
            remaining -= b;
            let batch = sample_sorter_batch(&mut rng, config.seq_len, b);
            let mut g = Graph::new();
            let p = net.params().bind(&mut g)?;
            let (loss, value) = l1_loss(&mut g, &net, &p, &batch.scores, &batch.ranks).map_err(at_epoch)?;
            let mut grads = g.backward(loss).map_err(at_epoch)?;
            let grads = grads.collect(&p)?;
            opt.step(net.params_mut().tensors_mut(), &grads)?;
            total += value * b as f64;
        }
        let mean = total / config.vectors_per_epoch as f64;
        if !mean.is_finite() {
            return Err(at_epoch(Error::Numeric("loss is not finite".into())));
        }
        epoch_losses.push(mean);
        let mut g = Graph::new();
        let p = net.params().bind_frozen(&mut g)?;
        identity_losses.push(l1_loss(&mut g, &net, &p, &identity, &identity_ranks)?.1);
        progress(epoch, mean);
    }

    // The in-memory sorter matches exactly what a checkpoint stores.
    net.params_mut().quantize_f32();
    let sorter = Sorter::new(net);
    let heldout_spearman = sorter.mean_spearman(&heldout.scores, &heldout.ranks)?;
    Ok((
        sorter,
        SorterReport {
            epoch_losses,
            identity_losses,
            untrained_spearman,
            heldout_spearman,
        },
    ))
}

/// Held-out set used by [`pretrain_sorter`] for `config`.
pub fn heldout_set(config: &SorterConfig) -> super::SorterBatch {
    sample_sorter_batch(&mut stream(config.seed, tags::SORTER_HELDOUT), config.seq_len, config.heldout)
}

fn l1_loss(g: &mut Graph, net: &SorterNet, p: &[Var], scores: &Tensor, ranks: &Tensor) -> Result<(Var, f64)> {
    let x = g.constant(scores.clone())?;
    let y = net.forward(g, p, x)?;
    let t = g.constant(ranks.clone())?;
    let d = g.sub(y, t)?;
    let a = g.abs(d)?;
    let loss = g.mean(a)?;
    let value = g.value(loss).item()?;
    Ok((loss, value))
}
