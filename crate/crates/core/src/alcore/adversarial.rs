use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use super::losses::{discriminator_loss, vae_adversarial_loss, vae_total_loss, vae_transductive_loss, PoolBatch};
use crate::dataio::ExperimentConfig;
use crate::error::{structural, Error, Result};
use crate::nets::{labeled_rank_signal, normalize_predicted_losses, Discriminator, TargetModel, Vae};
use crate::numerics::{Adam, Graph, Optimizer, Tensor};
use crate::rng::{stream, tags, Rng};

/// What the adversarial stage needs from the trained target model.
#[derive(Clone, Debug)]
pub struct AdversarialInputs {
    pub labeled_x: Tensor,
    /// Per-sample classification loss of each labeled sample.
    pub labeled_loss: Vec<f64>,
    pub unlabeled_x: Tensor,
    /// Loss-head output for each unlabeled sample.
    pub unlabeled_pred: Vec<f64>,
}

impl AdversarialInputs {
    pub fn from_model(model: &TargetModel, labeled_x: Tensor, labels: &[usize], unlabeled_x: Tensor) -> Result<Self> {
        let mut g = Graph::new();
        let p = model.params().bind_frozen(&mut g)?;
        let x = g.constant(labeled_x.clone())?;
        let out = model.forward(&mut g, &p, x)?;
        let ce = g.cross_entropy(out.logits, labels)?;
        let labeled_loss = g.value(ce).data().to_vec();
        let unlabeled_pred = model.infer(&unlabeled_x)?.predicted_loss;
        Ok(AdversarialInputs {
            labeled_x,
            labeled_loss,
            unlabeled_x,
            unlabeled_pred,
        })
    }
}

/// Last-epoch means of the adversarial objectives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdversarialSummary {
    pub vae_loss: f64,
    pub recon: f64,
    pub kl: f64,
    pub adversarial: f64,
    pub discriminator: f64,
}

#[derive(Clone, Debug)]
pub struct AdversarialOutcome {
    pub vae: Vae,
    pub disc: Discriminator,
    /// `None` when no epoch ran.
    pub summary: Option<AdversarialSummary>,
}

fn noise(rng: &mut Rng, n: usize, d: usize) -> Tensor {
    let data = (0..n * d).map(|_| StandardNormal.sample(rng)).collect();
    Tensor::new([n, d], data).expect("sized")
}

/// Alternating VAE/discriminator training: per unlabeled batch, one VAE step
/// then one discriminator step on the (detached) latent codes of that step.
pub fn train_adversarial(inputs: &AdversarialInputs, cfg: &ExperimentConfig, cycle: usize) -> Result<AdversarialOutcome> {
    let (n_l, d) = inputs.labeled_x.dims2()?;
    let n_u = inputs.unlabeled_x.dims2()?.0;
    if n_l == 0 || n_u == 0 {
        return Err(structural!("adversarial training needs both pools non-empty"));
    }
    let mut init = stream(cfg.seed, tags::cycle(cycle, tags::ADV_INIT));
    let mut vae = Vae::new(cfg.vae_config(d), &mut init)?;
    let mut disc = Discriminator::new(cfg.latent_dim, &cfg.disc_hidden, &mut init)?;
    let mut noise_rng = stream(cfg.seed, tags::cycle(cycle, tags::ADV_NOISE));
    let mut shuffle = stream(cfg.seed, tags::cycle(cycle, tags::ADV_SHUFFLE));
    let mut vae_opt = Optimizer::Adam(Adam::new(cfg.adv_lr));
    let mut disc_opt = Optimizer::Adam(Adam::new(cfg.adv_lr));
    let latent = cfg.latent_dim;
    let bs = cfg.adv_batch_size;
    let mut u_order: Vec<usize> = (0..n_u).collect();
    let mut l_order: Vec<usize> = (0..n_l).collect();
    let mut summary = None;
    let mut step = 0usize;

    for _ in 0..cfg.adv_epochs {
        u_order.shuffle(&mut shuffle);
        l_order.shuffle(&mut shuffle);
        let mut l_cursor = 0;
        let mut sums = [0.0; 5];
        let mut batches = 0;
        for ub in u_order.chunks(bs) {
            let lb: Vec<usize> = (0..bs.min(n_l)).map(|k| l_order[(l_cursor + k) % n_l]).collect();
            l_cursor += lb.len();
            let r_l = labeled_rank_signal(&lb.iter().map(|&i| inputs.labeled_loss[i]).collect::<Vec<_>>())?;
            let r_u = normalize_predicted_losses(&ub.iter().map(|&i| inputs.unlabeled_pred[i]).collect::<Vec<_>>())?;
            let x_l = inputs.labeled_x.select_rows(&lb);
            let x_u = inputs.unlabeled_x.select_rows(ub);
            let n_lb = noise(&mut noise_rng, lb.len(), latent);
            let n_ub = noise(&mut noise_rng, ub.len(), latent);

            let mut g = Graph::new();
            let vp = vae.params().bind(&mut g)?;
            let dp = disc.params().bind_frozen(&mut g)?;
            let xl = g.constant(x_l)?;
            let xu = g.constant(x_u)?;
            let trans = vae_transductive_loss(
                &mut g,
                &vae,
                &vp,
                PoolBatch { x: xl, rank: &r_l, noise: &n_lb },
                PoolBatch { x: xu, rank: &r_u, noise: &n_ub },
                cfg.beta,
            )?;
            let adv = vae_adversarial_loss(&mut g, &disc, &dp, trans.z_labeled, &r_l, trans.z_unlabeled, &r_u)?;
            let total = vae_total_loss(&mut g, trans.loss, adv, cfg.eta)?;
            let vals = [total, trans.recon, trans.kl, adv].map(|v| g.value(v).item().unwrap_or(f64::NAN));
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("adversarial training diverged at VAE step {step}")));
            }
            let z_l = g.value(trans.z_labeled).clone();
            let z_u = g.value(trans.z_unlabeled).clone();
            let grads = g.backward(total)?.collect(&vp)?;
            vae_opt.step(vae.params_mut().tensors_mut(), &grads)?;

            let mut g = Graph::new();
            let dp = disc.params().bind(&mut g)?;
            let zl = g.constant(z_l)?;
            let zu = g.constant(z_u)?;
            let dl = discriminator_loss(&mut g, &disc, &dp, zl, &r_l, zu, &r_u)?;
            let dval = g.value(dl).item()?;
            if !dval.is_finite() {
                return Err(Error::Numeric(format!("adversarial training diverged at discriminator step {step}")));
            }
            let grads = g.backward(dl)?.collect(&dp)?;
            disc_opt.step(disc.params_mut().tensors_mut(), &grads)?;

            for (s, v) in sums.iter_mut().zip(vals.iter().chain([dval].iter())) {
                *s += v;
            }
            batches += 1;
            step += 1;
        }
        let m = |i: usize| sums[i] / batches as f64;
        summary = Some(AdversarialSummary {
            vae_loss: m(0),
            recon: m(1),
            kl: m(2),
            adversarial: m(3),
            discriminator: m(4),
        });
    }
    Ok(AdversarialOutcome { vae, disc, summary })
}

/// Encoder means of `x` (no sampling).
pub fn latent_means(vae: &Vae, x: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let p = vae.params().bind_frozen(&mut g)?;
    let xv = g.constant(x.clone())?;
    let (mu, _) = vae.encode(&mut g, &p, xv)?;
    Ok(g.value(mu).clone())
}

/// Discriminator outputs on both pools, latent means as codes.
#[derive(Clone, Debug)]
pub struct PoolScores {
    pub labeled: Vec<f64>,
    pub unlabeled: Vec<f64>,
}

impl PoolScores {
    pub fn compute(outcome: &AdversarialOutcome, inputs: &AdversarialInputs) -> Result<Self> {
        let r_l = labeled_rank_signal(&inputs.labeled_loss)?;
        let r_u = normalize_predicted_losses(&inputs.unlabeled_pred)?;
        let labeled = outcome.disc.probabilities(&latent_means(&outcome.vae, &inputs.labeled_x)?, &r_l)?;
        let unlabeled = outcome.disc.probabilities(&latent_means(&outcome.vae, &inputs.unlabeled_x)?, &r_u)?;
        Ok(PoolScores { labeled, unlabeled })
    }

    /// Balanced accuracy of "labeled iff output > 0.5".
    pub fn membership_accuracy(&self) -> f64 {
        let tpr = self.labeled.iter().filter(|&&p| p > 0.5).count() as f64 / self.labeled.len() as f64;
        let tnr = self.unlabeled.iter().filter(|&&p| p <= 0.5).count() as f64 / self.unlabeled.len() as f64;
        0.5 * (tpr + tnr)
    }
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}
