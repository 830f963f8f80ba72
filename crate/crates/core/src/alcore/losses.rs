//! Objectives of the VAE/discriminator game. Expectations are batch means with
//! one latent sample per datum.

use crate::error::{structural, Error, Result};
use crate::nets::{kl_to_unit_gaussian, rank_column, Discriminator, Vae};
use crate::numerics::{Graph, Tensor, Var};

/// Inputs from one pool for a VAE pass.
#[derive(Clone, Copy, Debug)]
pub struct PoolBatch<'a> {
    pub x: Var,
    /// Rank scalar per sample.
    pub rank: &'a [f64],
    /// Standard-normal draws `[n, latent]` for the reparameterization.
    pub noise: &'a Tensor,
}

#[derive(Clone, Copy, Debug)]
pub struct TransductiveTerms {
    pub loss: Var,
    pub recon: Var,
    pub kl: Var,
    pub z_labeled: Var,
    pub z_unlabeled: Var,
}

/// Reconstruction error plus `β·KL` summed over both pools.
pub fn vae_transductive_loss(
    g: &mut Graph,
    vae: &Vae,
    p: &[Var],
    labeled: PoolBatch<'_>,
    unlabeled: PoolBatch<'_>,
    beta: f64,
) -> Result<TransductiveTerms> {
    for (name, b) in [("labeled", &labeled), ("unlabeled", &unlabeled)] {
        if g.value(b.x).shape().first().copied().unwrap_or(0) == 0 {
            return Err(structural!("{name} batch is empty"));
        }
    }
    let l = vae.encode_decode(g, p, labeled.x, labeled.rank, labeled.noise)?;
    let u = vae.encode_decode(g, p, unlabeled.x, unlabeled.rank, unlabeled.noise)?;
    let rec_l = g.mse(l.recon, labeled.x)?;
    let rec_u = g.mse(u.recon, unlabeled.x)?;
    let recon = g.add(rec_l, rec_u)?;
    let kl_l = kl_to_unit_gaussian(g, l.mu, l.logvar)?;
    let kl_u = kl_to_unit_gaussian(g, u.mu, u.logvar)?;
    let kl = g.add(kl_l, kl_u)?;
    let loss = if beta == 0.0 {
        recon
    } else {
        let weighted = g.scale(kl, beta)?;
        g.add(recon, weighted)?
    };
    Ok(TransductiveTerms {
        loss,
        recon,
        kl,
        z_labeled: l.z,
        z_unlabeled: u.z,
    })
}

fn disc_probs(g: &mut Graph, disc: &Discriminator, dp: &[Var], z: Var, rank: &[f64]) -> Result<Var> {
    let n = g.value(z).dims2()?.0;
    let r = rank_column(g, rank, n)?;
    disc.forward(g, dp, z, r)
}

/// `−E[log D(z_L)] − E[log D(z_U)]`: the VAE wants both pools to look labeled.
pub fn vae_adversarial_loss(
    g: &mut Graph,
    disc: &Discriminator,
    dp: &[Var],
    z_labeled: Var,
    r_labeled: &[f64],
    z_unlabeled: Var,
    r_unlabeled: &[f64],
) -> Result<Var> {
    let pl = disc_probs(g, disc, dp, z_labeled, r_labeled)?;
    let pu = disc_probs(g, disc, dp, z_unlabeled, r_unlabeled)?;
    adversarial_from_probs(g, pl, pu)
}

/// The adversarial objective given discriminator outputs directly.
pub fn adversarial_from_probs(g: &mut Graph, p_labeled: Var, p_unlabeled: Var) -> Result<Var> {
    let a = g.bce(p_labeled, Tensor::full(g.value(p_labeled).shape().to_vec(), 1.0))?;
    let b = g.bce(p_unlabeled, Tensor::full(g.value(p_unlabeled).shape().to_vec(), 1.0))?;
    g.add(a, b)
}

/// `−E[log D(z_L)] − E[log(1 − D(z_U))]`.
pub fn discriminator_loss(
    g: &mut Graph,
    disc: &Discriminator,
    dp: &[Var],
    z_labeled: Var,
    r_labeled: &[f64],
    z_unlabeled: Var,
    r_unlabeled: &[f64],
) -> Result<Var> {
    let pl = disc_probs(g, disc, dp, z_labeled, r_labeled)?;
    let pu = disc_probs(g, disc, dp, z_unlabeled, r_unlabeled)?;
    discriminator_from_probs(g, pl, pu)
}

pub fn discriminator_from_probs(g: &mut Graph, p_labeled: Var, p_unlabeled: Var) -> Result<Var> {
    let a = g.bce(p_labeled, Tensor::full(g.value(p_labeled).shape().to_vec(), 1.0))?;
    let b = g.bce(p_unlabeled, Tensor::zeros(g.value(p_unlabeled).shape().to_vec()))?;
    g.add(a, b)
}

/// `L_VAE = L_trans + η·L_adv`; with `η = 0` the transductive node is returned as is.
pub fn vae_total_loss(g: &mut Graph, trans: Var, adv: Var, eta: f64) -> Result<Var> {
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::Config(format!("eta must be a finite value >= 0, got {eta}")));
    }
    if eta == 0.0 {
        return Ok(trans);
    }
    let w = g.scale(adv, eta)?;
    g.add(trans, w)
}
