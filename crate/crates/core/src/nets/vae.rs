use rand::Rng;

use super::params::{Init, Linear, Mlp, ParamSet};
use crate::error::{structural, Result};
use crate::numerics::{Graph, Tensor, Var, PROB_EPS};

#[derive(Clone, Debug, PartialEq)]
pub struct VaeConfig {
    pub input_dim: usize,
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
}

impl VaeConfig {
    pub fn new(input_dim: usize) -> Self {
        VaeConfig {
            input_dim,
            latent_dim: 8,
            hidden: vec![64, 64],
        }
    }
}

/// Graph nodes of one encode/decode pass.
#[derive(Clone, Copy, Debug)]
pub struct VaeOutputs {
    pub mu: Var,
    pub logvar: Var,
    pub z: Var,
    pub recon: Var,
}

/// Gaussian encoder with a rank-conditioned decoder.
#[derive(Clone, Debug, PartialEq)]
pub struct Vae {
    config: VaeConfig,
    params: ParamSet,
    encoder: Mlp,
    mu: Linear,
    logvar: Linear,
    decoder: Mlp,
    recon: Linear,
}

impl Vae {
    pub fn new(config: VaeConfig, rng: &mut impl Rng) -> Result<Self> {
        if config.input_dim == 0 || config.latent_dim == 0 {
            return Err(structural!("VAE needs positive input and latent widths"));
        }
        let mut params = ParamSet::new();
        let encoder = Mlp::new(&mut params, "enc", config.input_dim, &config.hidden, rng);
        let h = encoder.out_width(config.input_dim);
        let mu = Linear::new(&mut params, "enc.mu", h, config.latent_dim, Init::He, rng);
        let logvar = Linear::new(&mut params, "enc.logvar", h, config.latent_dim, Init::Zeros, rng);
        let dec_widths: Vec<usize> = config.hidden.iter().rev().copied().collect();
        let decoder = Mlp::new(&mut params, "dec", config.latent_dim + 1, &dec_widths, rng);
        let h = decoder.out_width(config.latent_dim + 1);
        let recon = Linear::new(&mut params, "dec.out", h, config.input_dim, Init::He, rng);
        Ok(Vae {
            config,
            params,
            encoder,
            mu,
            logvar,
            decoder,
            recon,
        })
    }

    pub fn config(&self) -> &VaeConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    /// `(mu, logvar)`, each `[n, latent]`.
    pub fn encode(&self, g: &mut Graph, p: &[Var], x: Var) -> Result<(Var, Var)> {
        let (_, d) = g.value(x).dims2()?;
        if d != self.config.input_dim {
            return Err(structural!("VAE input width {d}, expected {}", self.config.input_dim));
        }
        let h = self.encoder.forward(g, p, x)?;
        Ok((self.mu.forward(g, p, h)?, self.logvar.forward(g, p, h)?))
    }

    /// Decodes `z` concatenated with the `[n, 1]` rank column.
    pub fn decode(&self, g: &mut Graph, p: &[Var], z: Var, rank: Var) -> Result<Var> {
        let zr = concat_rank(g, z, rank)?;
        let h = self.decoder.forward(g, p, zr)?;
        self.recon.forward(g, p, h)
    }

    /// Full pass with caller-supplied standard-normal noise `[n, latent]`.
    pub fn encode_decode(&self, g: &mut Graph, p: &[Var], x: Var, rank: &[f64], noise: &Tensor) -> Result<VaeOutputs> {
        let (mu, logvar) = self.encode(g, p, x)?;
        let z = reparameterize(g, mu, logvar, noise)?;
        let rank = rank_column(g, rank, g.value(x).shape()[0])?;
        let recon = self.decode(g, p, z, rank)?;
        Ok(VaeOutputs { mu, logvar, z, recon })
    }
}

/// `z = mu + exp(logvar / 2) · noise`.
pub fn reparameterize(g: &mut Graph, mu: Var, logvar: Var, noise: &Tensor) -> Result<Var> {
    if g.value(mu).shape() != noise.shape() {
        return Err(structural!(
            "noise shape {:?} does not match latent shape {:?}",
            noise.shape(),
            g.value(mu).shape()
        ));
    }
    let half = g.scale(logvar, 0.5)?;
    let std = g.exp(half)?;
    let eps = g.constant(noise.clone())?;
    let spread = g.mul(std, eps)?;
    g.add(mu, spread)
}

/// Batch mean of the per-sample KL divergence of `N(mu, exp(logvar))` from `N(0, I)`:
/// `−½ Σ (1 + logvar − mu² − exp(logvar))`.
pub fn kl_to_unit_gaussian(g: &mut Graph, mu: Var, logvar: Var) -> Result<Var> {
    let n = g.value(mu).dims2()?.0;
    if n == 0 {
        return Err(structural!("KL over an empty batch"));
    }
    let mu2 = g.mul(mu, mu)?;
    let var = g.exp(logvar)?;
    let a = g.add_const(logvar, 1.0)?;
    let b = g.sub(a, mu2)?;
    let c = g.sub(b, var)?;
    let total = g.sum(c)?;
    g.scale(total, -0.5 / n as f64)
}

/// The per-sample rank scalars as an `[n, 1]` constant.
pub fn rank_column(g: &mut Graph, rank: &[f64], n: usize) -> Result<Var> {
    if rank.len() != n {
        return Err(structural!("{} rank scalars for {n} samples", rank.len()));
    }
    g.constant(Tensor::new([n, 1], rank.to_vec())?)
}

fn concat_rank(g: &mut Graph, z: Var, rank: Var) -> Result<Var> {
    let (n, _) = g.value(z).dims2()?;
    if g.value(rank).shape() != [n, 1] {
        return Err(structural!("rank column must be [{n}, 1], got {:?}", g.value(rank).shape()));
    }
    g.concat(&[z, rank])
}

/// MLP scoring how likely a rank-conditioned latent code comes from the labeled pool.
#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator {
    latent_dim: usize,
    params: ParamSet,
    body: Mlp,
    out: Linear,
}

impl Discriminator {
    pub fn new(latent_dim: usize, hidden: &[usize], rng: &mut impl Rng) -> Result<Self> {
        if latent_dim == 0 {
            return Err(structural!("discriminator needs a positive latent width"));
        }
        let mut params = ParamSet::new();
        let body = Mlp::new(&mut params, "disc", latent_dim + 1, hidden, rng);
        let h = body.out_width(latent_dim + 1);
        let out = Linear::new(&mut params, "disc.out", h, 1, Init::Zeros, rng);
        Ok(Discriminator {
            latent_dim,
            params,
            body,
            out,
        })
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Probability of "labeled" per sample, shape `[n]`, clamped to `[1e-7, 1 − 1e-7]`.
    pub fn forward(&self, g: &mut Graph, p: &[Var], z: Var, rank: Var) -> Result<Var> {
        let (n, d) = g.value(z).dims2()?;
        if d != self.latent_dim {
            return Err(structural!("latent width {d}, discriminator expects {}", self.latent_dim));
        }
        let zr = concat_rank(g, z, rank)?;
        let h = self.body.forward(g, p, zr)?;
        let logit = self.out.forward(g, p, h)?;
        let prob = g.sigmoid(logit)?;
        let prob = g.clamp(prob, PROB_EPS, 1.0 - PROB_EPS)?;
        g.reshape(prob, [n])
    }

    /// Inference on plain tensors.
    pub fn probabilities(&self, z: &Tensor, rank: &[f64]) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let p = self.params.bind_frozen(&mut g)?;
        let zv = g.constant(z.clone())?;
        let r = rank_column(&mut g, rank, z.shape()[0])?;
        let out = self.forward(&mut g, &p, zv, r)?;
        Ok(g.value(out).data().to_vec())
    }
}
