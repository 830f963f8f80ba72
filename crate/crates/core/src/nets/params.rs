use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{structural, Result};
use crate::numerics::{Graph, Tensor, Var};

/// Ordered, named parameter tensors of one network.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a tensor and returns its position.
    pub fn push(&mut self, name: impl Into<String>, t: Tensor) -> usize {
        self.names.push(name.into());
        self.tensors.push(t);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Inserts every tensor as a trainable leaf.
    pub fn bind(&self, g: &mut Graph) -> Result<Vec<Var>> {
        self.tensors.iter().map(|t| g.param(t.clone())).collect()
    }

    /// Inserts every tensor as a constant (no gradient is computed for it).
    pub fn bind_frozen(&self, g: &mut Graph) -> Result<Vec<Var>> {
        self.tensors.iter().map(|t| g.constant(t.clone())).collect()
    }

    pub fn quantize_f32(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::quantize_f32);
    }

    /// Replaces all values from another set with identical names and shapes.
    pub fn load_from<'a>(&mut self, named: impl IntoIterator<Item = (&'a str, &'a Tensor)>) -> Result<()> {
        let mut seen = 0;
        for (name, t) in named {
            let i = self
                .names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| structural!("unexpected parameter block `{name}`"))?;
            if !self.tensors[i].same_shape(t) {
                return Err(structural!(
                    "parameter `{name}`: expected shape {:?}, found {:?}",
                    self.tensors[i].shape(),
                    t.shape()
                ));
            }
            self.tensors[i] = t.clone();
            seen += 1;
        }
        if seen != self.tensors.len() {
            return Err(structural!("expected {} parameter blocks, found {seen}", self.tensors.len()));
        }
        Ok(())
    }
}

/// Affine layer `x·W + b` referencing two entries of a [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Linear {
    w: usize,
    b: usize,
    pub fan_in: usize,
    pub fan_out: usize,
}

/// How a fresh [`Linear`] is filled.
#[derive(Clone, Copy, Debug)]
pub enum Init {
    /// Weights ~ N(0, 2/fan_in), zero bias.
    He,
    /// Weights ~ U(−a, a), zero bias.
    Uniform(f64),
    Zeros,
}

impl Linear {
    pub fn new(
        params: &mut ParamSet,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        init: Init,
        rng: &mut impl Rng,
    ) -> Self {
        let n = fan_in * fan_out;
        let data: Vec<f64> = match init {
            Init::He => {
                let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
                (0..n).map(|_| normal.sample(rng)).collect()
            }
            Init::Uniform(a) => {
                let u = Uniform::new_inclusive(-a, a).expect("valid range");
                (0..n).map(|_| u.sample(rng)).collect()
            }
            Init::Zeros => vec![0.0; n],
        };
        let w = params.push(format!("{name}.w"), Tensor::new([fan_in, fan_out], data).expect("sized"));
        let b = params.push(format!("{name}.b"), Tensor::zeros([fan_out]));
        Linear { w, b, fan_in, fan_out }
    }

    pub fn forward(&self, g: &mut Graph, p: &[Var], x: Var) -> Result<Var> {
        let y = g.matmul(x, p[self.w])?;
        g.add(y, p[self.b])
    }

    pub fn weight_index(&self) -> usize {
        self.w
    }

    pub fn bias_index(&self) -> usize {
        self.b
    }
}

/// Stack of `affine + relu` blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    pub fn new(params: &mut ParamSet, name: &str, input: usize, widths: &[usize], rng: &mut impl Rng) -> Self {
        let mut fan_in = input;
        let layers = widths
            .iter()
            .enumerate()
            .map(|(i, &w)| {
                let l = Linear::new(params, &format!("{name}.{i}"), fan_in, w, Init::He, rng);
                fan_in = w;
                l
            })
            .collect();
        Mlp { layers }
    }

    pub fn out_width(&self, input: usize) -> usize {
        self.layers.last().map_or(input, |l| l.fan_out)
    }

    /// Returns every block output, first to last.
    pub fn forward_all(&self, g: &mut Graph, p: &[Var], mut x: Var) -> Result<Vec<Var>> {
        let mut outs = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let a = l.forward(g, p, x)?;
            x = g.relu(a)?;
            outs.push(x);
        }
        Ok(outs)
    }

    pub fn forward(&self, g: &mut Graph, p: &[Var], x: Var) -> Result<Var> {
        Ok(self.forward_all(g, p, x)?.pop().unwrap_or(x))
    }
}
