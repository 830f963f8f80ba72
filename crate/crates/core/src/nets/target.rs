use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::params::{Init, Linear, Mlp, ParamSet};
use crate::error::{structural, Result};
use crate::numerics::{Graph, Tensor, Var};

/// Width each tap is projected to inside the loss-prediction head.
pub const HEAD_TAP_WIDTH: usize = 16;

/// How a tap's feature vector is pooled before the per-tap projection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TapReducer {
    /// Mean over the feature dimension (one value per sample and tap).
    Mean,
    /// No pooling; the whole tap vector is projected.
    Identity,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TargetConfig {
    pub input_dim: usize,
    pub classes: usize,
    pub widths: Vec<usize>,
    /// Block indices whose outputs feed the loss-prediction head.
    pub taps: Vec<usize>,
    pub reducer: TapReducer,
}

impl TargetConfig {
    pub fn new(input_dim: usize, classes: usize) -> Self {
        TargetConfig {
            input_dim,
            classes,
            widths: vec![64, 64, 64],
            taps: vec![0, 1, 2],
            reducer: TapReducer::Mean,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.classes < 2 || self.widths.is_empty() {
            return Err(structural!(
                "target model needs input width > 0, at least 2 classes and one block"
            ));
        }
        if self.taps.len() < 2 {
            return Err(structural!("loss-prediction head needs at least 2 taps"));
        }
        if let Some(t) = self.taps.iter().find(|&&t| t >= self.widths.len()) {
            return Err(structural!("tap {t} refers to a missing block"));
        }
        Ok(())
    }
}

/// Auxiliary head predicting the classifier's per-sample loss from tap features.
#[derive(Clone, Debug, PartialEq)]
pub struct LossPredHead {
    reducer: TapReducer,
    tap_widths: Vec<usize>,
    per_tap: Vec<Linear>,
    out: Linear,
}

impl LossPredHead {
    fn new(params: &mut ParamSet, reducer: TapReducer, tap_widths: Vec<usize>, rng: &mut impl Rng) -> Self {
        let per_tap = tap_widths
            .iter()
            .enumerate()
            .map(|(i, &w)| {
                let fan_in = match reducer {
                    TapReducer::Mean => 1,
                    TapReducer::Identity => w,
                };
                Linear::new(params, &format!("losshead.tap{i}"), fan_in, HEAD_TAP_WIDTH, Init::He, rng)
            })
            .collect();
        let out = Linear::new(
            params,
            "losshead.out",
            HEAD_TAP_WIDTH * tap_widths.len(),
            1,
            Init::Zeros,
            rng,
        );
        LossPredHead {
            reducer,
            tap_widths,
            per_tap,
            out,
        }
    }

    /// Predicted loss per sample, shape `[n]`.
    pub fn forward(&self, g: &mut Graph, p: &[Var], taps: &[Var]) -> Result<Var> {
        if taps.len() != self.per_tap.len() {
            return Err(structural!(
                "loss head expects {} taps, got {}",
                self.per_tap.len(),
                taps.len()
            ));
        }
        let mut parts = Vec::with_capacity(taps.len());
        for ((&tap, layer), &width) in taps.iter().zip(&self.per_tap).zip(&self.tap_widths) {
            let (_, w) = g.value(tap).dims2()?;
            if w != width {
                return Err(structural!("tap width {w}, head expects {width}"));
            }
            let pooled = match self.reducer {
                TapReducer::Mean => g.row_mean(tap)?,
                TapReducer::Identity => tap,
            };
            let a = layer.forward(g, p, pooled)?;
            parts.push(g.relu(a)?);
        }
        let joined = g.concat(&parts)?;
        let out = self.out.forward(g, p, joined)?;
        let n = g.value(out).shape()[0];
        g.reshape(out, [n])
    }
}

/// Graph nodes produced by one classifier pass.
#[derive(Clone, Debug)]
pub struct TargetOutputs {
    pub logits: Var,
    pub probs: Var,
    pub taps: Vec<Var>,
    /// Final pre-classifier feature vector.
    pub features: Var,
}

/// Plain tensors from an inference pass.
#[derive(Clone, Debug)]
pub struct Inference {
    pub probs: Tensor,
    pub features: Tensor,
    pub predicted_loss: Vec<f64>,
}

/// Multi-block MLP classifier with an attached loss-prediction head.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetModel {
    config: TargetConfig,
    params: ParamSet,
    backbone: Mlp,
    classifier: Linear,
    loss_head: LossPredHead,
}

impl TargetModel {
    pub fn new(config: TargetConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::new();
        let backbone = Mlp::new(&mut params, "block", config.input_dim, &config.widths, rng);
        let feat = backbone.out_width(config.input_dim);
        let classifier = Linear::new(&mut params, "classifier", feat, config.classes, Init::Zeros, rng);
        let tap_widths = config.taps.iter().map(|&t| config.widths[t]).collect();
        let loss_head = LossPredHead::new(&mut params, config.reducer, tap_widths, rng);
        Ok(TargetModel {
            config,
            params,
            backbone,
            classifier,
            loss_head,
        })
    }

    pub fn config(&self) -> &TargetConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn classes(&self) -> usize {
        self.config.classes
    }

    pub fn loss_head(&self) -> &LossPredHead {
        &self.loss_head
    }

    /// Indices into [`Self::params`] owned by the loss-prediction head.
    pub fn loss_head_param_indices(&self) -> Vec<usize> {
        self.loss_head
            .per_tap
            .iter()
            .chain(std::iter::once(&self.loss_head.out))
            .flat_map(|l| [l.weight_index(), l.bias_index()])
            .collect()
    }

    pub fn forward(&self, g: &mut Graph, p: &[Var], x: Var) -> Result<TargetOutputs> {
        let (_, d) = g.value(x).dims2()?;
        if d != self.config.input_dim {
            return Err(structural!("batch width {d}, model expects {}", self.config.input_dim));
        }
        let blocks = self.backbone.forward_all(g, p, x)?;
        let features = *blocks.last().expect("at least one block");
        let logits = self.classifier.forward(g, p, features)?;
        let probs = g.softmax_rows(logits)?;
        let taps = self.config.taps.iter().map(|&t| blocks[t]).collect();
        Ok(TargetOutputs {
            logits,
            probs,
            taps,
            features,
        })
    }

    pub fn predicted_loss(&self, g: &mut Graph, p: &[Var], taps: &[Var]) -> Result<Var> {
        self.loss_head.forward(g, p, taps)
    }

    /// Forward pass without gradients.
    pub fn infer(&self, x: &Tensor) -> Result<Inference> {
        let mut g = Graph::new();
        let p = self.params.bind_frozen(&mut g)?;
        let xv = g.constant(x.clone())?;
        let out = self.forward(&mut g, &p, xv)?;
        let pred = self.predicted_loss(&mut g, &p, &out.taps)?;
        Ok(Inference {
            probs: g.value(out.probs).clone(),
            features: g.value(out.features).clone(),
            predicted_loss: g.value(pred).data().to_vec(),
        })
    }

    /// Fraction of rows whose argmax matches the label.
    pub fn accuracy(&self, x: &Tensor, labels: &[usize]) -> Result<f64> {
        if labels.is_empty() {
            return Err(structural!("accuracy over an empty set"));
        }
        let inf = self.infer(x)?;
        let hits = labels
            .iter()
            .enumerate()
            .filter(|&(i, &y)| argmax(inf.probs.row(i)) == y)
            .count();
        Ok(hits as f64 / labels.len() as f64)
    }

    /// Rebuilds a model whose architecture is implied by named parameter shapes.
    pub fn from_named<'a>(
        named: impl IntoIterator<Item = (&'a str, &'a Tensor)> + Clone,
        reducer: TapReducer,
        taps: Vec<usize>,
    ) -> Result<Self> {
        let shape_of = |name: &str| {
            named
                .clone()
                .into_iter()
                .find(|(n, _)| *n == name)
                .map(|(_, t)| t.shape().to_vec())
        };
        let mut widths = Vec::new();
        let input_dim = shape_of("block.0.w")
            .ok_or_else(|| structural!("checkpoint has no `block.0.w`"))?[0];
        while let Some(s) = shape_of(&format!("block.{}.w", widths.len())) {
            widths.push(s[1]);
        }
        let classes = shape_of("classifier.w")
            .ok_or_else(|| structural!("checkpoint has no `classifier.w`"))?[1];
        let config = TargetConfig {
            input_dim,
            classes,
            widths,
            taps,
            reducer,
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut model = TargetModel::new(config, &mut rng)?;
        model.params.load_from(named)?;
        Ok(model)
    }
}


/// Index of the largest value; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}
