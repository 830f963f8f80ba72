use rand::Rng;

use super::params::{Init, Linear, ParamSet};
use crate::error::{structural, Result};
use crate::numerics::{Graph, Tensor, Var};

/// Bidirectional LSTM mapping a score sequence to one soft rank per position.
///
/// Each input row is standardized first, so the network only sees the
/// relative configuration of the scores, not their scale.
#[derive(Clone, Debug, PartialEq)]
pub struct SorterNet {
    seq_len: usize,
    hidden: usize,
    params: ParamSet,
    forward_cell: LstmCell,
    backward_cell: LstmCell,
    out: Linear,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct LstmCell {
    w_x: usize,
    w_h: usize,
    b: usize,
}

impl LstmCell {
    fn new(params: &mut ParamSet, name: &str, hidden: usize, rng: &mut impl Rng) -> Self {
        let a = 1.0 / (hidden as f64).sqrt();
        let mut uniform = |rows: usize| {
            let data = (0..rows * 4 * hidden).map(|_| rng.random_range(-a..=a)).collect();
            Tensor::new([rows, 4 * hidden], data).expect("sized")
        };
        let w_x = params.push(format!("{name}.w_x"), uniform(1));
        let w_h = params.push(format!("{name}.w_h"), uniform(hidden));
        // Forget-gate bias starts at 1 so early gradients survive the recurrence.
        let mut bias = vec![0.0; 4 * hidden];
        bias[hidden..2 * hidden].iter_mut().for_each(|v| *v = 1.0);
        let b = params.push(format!("{name}.b"), Tensor::vector(bias));
        LstmCell { w_x, w_h, b }
    }

    /// Hidden state after every step; `reverse` runs from the last step backwards.
    fn run(&self, g: &mut Graph, p: &[Var], steps: &[Var], hidden: usize, reverse: bool) -> Result<Vec<Var>> {
        let n = g.value(steps[0]).shape()[0];
        let mut h = g.constant(Tensor::zeros([n, hidden]))?;
        let mut c = g.constant(Tensor::zeros([n, hidden]))?;
        let mut out = vec![h; steps.len()];
        let order: Box<dyn Iterator<Item = usize>> = if reverse {
            Box::new((0..steps.len()).rev())
        } else {
            Box::new(0..steps.len())
        };
        for t in order {
            let xi = g.matmul(steps[t], p[self.w_x])?;
            let hh = g.matmul(h, p[self.w_h])?;
            let pre = g.add(xi, hh)?;
            let pre = g.add(pre, p[self.b])?;
            let if_gates = g.slice_cols(pre, 0, 2 * hidden)?;
            let if_gates = g.sigmoid(if_gates)?;
            let input_gate = g.slice_cols(if_gates, 0, hidden)?;
            let forget_gate = g.slice_cols(if_gates, hidden, 2 * hidden)?;
            let cand = g.slice_cols(pre, 2 * hidden, 3 * hidden)?;
            let cand = g.tanh(cand)?;
            let out_gate = g.slice_cols(pre, 3 * hidden, 4 * hidden)?;
            let out_gate = g.sigmoid(out_gate)?;
            let keep = g.mul(forget_gate, c)?;
            let write = g.mul(input_gate, cand)?;
            c = g.add(keep, write)?;
            let squashed = g.tanh(c)?;
            h = g.mul(out_gate, squashed)?;
            out[t] = h;
        }
        Ok(out)
    }
}

impl SorterNet {
    pub fn new(seq_len: usize, hidden: usize, rng: &mut impl Rng) -> Result<Self> {
        if seq_len < 2 || hidden == 0 {
            return Err(structural!("sorter needs sequence length >= 2 and a positive hidden width"));
        }
        let mut params = ParamSet::new();
        let forward_cell = LstmCell::new(&mut params, "sorter.fwd", hidden, rng);
        let backward_cell = LstmCell::new(&mut params, "sorter.bwd", hidden, rng);
        // A random projection of the standardized recurrence is already strongly
        // rank-correlated (either sign); a zero projection keeps the untrained
        // sorter rank-agnostic.
        let out = Linear::new(&mut params, "sorter.out", 2 * hidden, 1, Init::Zeros, rng);
        Ok(SorterNet {
            seq_len,
            hidden,
            params,
            forward_cell,
            backward_cell,
            out,
        })
    }

    /// Rebuilds the network from named parameters; widths come from their shapes.
    pub fn from_named<'a>(seq_len: usize, named: impl IntoIterator<Item = (&'a str, &'a Tensor)> + Clone) -> Result<Self> {
        let w_h = named
            .clone()
            .into_iter()
            .find(|(n, _)| *n == "sorter.fwd.w_h")
            .ok_or_else(|| structural!("checkpoint has no `sorter.fwd.w_h`"))?
            .1;
        let hidden = w_h.shape()[0];
        let mut net = SorterNet::new(seq_len, hidden, &mut crate::rng::stream(0, 0))?;
        net.params.load_from(named)?;
        Ok(net)
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Soft ranks `[batch, seq_len]` for scores `[batch, seq_len]`.
    pub fn forward(&self, g: &mut Graph, p: &[Var], scores: Var) -> Result<Var> {
        let (_, len) = g.value(scores).dims2()?;
        if len != self.seq_len {
            return Err(structural!("sorter trained for length {}, got {len}", self.seq_len));
        }
        let x = g.standardize_rows(scores)?;
        let steps = (0..len)
            .map(|t| g.slice_cols(x, t, t + 1))
            .collect::<Result<Vec<_>>>()?;
        let fwd = self.forward_cell.run(g, p, &steps, self.hidden, false)?;
        let bwd = self.backward_cell.run(g, p, &steps, self.hidden, true)?;
        let mut cols = Vec::with_capacity(len);
        for t in 0..len {
            let both = g.concat(&[fwd[t], bwd[t]])?;
            cols.push(g.matmul(both, p[self.out.weight_index()])?);
        }
        let joined = g.concat(&cols)?;
        g.add(joined, p[self.out.bias_index()])
    }
}
