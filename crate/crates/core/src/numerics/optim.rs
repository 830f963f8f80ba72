use super::tensor::Tensor;
use crate::error::{structural, Result};

/// Heavy-ball SGD: `v ← m·v + g + wd·p`, `p ← p − lr·v`.
#[derive(Debug, Clone)]
pub struct SgdMomentum {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Tensor>,
    steps: u64,
}

impl SgdMomentum {
    pub fn new(lr: f64, momentum: f64, weight_decay: f64) -> Self {
        SgdMomentum {
            lr,
            momentum,
            weight_decay,
            velocity: Vec::new(),
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn velocity(&self) -> &[Tensor] {
        &self.velocity
    }

    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        check_shapes(params, grads)?;
        init_buffers(&mut self.velocity, params)?;
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            for ((p, g), v) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
                *v = self.momentum * *v + g + self.weight_decay * *p;
                *p -= self.lr * *v;
            }
        }
        self.steps += 1;
        Ok(())
    }
}

/// Bias-corrected Adam.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    steps: u64,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            first: Vec::new(),
            second: Vec::new(),
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        check_shapes(params, grads)?;
        init_buffers(&mut self.first, params)?;
        init_buffers(&mut self.second, params)?;
        self.steps += 1;
        let t = self.steps as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            let it = p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut()));
            for ((p, &g), (m, v)) in it {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    SgdMomentum,
    Adam,
}

/// Optimizer state for one parameter set.
#[derive(Debug, Clone)]
pub enum Optimizer {
    Sgd(SgdMomentum),
    Adam(Adam),
}

impl Optimizer {
    pub fn kind(&self) -> OptimizerKind {
        match self {
            Optimizer::Sgd(_) => OptimizerKind::SgdMomentum,
            Optimizer::Adam(_) => OptimizerKind::Adam,
        }
    }

    pub fn set_lr(&mut self, lr: f64) {
        match self {
            Optimizer::Sgd(o) => o.lr = lr,
            Optimizer::Adam(o) => o.lr = lr,
        }
    }

    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        match self {
            Optimizer::Sgd(o) => o.step(params, grads),
            Optimizer::Adam(o) => o.step(params, grads),
        }
    }
}

fn check_shapes(params: &[Tensor], grads: &[Tensor]) -> Result<()> {
    if params.len() != grads.len() {
        return Err(structural!("{} parameters but {} gradients", params.len(), grads.len()));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if !p.same_shape(g) {
            return Err(structural!(
                "parameter {i} has shape {:?}, gradient {:?}",
                p.shape(),
                g.shape()
            ));
        }
    }
    Ok(())
}

fn init_buffers(buffers: &mut Vec<Tensor>, params: &[Tensor]) -> Result<()> {
    if buffers.is_empty() {
        *buffers = params.iter().map(Tensor::zeros_like).collect();
        return Ok(());
    }
    if buffers.len() != params.len() || buffers.iter().zip(params).any(|(b, p)| !b.same_shape(p)) {
        return Err(structural!("optimizer state does not match the parameter set"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_params(v: f64) -> Vec<Tensor> {
        vec![Tensor::scalar(v)]
    }

    #[test]
    fn sgd_first_step() {
        let mut opt = SgdMomentum::new(0.1, 0.9, 0.0);
        let mut p = scalar_params(1.0);
        opt.step(&mut p, &scalar_params(0.1)).unwrap();
        assert!((opt.velocity()[0].data()[0] - 0.1).abs() < 1e-15);
        assert!((p[0].data()[0] - 0.99).abs() < 1e-15);
    }

    #[test]
    fn sgd_zero_gradient_decays_velocity_only() {
        let mut opt = SgdMomentum::new(0.1, 0.9, 0.0);
        let mut p = scalar_params(1.0);
        opt.step(&mut p, &scalar_params(0.1)).unwrap();
        let before = p[0].data()[0];
        let mut q = p.clone();
        let mut probe = opt.clone();
        probe.lr = 0.0;
        probe.step(&mut q, &scalar_params(0.0)).unwrap();
        assert_eq!(q[0].data()[0], before);
        assert!((probe.velocity()[0].data()[0] - 0.09).abs() < 1e-15);
    }

    #[test]
    fn sgd_two_steps_follow_recurrence() {
        let mut opt = SgdMomentum::new(0.1, 0.9, 0.0);
        let mut p = scalar_params(1.0);
        for _ in 0..2 {
            opt.step(&mut p, &scalar_params(0.1)).unwrap();
        }
        assert!((opt.velocity()[0].data()[0] - 0.19).abs() < 1e-15);
        assert!((p[0].data()[0] - 0.971).abs() < 1e-12);
        assert_eq!(opt.steps(), 2);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut opt = Adam::new(0.001);
        let mut p = scalar_params(1.0);
        opt.step(&mut p, &scalar_params(0.1)).unwrap();
        assert!((p[0].data()[0] - 0.999).abs() < 1e-9);
    }

    #[test]
    fn adam_zero_gradient_keeps_parameter() {
        let mut opt = Adam::new(0.001);
        let mut p = scalar_params(1.0);
        opt.step(&mut p, &scalar_params(0.0)).unwrap();
        assert_eq!(p[0].data()[0], 1.0);
    }

    #[test]
    fn adam_matches_scalar_recurrence_for_ten_steps() {
        let (lr, b1, b2, eps, g) = (0.01, 0.9, 0.999, 1e-8, 0.3);
        let mut opt = Adam::new(lr);
        let mut p = scalar_params(0.5);
        let (mut x, mut m, mut v) = (0.5f64, 0.0f64, 0.0f64);
        for t in 1..=10 {
            opt.step(&mut p, &scalar_params(g)).unwrap();
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            x -= lr * mh / (vh.sqrt() + eps);
        }
        assert!((p[0].data()[0] - x).abs() < 1e-12);
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let mut opt = Optimizer::Sgd(SgdMomentum::new(0.1, 0.9, 0.0));
        let mut p = vec![Tensor::zeros([2])];
        assert!(opt.step(&mut p, &[Tensor::zeros([3])]).is_err());
        assert!(opt.step(&mut p, &[]).is_err());
    }
}
