use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::error::{structural, Error, Result};
use crate::numerics::Tensor;
use crate::rng::{stream, tags};

/// Distance of every blob center from the origin.
pub const BLOB_RADIUS: f64 = 4.0;

/// Per-feature statistics a dataset was standardized with.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Labeled feature matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    name: String,
    features: Tensor,
    labels: Vec<usize>,
    classes: usize,
    normalization: Option<Normalization>,
}

impl Dataset {
    /// Checks shape agreement, label range and finiteness.
    pub fn new(name: impl Into<String>, features: Tensor, labels: Vec<usize>, classes: usize) -> Result<Self> {
        let (n, _) = features.dims2()?;
        if n != labels.len() {
            return Err(structural!("{n} feature rows but {} labels", labels.len()));
        }
        if classes == 0 {
            return Err(structural!("a dataset needs at least one class"));
        }
        if let Some((i, y)) = labels.iter().enumerate().find(|(_, &y)| y >= classes) {
            return Err(structural!("sample {i}: label {y} outside [0, {classes})"));
        }
        if !features.is_finite() {
            return Err(Error::Numeric("dataset features contain NaN or infinity".into()));
        }
        Ok(Dataset {
            name: name.into(),
            features,
            labels,
            classes,
            normalization: None,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.shape()[1]
    }

    pub fn normalization(&self) -> Option<&Normalization> {
        self.normalization.as_ref()
    }

    /// Standardizes every feature with statistics of the whole dataset.
    /// Constant features are centered only.
    pub fn normalize(&mut self) -> Result<()> {
        if self.normalization.is_some() {
            return Err(Error::Config(format!("dataset `{}` is already normalized", self.name)));
        }
        let (n, d) = self.features.dims2()?;
        if n == 0 {
            return Err(structural!("cannot normalize an empty dataset"));
        }
        let mut mean = vec![0.0; d];
        for i in 0..n {
            for (m, v) in mean.iter_mut().zip(self.features.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for i in 0..n {
            for ((s, v), m) in var.iter_mut().zip(self.features.row(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std: Vec<f64> = var
            .iter()
            .map(|s| {
                let sd = (s / n as f64).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        for (j, v) in self.features.data_mut().iter_mut().enumerate() {
            let c = j % d;
            *v = (*v - mean[c]) / std[c];
        }
        self.normalization = Some(Normalization { mean, std });
        Ok(())
    }

    pub fn normalized(mut self) -> Result<Self> {
        self.normalize()?;
        Ok(self)
    }

    /// Rows `indices`, in that order. Normalization metadata is kept.
    pub fn subset(&self, indices: &[usize], name: impl Into<String>) -> Dataset {
        Dataset {
            name: name.into(),
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
            normalization: self.normalization.clone(),
        }
    }

    /// Shuffled train/test partition; the test part holds `round(n · test_fraction)` rows.
    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(Error::Config(format!("test_fraction must lie in (0, 1), got {test_fraction}")));
        }
        let n = self.len();
        let n_test = (n as f64 * test_fraction).round() as usize;
        if n_test == 0 || n_test == n {
            return Err(Error::Config(format!(
                "test_fraction {test_fraction} leaves an empty split of {n} samples"
            )));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut stream(seed, tags::SPLIT));
        let (test, train) = order.split_at(n_test);
        Ok((
            self.subset(train, format!("{}-train", self.name)),
            self.subset(test, format!("{}-test", self.name)),
        ))
    }
}

/// `c` isotropic Gaussian blobs in `d` dimensions. Centers sit on a circle of
/// radius [`BLOB_RADIUS`] in the first two coordinates (on a line when
/// `d = 1`), rotated by a seed-dependent phase. Sample `i` has label `i mod c`.
pub fn make_blobs(seed: u64, n: usize, c: usize, d: usize, sigma: f64) -> Result<Dataset> {
    let mut problems = Vec::new();
    if c < 2 {
        problems.push(format!("blobs need at least 2 classes, got {c}"));
    }
    if d == 0 {
        problems.push("blobs need at least one dimension".to_string());
    }
    if n < c {
        problems.push(format!("{n} samples cannot cover {c} classes"));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        problems.push(format!("sigma must be finite and >= 0, got {sigma}"));
    }
    if !problems.is_empty() {
        return Err(Error::Config(problems.join("; ")));
    }
    let mut rng = stream(seed, tags::DATASET);
    let phase = rng.random::<f64>() * 2.0 * PI;
    let centers: Vec<Vec<f64>> = (0..c)
        .map(|k| {
            let mut ctr = vec![0.0; d];
            if d == 1 {
                ctr[0] = (k as f64 - (c - 1) as f64 / 2.0) * BLOB_RADIUS;
            } else {
                let a = phase + 2.0 * PI * k as f64 / c as f64;
                ctr[0] = BLOB_RADIUS * a.cos();
                ctr[1] = BLOB_RADIUS * a.sin();
            }
            ctr
        })
        .collect();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = i % c;
        for &m in &centers[y] {
            data.push(m + sigma * normal.sample(&mut rng));
        }
        labels.push(y);
    }
    Dataset::new("blobs", Tensor::new([n, d], data)?, labels, c)
}

/// Two interleaved half circles of radius 1: class 0 centered at the origin
/// (upper half), class 1 centered at `(1, 0.5)` (lower half), plus Gaussian noise.
pub fn make_two_moons(seed: u64, n: usize, noise: f64) -> Result<Dataset> {
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::Config(format!("noise must be finite and >= 0, got {noise}")));
    }
    let n_outer = n.div_ceil(2);
    let n_inner = n / 2;
    let angle = |j: usize, m: usize| if m > 1 { PI * j as f64 / (m - 1) as f64 } else { 0.0 };
    let mut rng = stream(seed, tags::DATASET);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut data = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for j in 0..n_outer {
        let t = angle(j, n_outer);
        data.push(t.cos() + noise * normal.sample(&mut rng));
        data.push(t.sin() + noise * normal.sample(&mut rng));
        labels.push(0);
    }
    for j in 0..n_inner {
        let t = angle(j, n_inner);
        data.push(1.0 - t.cos() + noise * normal.sample(&mut rng));
        data.push(0.5 - t.sin() + noise * normal.sample(&mut rng));
        labels.push(1);
    }
    Dataset::new("two-moons", Tensor::new([n, 2], data)?, labels, 2)
}
