//! Experiment configuration: a flat TOML document of `key = value` lines.
//! Every key is optional; unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::csvdata::{load_csv_dataset, CsvSchema};
use super::dataset::{make_blobs, make_two_moons, Dataset};
use super::idx::load_idx;
use crate::alcore::StrategyKind;
use crate::error::{Error, Result};
use crate::nets::{TapReducer, TargetConfig, VaeConfig};
use crate::ranking::SorterConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    TwoMoons,
    Blobs,
    Csv,
    Idx,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetKind,
    /// Sample count of generated datasets.
    pub n: usize,
    /// Class count for blobs; upper label bound for csv and idx files.
    pub classes: usize,
    /// Feature dimension for blobs and csv files.
    pub dim: usize,
    pub sigma: f64,
    pub noise: f64,
    pub csv_path: Option<PathBuf>,
    pub csv_header: bool,
    pub idx_images: Option<PathBuf>,
    pub idx_labels: Option<PathBuf>,
    pub test_fraction: f64,

    pub strategy: StrategyKind,
    pub seed: u64,
    /// Seeds used by comparisons when none are given on the command line.
    pub seeds: Vec<u64>,
    pub initial_labeled: usize,
    pub budget: usize,
    pub cycles: usize,

    pub tau: f64,
    pub lambda: f64,
    pub beta: f64,
    pub eta: f64,
    /// Turns clustering-assisted pseudo labeling off for strategies that use it.
    pub capl: bool,

    pub widths: Vec<usize>,
    /// Blocks feeding the loss-prediction head; empty means all.
    pub taps: Vec<usize>,
    pub tap_reducer: TapReducer,
    /// Stop the ranking-loss gradient at the taps so it trains only the loss head.
    pub detach_taps: bool,
    pub latent_dim: usize,
    pub vae_hidden: Vec<usize>,
    pub disc_hidden: Vec<usize>,

    pub batch_size: usize,
    /// Pseudo-labeled samples drawn per labeled sample in a semi-supervised batch.
    pub pseudo_ratio: usize,
    pub supervised_epochs: usize,
    pub semi_epochs: usize,
    pub lr: f64,
    /// Fractions of the supervised epochs after which the learning rate is cut.
    pub lr_milestones: Vec<f64>,
    pub lr_decay: f64,
    /// Learning rate of the semi-supervised epochs.
    pub semi_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,

    pub adv_epochs: usize,
    pub adv_batch_size: usize,
    pub adv_lr: f64,

    pub sorter_path: Option<PathBuf>,
    pub sorter_seq_len: usize,
    pub sorter_hidden: usize,
    pub sorter_epochs: usize,
    pub sorter_vectors_per_epoch: usize,
    pub sorter_batch_size: usize,
    pub sorter_lr: f64,
    pub sorter_heldout: usize,

    pub out_dir: Option<PathBuf>,
    /// Write measured wall-clock seconds to the metrics file instead of 0.
    pub record_time: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let sorter = SorterConfig::default();
        ExperimentConfig {
            dataset: DatasetKind::TwoMoons,
            n: 1000,
            classes: 4,
            dim: 2,
            sigma: 1.0,
            noise: 0.15,
            csv_path: None,
            csv_header: false,
            idx_images: None,
            idx_labels: None,
            test_fraction: 0.2,
            strategy: StrategyKind::Ssvaal,
            seed: 0,
            seeds: (0..10).collect(),
            initial_labeled: 20,
            budget: 20,
            cycles: 5,
            tau: 0.95,
            lambda: 1.0,
            beta: 1.0,
            eta: 1.0,
            capl: true,
            widths: vec![64, 64, 64],
            taps: Vec::new(),
            tap_reducer: TapReducer::Mean,
            detach_taps: true,
            latent_dim: 8,
            vae_hidden: vec![64, 64],
            disc_hidden: vec![64, 64],
            batch_size: 16,
            pseudo_ratio: 3,
            supervised_epochs: 60,
            semi_epochs: 30,
            lr: 0.05,
            lr_milestones: vec![0.7, 0.9],
            lr_decay: 0.1,
            semi_lr: 0.005,
            momentum: 0.9,
            weight_decay: 5e-4,
            adv_epochs: 30,
            adv_batch_size: 64,
            adv_lr: 3e-2,
            sorter_path: None,
            sorter_seq_len: sorter.seq_len,
            sorter_hidden: sorter.hidden,
            sorter_epochs: sorter.epochs,
            sorter_vectors_per_epoch: sorter.vectors_per_epoch,
            sorter_batch_size: sorter.batch_size,
            sorter_lr: sorter.lr,
            sorter_heldout: sorter.heldout,
            out_dir: None,
            record_time: false,
        }
    }
}

fn positive(problems: &mut Vec<String>, name: &str, v: f64) {
    if !(v > 0.0 && v.is_finite()) {
        problems.push(format!("{name} must be a finite value > 0, got {v}"));
    }
}

fn non_negative(problems: &mut Vec<String>, name: &str, v: f64) {
    if !(v >= 0.0 && v.is_finite()) {
        problems.push(format!("{name} must be a finite value >= 0, got {v}"));
    }
}

fn at_least(problems: &mut Vec<String>, name: &str, v: usize, min: usize) {
    if v < min {
        problems.push(format!("{name} must be >= {min}, got {v}"));
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks every range; all problems are reported together.
    pub fn validate(&self) -> Result<()> {
        let mut p = Vec::new();
        let pr = &mut p;
        if !(self.tau > 0.0 && self.tau < 1.0) {
            pr.push(format!("tau must lie in (0, 1), got {}", self.tau));
        }
        at_least(pr, "initial_labeled", self.initial_labeled, 1);
        at_least(pr, "budget", self.budget, 1);
        non_negative(pr, "lambda", self.lambda);
        non_negative(pr, "beta", self.beta);
        non_negative(pr, "eta", self.eta);
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            pr.push(format!("test_fraction must lie in (0, 1), got {}", self.test_fraction));
        }
        match self.dataset {
            DatasetKind::TwoMoons => {
                at_least(pr, "n", self.n, 2);
                non_negative(pr, "noise", self.noise);
            }
            DatasetKind::Blobs => {
                at_least(pr, "classes", self.classes, 2);
                at_least(pr, "dim", self.dim, 1);
                at_least(pr, "n", self.n, self.classes.max(2));
                non_negative(pr, "sigma", self.sigma);
            }
            DatasetKind::Csv => {
                if self.csv_path.is_none() {
                    pr.push("dataset = \"csv\" needs csv_path".into());
                }
                at_least(pr, "dim", self.dim, 1);
                at_least(pr, "classes", self.classes, 2);
            }
            DatasetKind::Idx => {
                if self.idx_images.is_none() || self.idx_labels.is_none() {
                    pr.push("dataset = \"idx\" needs idx_images and idx_labels".into());
                }
                at_least(pr, "classes", self.classes, 2);
            }
        }
        if self.widths.is_empty() || self.widths.contains(&0) {
            pr.push(format!("widths must be non-empty and positive, got {:?}", self.widths));
        }
        let taps = self.resolved_taps();
        if taps.len() < 2 {
            pr.push(format!("the loss-prediction head needs at least 2 taps, got {taps:?}"));
        }
        if let Some(t) = taps.iter().find(|&&t| t >= self.widths.len()) {
            pr.push(format!("tap {t} refers to a missing block (there are {})", self.widths.len()));
        }
        at_least(pr, "latent_dim", self.latent_dim, 1);
        if self.vae_hidden.contains(&0) || self.disc_hidden.contains(&0) {
            pr.push("vae_hidden and disc_hidden entries must be positive".into());
        }
        at_least(pr, "batch_size", self.batch_size, 1);
        positive(pr, "lr", self.lr);
        positive(pr, "semi_lr", self.semi_lr);
        positive(pr, "adv_lr", self.adv_lr);
        non_negative(pr, "weight_decay", self.weight_decay);
        if !(0.0..1.0).contains(&self.momentum) {
            pr.push(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            pr.push(format!("lr_decay must lie in (0, 1], got {}", self.lr_decay));
        }
        if self.lr_milestones.iter().any(|m| !(0.0..=1.0).contains(m)) {
            pr.push(format!("lr_milestones must lie in [0, 1], got {:?}", self.lr_milestones));
        }
        at_least(pr, "adv_batch_size", self.adv_batch_size, 1);
        if let Err(Error::Config(m)) = self.sorter_config(self.seed).validate() {
            pr.push(m);
        }
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p.join("; ")))
        }
    }

    pub fn resolved_taps(&self) -> Vec<usize> {
        if self.taps.is_empty() {
            (0..self.widths.len()).collect()
        } else {
            self.taps.clone()
        }
    }

    pub fn sorter_config(&self, seed: u64) -> SorterConfig {
        SorterConfig {
            seq_len: self.sorter_seq_len,
            hidden: self.sorter_hidden,
            epochs: self.sorter_epochs,
            vectors_per_epoch: self.sorter_vectors_per_epoch,
            batch_size: self.sorter_batch_size,
            lr: self.sorter_lr,
            heldout: self.sorter_heldout,
            seed,
        }
    }

    pub fn target_config(&self, input_dim: usize, classes: usize) -> TargetConfig {
        TargetConfig {
            input_dim,
            classes,
            widths: self.widths.clone(),
            taps: self.resolved_taps(),
            reducer: self.tap_reducer,
        }
    }

    pub fn vae_config(&self, input_dim: usize) -> VaeConfig {
        VaeConfig {
            input_dim,
            latent_dim: self.latent_dim,
            hidden: self.vae_hidden.clone(),
        }
    }

    /// Builds (or loads) the dataset for `seed` and standardizes it.
    pub fn build_dataset(&self, seed: u64) -> Result<Dataset> {
        match self.dataset {
            DatasetKind::TwoMoons => make_two_moons(seed, self.n, self.noise)?.normalized(),
            DatasetKind::Blobs => make_blobs(seed, self.n, self.classes, self.dim, self.sigma)?.normalized(),
            DatasetKind::Csv => {
                let path = self.csv_path.as_deref().ok_or_else(|| Error::Config("missing csv_path".into()))?;
                let schema = CsvSchema {
                    features: self.dim,
                    header: self.csv_header,
                    classes: Some(self.classes),
                    normalize: true,
                };
                load_csv_dataset(path, &schema)
            }
            DatasetKind::Idx => {
                let (Some(img), Some(lbl)) = (&self.idx_images, &self.idx_labels) else {
                    return Err(Error::Config("missing idx_images or idx_labels".into()));
                };
                load_idx(img, lbl, self.classes)
            }
        }
    }

    /// Standardized dataset split into `(train pool, test set)`.
    pub fn build_split(&self, seed: u64) -> Result<(Dataset, Dataset)> {
        self.build_dataset(seed)?.split(self.test_fraction, seed)
    }
}
