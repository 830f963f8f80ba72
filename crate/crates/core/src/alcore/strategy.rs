use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::capl::PseudoLabelMode;
use crate::error::Error;

/// Query strategy of a run, including the ablation variants of the full method.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    Ssvaal,
    SsvaalRankingOnly,
    SsvaalCaplOnly,
    SsvaalPlainPl,
    Random,
    Entropy,
    Maxloss,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 7] = [
        StrategyKind::Ssvaal,
        StrategyKind::SsvaalRankingOnly,
        StrategyKind::SsvaalCaplOnly,
        StrategyKind::SsvaalPlainPl,
        StrategyKind::Random,
        StrategyKind::Entropy,
        StrategyKind::Maxloss,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Ssvaal => "ssvaal",
            StrategyKind::SsvaalRankingOnly => "ssvaal-ranking-only",
            StrategyKind::SsvaalCaplOnly => "ssvaal-capl-only",
            StrategyKind::SsvaalPlainPl => "ssvaal-plain-pl",
            StrategyKind::Random => "random",
            StrategyKind::Entropy => "entropy",
            StrategyKind::Maxloss => "maxloss",
        }
    }

    /// Trains the loss-prediction head with the sorter-based ranking loss.
    pub fn uses_ranking(self) -> bool {
        matches!(
            self,
            StrategyKind::Ssvaal | StrategyKind::SsvaalRankingOnly | StrategyKind::Maxloss
        )
    }

    /// How unlabeled samples are pseudo-labeled, if at all.
    pub fn pseudo_mode(self) -> Option<PseudoLabelMode> {
        match self {
            StrategyKind::Ssvaal | StrategyKind::SsvaalCaplOnly => Some(PseudoLabelMode::Agreement),
            StrategyKind::SsvaalPlainPl => Some(PseudoLabelMode::ThresholdOnly),
            _ => None,
        }
    }

    /// Selects through the VAE/discriminator game.
    pub fn adversarial(self) -> bool {
        matches!(
            self,
            StrategyKind::Ssvaal
                | StrategyKind::SsvaalRankingOnly
                | StrategyKind::SsvaalCaplOnly
                | StrategyKind::SsvaalPlainPl
        )
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        StrategyKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let names: Vec<_> = StrategyKind::ALL.iter().map(|k| k.name()).collect();
            Error::Config(format!("unknown strategy `{s}` (expected one of: {})", names.join(", ")))
        })
    }
}
