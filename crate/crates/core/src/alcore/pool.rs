use std::sync::Arc;

use rand::seq::index::sample;

use crate::dataio::Dataset;
use crate::error::{structural, Result};
use crate::rng::Rng;

/// Labeled/unlabeled partition of a training pool.
#[derive(Clone, Debug)]
pub struct PoolState {
    data: Arc<Dataset>,
    /// In acquisition order.
    labeled: Vec<usize>,
    /// Ascending.
    unlabeled: Vec<usize>,
    cycle: usize,
    history: Vec<Vec<usize>>,
}

impl PoolState {
    /// Starts with the given indices labeled.
    pub fn new(data: Arc<Dataset>, initial: &[usize]) -> Result<Self> {
        let mut pool = PoolState {
            unlabeled: (0..data.len()).collect(),
            data,
            labeled: Vec::new(),
            cycle: 0,
            history: Vec::new(),
        };
        pool.move_to_labeled(initial)?;
        pool.history.push(initial.to_vec());
        Ok(pool)
    }

    /// `k` labeled samples drawn uniformly without replacement.
    pub fn random_initial(data: Arc<Dataset>, k: usize, rng: &mut Rng) -> Result<Self> {
        if k == 0 || k > data.len() {
            return Err(structural!("cannot label {k} of {} samples initially", data.len()));
        }
        let mut picks = sample(rng, data.len(), k).into_vec();
        picks.sort_unstable();
        Self::new(data, &picks)
    }

    fn move_to_labeled(&mut self, picks: &[usize]) -> Result<()> {
        let mut sorted = picks.to_vec();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(structural!("duplicate index in selection {picks:?}"));
        }
        if let Some(&i) = sorted.iter().find(|&&i| self.unlabeled.binary_search(&i).is_err()) {
            return Err(structural!("index {i} is not in the unlabeled pool"));
        }
        self.unlabeled.retain(|i| sorted.binary_search(i).is_err());
        self.labeled.extend_from_slice(picks);
        Ok(())
    }

    /// Oracle step: labels `picks` and advances the cycle counter.
    pub fn acquire(&mut self, picks: &[usize]) -> Result<()> {
        self.move_to_labeled(picks)?;
        self.cycle += 1;
        self.history.push(picks.to_vec());
        Ok(())
    }

    pub fn dataset(&self) -> &Arc<Dataset> {
        &self.data
    }

    pub fn labeled(&self) -> &[usize] {
        &self.labeled
    }

    pub fn unlabeled(&self) -> &[usize] {
        &self.unlabeled
    }

    /// Oracle labels of the labeled samples, aligned with [`Self::labeled`].
    pub fn labeled_targets(&self) -> Vec<usize> {
        self.labeled.iter().map(|&i| self.data.labels()[i]).collect()
    }

    pub fn cycle(&self) -> usize {
        self.cycle
    }

    /// Entry 0 is the initial labeled set; entry `t` the samples acquired in cycle `t`.
    pub fn history(&self) -> &[Vec<usize>] {
        &self.history
    }

    /// Disjoint, exhaustive, and consistent with the acquisition history.
    pub fn check_invariants(&self) -> Result<()> {
        let n = self.data.len();
        let mut seen = vec![false; n];
        for &i in self.labeled.iter().chain(&self.unlabeled) {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(structural!("index {i} is out of range or in both pools"));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(structural!("pools do not cover all {n} samples"));
        }
        let from_history: usize = self.history.iter().map(Vec::len).sum();
        if from_history != self.labeled.len() || self.history.len() != self.cycle + 1 {
            return Err(structural!("labeled set disagrees with acquisition history"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::make_two_moons;
    use crate::rng::stream;

    fn pool(k: usize) -> PoolState {
        let ds = Arc::new(make_two_moons(0, 30, 0.1).unwrap());
        PoolState::random_initial(ds, k, &mut stream(0, 3)).unwrap()
    }

    #[test]
    fn acquisition_keeps_partition() {
        let mut p = pool(5);
        p.check_invariants().unwrap();
        let picks: Vec<usize> = p.unlabeled()[..4].to_vec();
        p.acquire(&picks).unwrap();
        p.check_invariants().unwrap();
        assert_eq!((p.labeled().len(), p.unlabeled().len(), p.cycle()), (9, 21, 1));
        assert!(p.acquire(&picks).is_err());
    }

    #[test]
    fn rejects_duplicates_and_oversized_start() {
        let mut p = pool(5);
        let i = p.unlabeled()[0];
        assert!(p.acquire(&[i, i]).is_err());
        let ds = Arc::new(make_two_moons(0, 4, 0.1).unwrap());
        assert!(PoolState::random_initial(ds, 5, &mut stream(0, 3)).is_err());
    }
}
