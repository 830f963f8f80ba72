use super::kmeans::{kmeans_fit, KMeansModel};
use crate::error::{structural, Error, Result};
use crate::nets::argmax;
use crate::numerics::Tensor;
use crate::rng::Rng;

/// Cluster → class map; `None` for clusters without labeled members.
pub type ClusterMap = Vec<Option<usize>>;

/// Maps every cluster to the majority class of its labeled members (ties go
/// to the smallest class index).
pub fn map_clusters(kmeans: &KMeansModel, labeled_features: &Tensor, labels: &[usize]) -> Result<ClusterMap> {
    let n = labeled_features.shape()[0];
    if n == 0 || labels.len() != n {
        return Err(structural!("cluster mapping needs matching non-empty features and labels"));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut votes = vec![vec![0usize; classes]; kmeans.k()];
    for (i, &y) in labels.iter().enumerate() {
        votes[kmeans.nearest(labeled_features.row(i))][y] += 1;
    }
    Ok(votes.iter().map(|v| majority(v)).collect())
}

fn majority(votes: &[usize]) -> Option<usize> {
    let mut best: Option<(usize, usize)> = None;
    for (class, &count) in votes.iter().enumerate() {
        if count > 0 && best.is_none_or(|(_, c)| count > c) {
            best = Some((class, count));
        }
    }
    best.map(|(class, _)| class)
}

/// Argmax class where the top probability is strictly above `tau`, otherwise `None`.
/// Also returns each row's top probability.
pub fn initial_pseudo_labels(probs: &Tensor, tau: f64) -> Result<(Vec<Option<usize>>, Vec<f64>)> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Config(format!("threshold must lie in (0, 1), got {tau}")));
    }
    let (n, c) = probs.dims2()?;
    let mut labels = Vec::with_capacity(n);
    let mut top = Vec::with_capacity(n);
    for i in 0..n {
        let row = probs.row(i);
        let sum: f64 = row.iter().sum();
        if c == 0 || row.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > 1e-6 {
            return Err(structural!("row {i} is not a probability vector"));
        }
        let j = argmax(row);
        top.push(row[j]);
        labels.push((row[j] > tau).then_some(j));
    }
    Ok((labels, top))
}

/// Class of each point's nearest centroid, when that cluster is mapped.
pub fn clustering_labels(kmeans: &KMeansModel, map: &ClusterMap, features: &Tensor) -> Vec<Option<usize>> {
    (0..features.shape()[0])
        .map(|i| map[kmeans.nearest(features.row(i))])
        .collect()
}

/// A label survives only when both sources agree.
pub fn agree(ipl: Option<usize>, cl: Option<usize>) -> Option<usize> {
    match (ipl, cl) {
        (Some(a), Some(b)) if a == b => Some(a),
        _ => None,
    }
}

/// Pseudo-labeling outcome for one unlabeled sample.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoLabelRecord {
    /// Dataset index of the sample.
    pub index: usize,
    pub initial: Option<usize>,
    pub clustering: Option<usize>,
    pub final_label: Option<usize>,
    pub max_prob: f64,
}

/// How final pseudo labels are formed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PseudoLabelMode {
    /// Confidence threshold filtered by clustering agreement.
    Agreement,
    /// Confidence threshold only.
    ThresholdOnly,
}

/// Clustering context fitted on labeled features.
#[derive(Clone, Debug)]
pub struct ClusterLabeler {
    pub kmeans: KMeansModel,
    pub map: ClusterMap,
}

impl ClusterLabeler {
    /// Fits `classes` centroids on labeled features and maps them to classes.
    pub fn fit(labeled_features: &Tensor, labels: &[usize], classes: usize, rng: &mut Rng) -> Result<Self> {
        let kmeans = kmeans_fit(labeled_features, classes, rng)?;
        let map = map_clusters(&kmeans, labeled_features, labels)?;
        Ok(ClusterLabeler { kmeans, map })
    }
}

/// Builds one record per unlabeled sample.
pub fn pseudo_label(
    mode: PseudoLabelMode,
    indices: &[usize],
    probs: &Tensor,
    features: &Tensor,
    labeler: Option<&ClusterLabeler>,
    tau: f64,
) -> Result<Vec<PseudoLabelRecord>> {
    if probs.shape()[0] != indices.len() || features.shape()[0] != indices.len() {
        return Err(structural!("pseudo labeling: indices, probabilities and features disagree in length"));
    }
    let (ipl, top) = initial_pseudo_labels(probs, tau)?;
    let cl = match (mode, labeler) {
        (PseudoLabelMode::Agreement, Some(l)) => clustering_labels(&l.kmeans, &l.map, features),
        (PseudoLabelMode::Agreement, None) => {
            return Err(structural!("agreement pseudo labeling needs a fitted clustering"))
        }
        (PseudoLabelMode::ThresholdOnly, _) => vec![None; indices.len()],
    };
    Ok(indices
        .iter()
        .enumerate()
        .map(|(i, &index)| PseudoLabelRecord {
            index,
            initial: ipl[i],
            clustering: cl[i],
            final_label: match mode {
                PseudoLabelMode::Agreement => agree(ipl[i], cl[i]),
                PseudoLabelMode::ThresholdOnly => ipl[i],
            },
            max_prob: top[i],
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PseudoLabelStats {
    pub count: usize,
    pub errors: usize,
    /// Error rate over labeled records; 0 when `count == 0`.
    pub error_rate: f64,
    /// False when there were no final labels to score.
    pub defined: bool,
}

/// Scores final labels against ground truth indexed by dataset index.
pub fn pseudo_label_stats(records: &[PseudoLabelRecord], truth: &[usize]) -> PseudoLabelStats {
    let mut count = 0;
    let mut errors = 0;
    for r in records {
        if let Some(y) = r.final_label {
            count += 1;
            errors += usize::from(truth[r.index] != y);
        }
    }
    PseudoLabelStats {
        count,
        errors,
        error_rate: if count == 0 { 0.0 } else { errors as f64 / count as f64 },
        defined: count > 0,
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn model(centroids: &[[f64; 1]]) -> KMeansModel {
        KMeansModel {
            centroids: Tensor::from_rows(centroids).unwrap(),
            assignments: vec![],
            iterations: 1,
            inertia: 0.0,
            inertia_history: vec![],
        }
    }

    #[test]
    fn majority_and_ties() {
        assert_eq!(majority(&[0, 3, 1]), Some(1));
        assert_eq!(majority(&[0, 2, 2]), Some(1));
        assert_eq!(majority(&[0, 0, 0]), None);
    }

    #[test]
    fn mapping_handles_empty_clusters() {
        let m = model(&[[0.0], [10.0], [20.0]]);
        let x = Tensor::from_rows(&[[0.1], [0.2], [-0.1], [0.0], [9.0], [11.0]]).unwrap();
        let map = map_clusters(&m, &x, &[1, 1, 1, 2, 2, 0]).unwrap();
        assert_eq!(map, vec![Some(1), Some(0), None]);
    }

    #[test]
    fn threshold_is_strict() {
        let p = Tensor::from_rows(&[[0.97, 0.02, 0.01], [0.90, 0.05, 0.05], [0.95, 0.03, 0.02]]).unwrap();
        let (labels, top) = initial_pseudo_labels(&p, 0.95).unwrap();
        assert_eq!(labels, vec![Some(0), None, None]);
        assert_eq!(top, vec![0.97, 0.90, 0.95]);
    }

    #[test]
    fn malformed_probabilities_are_rejected() {
        let p = Tensor::from_rows(&[[0.5, 0.6]]).unwrap();
        assert!(matches!(initial_pseudo_labels(&p, 0.9), Err(Error::Structural(_))));
        let ok = Tensor::from_rows(&[[0.5, 0.5]]).unwrap();
        assert!(initial_pseudo_labels(&ok, 1.0).is_err());
    }

    #[test]
    fn clustering_label_at_centroid_and_on_boundary() {
        let m = model(&[[0.0], [2.0]]);
        let map = vec![Some(3), Some(5)];
        let x = Tensor::from_rows(&[[2.0], [1.0]]).unwrap();
        assert_eq!(clustering_labels(&m, &map, &x), vec![Some(5), Some(3)]);
        let unmapped = vec![None, Some(5)];
        assert_eq!(clustering_labels(&m, &unmapped, &x), vec![Some(5), None]);
    }

    #[test]
    fn agreement_rule() {
        assert_eq!(agree(Some(2), Some(2)), Some(2));
        assert_eq!(agree(Some(2), Some(3)), None);
        assert_eq!(agree(None, Some(3)), None);
        assert_eq!(agree(Some(1), None), None);
    }

    #[test]
    fn stats_cover_empty_and_perfect() {
        let recs = vec![
            PseudoLabelRecord { index: 0, initial: Some(1), clustering: Some(1), final_label: Some(1), max_prob: 0.99 },
            PseudoLabelRecord { index: 2, initial: None, clustering: Some(1), final_label: None, max_prob: 0.6 },
        ];
        let s = pseudo_label_stats(&recs, &[1, 0, 0]);
        assert_eq!((s.count, s.error_rate, s.defined), (1, 0.0, true));
        let s = pseudo_label_stats(&recs[1..], &[1, 0, 0]);
        assert_eq!((s.count, s.error_rate, s.defined), (0, 0.0, false));
    }

    fn probs_strategy() -> impl Strategy<Value = Tensor> {
        prop::collection::vec(prop::collection::vec(0.01f64..1.0, 3), 1..30).prop_map(|rows| {
            let rows: Vec<Vec<f64>> = rows
                .into_iter()
                .map(|r| {
                    let s: f64 = r.iter().sum();
                    r.into_iter().map(|v| v / s).collect()
                })
                .collect();
            Tensor::from_rows(&rows).unwrap()
        })
    }

    proptest! {
        #[test]
        fn raising_tau_never_adds_labels(p in probs_strategy(), a in 0.05f64..0.95, b in 0.05f64..0.95) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let (l_lo, _) = initial_pseudo_labels(&p, lo).unwrap();
            let (l_hi, _) = initial_pseudo_labels(&p, hi).unwrap();
            for (x, y) in l_lo.iter().zip(&l_hi) {
                prop_assert!(y.is_none() || x == y);
            }
        }

        #[test]
        fn final_labels_are_subset_and_never_flipped(p in probs_strategy(), tau in 0.3f64..0.9) {
            let n = p.shape()[0];
            let features = Tensor::new([n, 1], (0..n).map(|i| i as f64).collect()).unwrap();
            let labeler = ClusterLabeler {
                kmeans: model(&[[0.0], [(n / 2) as f64], [n as f64]]),
                map: vec![Some(0), None, Some(2)],
            };
            let idx: Vec<usize> = (0..n).collect();
            let recs = pseudo_label(PseudoLabelMode::Agreement, &idx, &p, &features, Some(&labeler), tau).unwrap();
            for r in recs {
                if let Some(y) = r.final_label {
                    prop_assert_eq!(r.initial, Some(y));
                    prop_assert_eq!(r.clustering, Some(y));
                    prop_assert!(r.max_prob > tau);
                }
            }
        }
    }
}
