//! Clustering-assisted pseudo labeling: k-means on labeled features, a
//! cluster → class map, confidence-threshold labels and the agreement filter.

mod kmeans;
mod pseudo;

pub use kmeans::{kmeans_fit, KMeansModel, MAX_ITERATIONS, SHIFT_TOLERANCE};
pub use pseudo::{
    agree, clustering_labels, initial_pseudo_labels, map_clusters, pseudo_label, pseudo_label_stats, ClusterLabeler,
    ClusterMap, PseudoLabelMode, PseudoLabelRecord, PseudoLabelStats,
};
