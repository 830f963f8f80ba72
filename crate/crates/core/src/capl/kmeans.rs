use rand::Rng as _;

use crate::error::{structural, Error, Result};
use crate::numerics::Tensor;
use crate::rng::Rng;

pub const MAX_ITERATIONS: usize = 100;
pub const SHIFT_TOLERANCE: f64 = 1e-4;

/// Fitted k-means model.
#[derive(Clone, Debug, PartialEq)]
pub struct KMeansModel {
    /// `[k, d]` centroids.
    pub centroids: Tensor,
    /// Assignment of each fitted point to its nearest centroid.
    pub assignments: Vec<usize>,
    pub iterations: usize,
    pub inertia: f64,
    /// Inertia after every assignment step, in order.
    pub inertia_history: Vec<f64>,
}

impl KMeansModel {
    pub fn k(&self) -> usize {
        self.centroids.shape()[0]
    }

    /// Nearest centroid of one point; ties go to the lowest centroid index.
    pub fn nearest(&self, point: &[f64]) -> usize {
        nearest(&self.centroids, point).0
    }

    pub fn assign(&self, points: &Tensor) -> Vec<usize> {
        (0..points.shape()[0]).map(|i| self.nearest(points.row(i))).collect()
    }
}

/// Lloyd's algorithm from k-means++ seeding. Stops when no centroid moves
/// more than [`SHIFT_TOLERANCE`] or after [`MAX_ITERATIONS`]. A cluster that
/// empties is reseeded at the point farthest from its own centroid.
pub fn kmeans_fit(features: &Tensor, k: usize, rng: &mut Rng) -> Result<KMeansModel> {
    let (n, d) = features.dims2()?;
    if k == 0 || n < k {
        return Err(structural!("k-means with k = {k} needs at least k samples, got {n}"));
    }
    if !features.is_finite() {
        return Err(Error::Numeric("k-means on non-finite features".into()));
    }
    let mut centroids = plus_plus_seeds(features, k, rng);
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        let (assignments, inertia) = assign_all(features, &centroids);
        history.push(inertia);
        iterations += 1;

        let mut sums = vec![0.0; k * d];
        let mut counts = vec![0usize; k];
        for (i, &c) in assignments.iter().enumerate() {
            counts[c] += 1;
            for (s, x) in sums[c * d..(c + 1) * d].iter_mut().zip(features.row(i)) {
                *s += x;
            }
        }
        let mut next = centroids.clone();
        let mut taken = vec![false; n];
        for c in 0..k {
            if counts[c] > 0 {
                let row = &mut next.data_mut()[c * d..(c + 1) * d];
                for (r, s) in row.iter_mut().zip(&sums[c * d..(c + 1) * d]) {
                    *r = s / counts[c] as f64;
                }
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = farthest_point(features, &centroids, &assignments, &taken);
                taken[far] = true;
                next.data_mut()[c * d..(c + 1) * d].copy_from_slice(features.row(far));
            }
        }
        let shift = (0..k)
            .map(|c| sq_dist(centroids.row(c), next.row(c)).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        if shift < SHIFT_TOLERANCE || iterations >= MAX_ITERATIONS {
            break;
        }
    }
    let (assignments, inertia) = assign_all(features, &centroids);
    Ok(KMeansModel {
        centroids,
        assignments,
        iterations,
        inertia,
        inertia_history: history,
    })
}

fn plus_plus_seeds(features: &Tensor, k: usize, rng: &mut Rng) -> Tensor {
    let (n, d) = (features.shape()[0], features.shape()[1]);
    let mut chosen = vec![rng.random_range(0..n)];
    let mut best: Vec<f64> = (0..n).map(|i| sq_dist(features.row(i), features.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = best.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in best.iter().enumerate() {
                if target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            // Fewer distinct points than k: fall back to any unused index.
            let unused: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            unused[rng.random_range(0..unused.len())]
        };
        chosen.push(next);
        for (i, b) in best.iter_mut().enumerate() {
            *b = b.min(sq_dist(features.row(i), features.row(next)));
        }
    }
    let mut data = Vec::with_capacity(k * d);
    for &c in &chosen {
        data.extend_from_slice(features.row(c));
    }
    Tensor::new([k, d], data).expect("sized")
}

fn assign_all(features: &Tensor, centroids: &Tensor) -> (Vec<usize>, f64) {
    let n = features.shape()[0];
    let mut inertia = 0.0;
    let assignments = (0..n)
        .map(|i| {
            let (c, dist) = nearest(centroids, features.row(i));
            inertia += dist;
            c
        })
        .collect();
    (assignments, inertia)
}

fn farthest_point(features: &Tensor, centroids: &Tensor, assignments: &[usize], taken: &[bool]) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, &c) in assignments.iter().enumerate() {
        if taken[i] {
            continue;
        }
        let dist = sq_dist(features.row(i), centroids.row(c));
        if dist > best.1 {
            best = (i, dist);
        }
    }
    best.0
}

fn nearest(centroids: &Tensor, point: &[f64]) -> (usize, f64) {
    let k = centroids.shape()[0];
    let mut best = (0, f64::INFINITY);
    for c in 0..k {
        let dist = sq_dist(point, centroids.row(c));
        if dist < best.1 {
            best = (c, dist);
        }
    }
    best
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::rng::stream;

    fn pts(rows: &[[f64; 2]]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn two_obvious_clusters() {
        let x = pts(&[[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]]);
        let m = kmeans_fit(&x, 2, &mut stream(1, 0)).unwrap();
        let mut cents: Vec<Vec<f64>> = (0..2).map(|c| m.centroids.row(c).to_vec()).collect();
        cents.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(cents, vec![vec![0.0, 0.5], vec![10.0, 0.5]]);
        assert_eq!(m.inertia, 1.0);
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let x = pts(&[[1.0, 2.0], [3.0, -2.0], [5.0, 3.0]]);
        let m = kmeans_fit(&x, 1, &mut stream(0, 0)).unwrap();
        assert_eq!(m.centroids.row(0), &[3.0, 1.0]);
    }

    #[test]
    fn too_few_samples() {
        let x = pts(&[[1.0, 2.0]]);
        assert!(matches!(kmeans_fit(&x, 2, &mut stream(0, 0)), Err(Error::Structural(_))));
    }

    #[test]
    fn duplicate_points_still_fill_every_centroid() {
        let x = pts(&[[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]]);
        let m = kmeans_fit(&x, 3, &mut stream(0, 0)).unwrap();
        assert_eq!(m.k(), 3);
        assert_eq!(m.inertia, 0.0);
    }

    #[test]
    fn equidistant_point_goes_to_lowest_index() {
        let m = KMeansModel {
            centroids: pts(&[[-1.0, 0.0], [1.0, 0.0]]),
            assignments: vec![],
            iterations: 0,
            inertia: 0.0,
            inertia_history: vec![],
        };
        assert_eq!(m.nearest(&[0.0, 5.0]), 0);
    }

    proptest! {
        #[test]
        fn inertia_never_increases_and_assignment_is_idempotent(
            raw in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 6..60),
            k in 1usize..5,
            seed in 0u64..1000,
        ) {
            let rows: Vec<[f64; 2]> = raw.into_iter().map(|(a, b)| [a, b]).collect();
            let x = pts(&rows);
            let m = kmeans_fit(&x, k, &mut stream(seed, 0)).unwrap();
            for w in m.inertia_history.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9, "{:?}", m.inertia_history);
            }
            prop_assert_eq!(m.assign(&x), m.assignments.clone());
            prop_assert!(m.iterations <= MAX_ITERATIONS);
        }
    }
}
