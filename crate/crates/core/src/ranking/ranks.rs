use crate::error::{structural, Error, Result};

/// Exact normalized ranks in descending order: the largest score gets 0, the
/// smallest gets 1, and equal scores are ordered by ascending index.
pub fn true_ranks(scores: &[f64]) -> Result<Vec<f64>> {
    let n = scores.len();
    if n < 2 {
        return Err(structural!("ranking needs at least 2 scores, got {n}"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numeric("ranking a non-finite score".into()));
    }
    let order = descending_order(scores);
    let mut ranks = vec![0.0; n];
    let denom = (n - 1) as f64;
    for (pos, &i) in order.iter().enumerate() {
        ranks[i] = pos as f64 / denom;
    }
    Ok(ranks)
}

/// Indices sorted by descending score, stable on ties.
pub(crate) fn descending_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// Spearman rank correlation (Pearson correlation of average ranks).
/// Returns 0 when either side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(structural!("spearman needs two equal-length vectors of length >= 2"));
    }
    Ok(pearson(&average_ranks(a), &average_ranks(b)))
}

fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
    let mut ranks = vec![0.0; x.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && x[order[end]] == x[order[start]] {
            end += 1;
        }
        let avg = (start + end - 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    /// Independent oracle: count strictly larger scores plus earlier equal ones.
    fn counting_ranks(s: &[f64]) -> Vec<f64> {
        let n = s.len();
        (0..n)
            .map(|i| {
                let above = (0..n).filter(|&j| s[j] > s[i] || (s[j] == s[i] && j < i)).count();
                above as f64 / (n - 1) as f64
            })
            .collect()
    }

    #[test]
    fn small_examples() {
        assert_eq!(true_ranks(&[0.3, 0.9, 0.1]).unwrap(), vec![0.5, 0.0, 1.0]);
        assert_eq!(true_ranks(&[5.0, 5.0]).unwrap(), vec![0.0, 1.0]);
        assert_eq!(true_ranks(&[4.0, 3.0, 2.0, 1.0]).unwrap(), vec![0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]);
        assert!(true_ranks(&[1.0]).is_err());
    }

    #[test]
    fn spearman_extremes() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert!((spearman(&a, &[10.0, 20.0, 30.0, 40.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&a, &[4.0, 3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(spearman(&a, &[1.0; 4]).unwrap(), 0.0);
    }

    proptest! {
        #[test]
        fn matches_counting_oracle(s in prop::collection::vec(-5i32..5, 2..20)) {
            let s: Vec<f64> = s.into_iter().map(f64::from).collect();
            prop_assert_eq!(true_ranks(&s).unwrap(), counting_ranks(&s));
        }

        #[test]
        fn scaled_ranks_are_a_permutation(s in prop::collection::vec(-1e3f64..1e3, 2..40)) {
            let n = s.len();
            let mut scaled: Vec<usize> = true_ranks(&s).unwrap()
                .into_iter()
                .map(|r| (r * (n - 1) as f64).round() as usize)
                .collect();
            scaled.sort_unstable();
            prop_assert_eq!(scaled, (0..n).collect::<Vec<_>>());
        }

        #[test]
        fn invariant_under_increasing_maps(s in prop::collection::vec(-3f64..3.0, 2..30)) {
            let base = true_ranks(&s).unwrap();
            let affine: Vec<f64> = s.iter().map(|x| 2.0 * x + 1.0).collect();
            let exp: Vec<f64> = s.iter().map(|x| x.exp()).collect();
            prop_assert_eq!(&base, &true_ranks(&affine).unwrap());
            prop_assert_eq!(&base, &true_ranks(&exp).unwrap());
        }
    }
}
