//! Weighted summary statistics, correlations and ranks.
//!
//! Weights are frequency weights throughout: a weight of 3 behaves like three
//! copies of the observation.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

pub fn mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    Some(xs.iter().sum::<f64>() / xs.len() as f64)
}

pub fn weighted_mean(xs: &[f64], ws: &[f64]) -> Option<f64> {
    assert_eq!(xs.len(), ws.len(), "values and weights differ in length");
    let total: f64 = ws.iter().sum();
    if total <= 0.0 {
        return None;
    }
    Some(xs.iter().zip(ws).map(|(x, w)| x * w).sum::<f64>() / total)
}

/// Plain Pearson correlation. Zero variance on either side gives 0.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    assert_eq!(xs.len(), ys.len(), "series differ in length");
    if xs.len() < 2 {
        return None;
    }
    let mx = mean(xs)?;
    let my = mean(ys)?;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Some(0.0);
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

pub fn weighted_pearson(xs: &[f64], ys: &[f64], ws: &[f64]) -> Option<f64> {
    assert_eq!(xs.len(), ys.len(), "series differ in length");
    if ws.iter().filter(|w| **w > 0.0).count() < 2 {
        return None;
    }
    let mx = weighted_mean(xs, ws)?;
    let my = weighted_mean(ys, ws)?;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for ((x, y), w) in xs.iter().zip(ys).zip(ws) {
        let (dx, dy) = (x - mx, y - my);
        sxy += w * dx * dy;
        sxx += w * dx * dx;
        syy += w * dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Some(0.0);
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let shared = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = shared;
        }
        i = j + 1;
    }
    ranks
}

pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    pearson(&average_ranks(xs), &average_ranks(ys))
}

/// Rank percentiles in [0, 1]: the lowest value maps to 0 and the highest to 1.
pub fn rank_percentiles(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    if n == 1 {
        return vec![0.5];
    }
    average_ranks(xs).into_iter().map(|r| (r - 1.0) / (n - 1) as f64).collect()
}

/// Weighted mean and unbiased variance under frequency weights.
fn weighted_moments(xs: &[f64], ws: &[f64]) -> Option<(f64, f64, f64)> {
    let n: f64 = ws.iter().sum();
    if n <= 1.0 {
        return None;
    }
    let m = weighted_mean(xs, ws)?;
    if xs.iter().all(|x| *x == xs[0]) {
        return Some((n, xs[0], 0.0));
    }
    let ss: f64 = xs.iter().zip(ws).map(|(x, w)| w * (x - m) * (x - m)).sum();
    Some((n, m, ss / (n - 1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub mean_a: f64,
    pub mean_b: f64,
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
}

/// Two-sample t-test with unequal variances and frequency weights.
pub fn welch_weighted_ttest(xa: &[f64], wa: &[f64], xb: &[f64], wb: &[f64]) -> Option<TTest> {
    let (na, ma, va) = weighted_moments(xa, wa)?;
    let (nb, mb, vb) = weighted_moments(xb, wb)?;
    let (qa, qb) = (va / na, vb / nb);
    let se2 = qa + qb;
    if se2 <= 0.0 {
        return None;
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).ok()?;
    let p_value = (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0);
    Some(TTest { mean_a: ma, mean_b: mb, t, df, p_value })
}

/// Assigns each observation to one of `bins` equal-weight quantile bins of
/// `xs`, using the midpoint of its weight in the cumulative distribution.
pub fn weighted_quantile_bins(xs: &[f64], ws: &[f64], bins: usize) -> Vec<usize> {
    let total: f64 = ws.iter().sum();
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    let mut out = vec![0; xs.len()];
    let mut before = 0.0;
    for i in order {
        let mid = (before + ws[i] / 2.0) / total;
        out[i] = ((mid * bins as f64).floor() as usize).min(bins - 1);
        before += ws[i];
    }
    out
}

/// Weighted quantile by the inverse empirical CDF: the smallest value whose
/// cumulative weight reaches `q` of the total.
pub fn weighted_quantile(xs: &[f64], ws: &[f64], q: f64) -> Option<f64> {
    let total: f64 = ws.iter().sum();
    if xs.is_empty() || total <= 0.0 {
        return None;
    }
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap_or(Ordering::Equal));
    let mut cum = 0.0;
    for &i in &order {
        cum += ws[i];
        if cum >= q * total - 1e-12 * total {
            return Some(xs[i]);
        }
    }
    order.last().map(|&i| xs[i])
}

/// Five-number summary used for box statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

pub fn weighted_box(xs: &[f64], ws: &[f64]) -> Option<BoxStats> {
    Some(BoxStats {
        min: xs.iter().copied().fold(f64::INFINITY, f64::min),
        q1: weighted_quantile(xs, ws, 0.25)?,
        median: weighted_quantile(xs, ws, 0.5)?,
        q3: weighted_quantile(xs, ws, 0.75)?,
        max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean: weighted_mean(xs, ws)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn ranks_share_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
        assert_eq!(rank_percentiles(&[3.0, 1.0, 2.0]), vec![1.0, 0.0, 0.5]);
    }

    #[test]
    fn pearson_edge_cases() {
        assert_abs_diff_eq!(pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(pearson(&[1.0, 1.0, 1.0], &[2.0, 4.0, 6.0]), Some(0.0));
        assert_eq!(pearson(&[1.0], &[2.0]), None);
        assert_abs_diff_eq!(weighted_pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0], &[1.0, 5.0, 2.0]).unwrap(), -1.0);
    }

    #[test]
    fn weights_act_as_copies() {
        let r_w = weighted_pearson(&[1.0, 2.0, 4.0], &[1.0, 3.0, 2.0], &[2.0, 1.0, 1.0]).unwrap();
        let r_c = pearson(&[1.0, 1.0, 2.0, 4.0], &[1.0, 1.0, 3.0, 2.0]).unwrap();
        assert_abs_diff_eq!(r_w, r_c, epsilon = 1e-12);
    }

    #[test]
    fn welch_on_six_points() {
        // Group a: values 1,2,3 weights 1,2,1. Group b: values 4,6 weights 1,1 and 5 weight 2.
        let t = welch_weighted_ttest(&[1.0, 2.0, 3.0], &[1.0, 2.0, 1.0], &[4.0, 5.0, 6.0], &[1.0, 2.0, 1.0]).unwrap();
        // Both groups: n=4, variance = (1+0+1)/3 = 2/3, means 2 and 5.
        let q: f64 = (2.0 / 3.0) / 4.0;
        assert_abs_diff_eq!(t.t, -3.0 / (2.0 * q).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(t.df, 6.0, epsilon = 1e-12);
        // t = -sqrt(27) = -5.196..., two-sided p with 6 df is about 0.0020.
        assert!(t.p_value > 0.0019 && t.p_value < 0.0021, "{}", t.p_value);
    }

    #[test]
    fn quantile_bins_by_weight() {
        let bins = weighted_quantile_bins(&[5.0, 1.0, 3.0, 2.0], &[1.0, 1.0, 1.0, 1.0], 4);
        assert_eq!(bins, vec![3, 0, 2, 1]);
        let heavy = weighted_quantile_bins(&[1.0, 2.0], &[3.0, 1.0], 2);
        assert_eq!(heavy, vec![0, 1]);
        assert_eq!(weighted_quantile(&[1.0, 2.0, 3.0], &[1.0, 1.0, 2.0], 0.5), Some(2.0));
    }

    proptest! {
        #[test]
        fn equal_weights_match_unweighted(pairs in proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 3..40),
                                          w in 0.1f64..100.0) {
            let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let ws = vec![w; xs.len()];
            let a = weighted_pearson(&xs, &ys, &ws).unwrap();
            let b = pearson(&xs, &ys).unwrap();
            prop_assert!((a - b).abs() <= 1e-12);
        }

        #[test]
        fn spearman_is_bounded_and_symmetric(xs in proptest::collection::vec(-10f64..10.0, 3..30)) {
            let ys: Vec<f64> = xs.iter().map(|x| x * x).collect();
            let a = spearman(&xs, &ys).unwrap();
            let b = spearman(&ys, &xs).unwrap();
            prop_assert!((-1.0..=1.0).contains(&a));
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
