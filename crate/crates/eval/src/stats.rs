//! Rank tests: Wilcoxon signed-rank for paired samples and Mann-Whitney U
//! for independent ones, both two-sided.
//!
//! Ranks are kept doubled so that tie-averaged ranks stay integers and the
//! exact null distributions can be built by counting.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::EvalError;

/// Largest number of non-zero differences handled by exact enumeration.
pub const EXACT_SIGNED_RANK_MAX: usize = 25;
/// Largest pooled sample size handled exactly by [`mann_whitney_u`].
pub const EXACT_MANN_WHITNEY_MAX: usize = 40;
pub const MIN_PAIRS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    /// Normal approximation with tie and continuity corrections.
    Normal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignedRankResult {
    pub pairs: usize,
    /// Pairs with a zero difference; they are dropped before ranking.
    pub zero_differences: usize,
    pub w_plus: f64,
    pub w_minus: f64,
    pub p_value: f64,
    pub method: Method,
}

impl SignedRankResult {
    /// Every difference was zero, so the test is undefined and p = 1.
    pub fn all_zero(&self) -> bool {
        self.zero_differences == self.pairs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MannWhitneyResult {
    pub n1: usize,
    pub n2: usize,
    /// U statistic of the first sample.
    pub u: f64,
    pub p_value: f64,
    pub method: Method,
}

/// Doubled average ranks of `values` (1-based), plus the tie group sizes.
fn doubled_ranks(values: &[f64]) -> (Vec<u64>, Vec<u64>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0u64; values.len()];
    let mut ties = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end share the average (start + 1 + end) / 2
        let r2 = (start + 1 + end) as u64;
        for &i in &order[start..end] {
            ranks[i] = r2;
        }
        ties.push((end - start) as u64);
        start = end;
    }
    (ranks, ties)
}

fn normal_two_sided(deviation: f64, sd: f64) -> f64 {
    if sd <= 0.0 {
        return 1.0;
    }
    let z = ((deviation.abs() - 0.5) / sd).max(0.0);
    erfc(z / std::f64::consts::SQRT_2).min(1.0)
}

fn tie_term(ties: &[u64]) -> f64 {
    ties.iter().map(|&t| (t * t * t - t) as f64).sum()
}

/// Exact two-sided p of the signed-rank statistic: the share of the 2^m
/// sign assignments whose positive rank sum lies at least as far from its
/// mean as the observed one.
fn signed_rank_exact(ranks2: &[u64], w2_plus: u64) -> f64 {
    let total: u64 = ranks2.iter().sum();
    let mut counts = vec![0f64; total as usize + 1];
    counts[0] = 1.0;
    let mut reach = 0usize;
    for &r in ranks2 {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let dev = (2 * w2_plus as i64 - total as i64).abs();
    let extreme: f64 = counts
        .iter()
        .enumerate()
        .filter(|(s, _)| (2 * *s as i64 - total as i64).abs() >= dev)
        .map(|(_, c)| c)
        .sum();
    (extreme / 2f64.powi(ranks2.len() as i32)).min(1.0)
}

/// Wilcoxon signed-rank test on the differences `a[i] - b[i]`.
///
/// Zero differences are dropped and tied magnitudes share their average
/// rank. Up to [`EXACT_SIGNED_RANK_MAX`] remaining pairs the p-value is
/// exact; beyond that the normal approximation is used. All-zero input
/// gives p = 1.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<SignedRankResult, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch { a: a.len(), b: b.len() });
    }
    if a.len() < MIN_PAIRS {
        return Err(EvalError::TooFewPairs { found: a.len(), needed: MIN_PAIRS });
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    let pairs = a.len();
    let zero_differences = pairs - diffs.len();
    if diffs.is_empty() {
        return Ok(SignedRankResult {
            pairs,
            zero_differences,
            w_plus: 0.0,
            w_minus: 0.0,
            p_value: 1.0,
            method: Method::Exact,
        });
    }
    let magnitudes: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let (ranks2, ties) = doubled_ranks(&magnitudes);
    let w2_plus: u64 = ranks2.iter().zip(&diffs).filter(|(_, d)| **d > 0.0).map(|(r, _)| r).sum();
    let total2: u64 = ranks2.iter().sum();
    let (w_plus, w_minus) = (w2_plus as f64 / 2.0, (total2 - w2_plus) as f64 / 2.0);
    let m = diffs.len();
    let (p_value, method) = if m <= EXACT_SIGNED_RANK_MAX {
        (signed_rank_exact(&ranks2, w2_plus), Method::Exact)
    } else {
        let mf = m as f64;
        let mean = mf * (mf + 1.0) / 4.0;
        let var = mf * (mf + 1.0) * (2.0 * mf + 1.0) / 24.0 - tie_term(&ties) / 48.0;
        (normal_two_sided(w_plus - mean, var.sqrt()), Method::Normal)
    };
    Ok(SignedRankResult { pairs, zero_differences, w_plus, w_minus, p_value, method })
}

/// Mann-Whitney U test of two independent samples.
///
/// Exact (by counting rank-sum subsets under the observed tie pattern)
/// when the pooled size is at most [`EXACT_MANN_WHITNEY_MAX`]; normal
/// approximation otherwise.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitneyResult, EvalError> {
    if a.is_empty() || b.is_empty() {
        return Err(EvalError::TooFewPairs { found: a.len().min(b.len()), needed: 1 });
    }
    let (n1, n2) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks2, ties) = doubled_ranks(&pooled);
    let r2_a: u64 = ranks2[..n1].iter().sum();
    let n = n1 + n2;
    // U = R − n1(n1+1)/2, in doubled units
    let u = (r2_a - (n1 * (n1 + 1)) as u64) as f64 / 2.0;
    let mean2 = (n1 * (n + 1)) as i64;
    let (p_value, method) = if n <= EXACT_MANN_WHITNEY_MAX {
        let max_sum: usize = ranks2.iter().sum::<u64>() as usize;
        // ways[k][s]: subsets of size k with doubled rank sum s
        let mut ways = vec![vec![0f64; max_sum + 1]; n1 + 1];
        ways[0][0] = 1.0;
        for (seen, &r) in ranks2.iter().enumerate() {
            let r = r as usize;
            for k in (1..=n1.min(seen + 1)).rev() {
                let (lo, hi) = ways.split_at_mut(k);
                for s in (r..=max_sum).rev() {
                    hi[0][s] += lo[k - 1][s - r];
                }
            }
        }
        let dev = (r2_a as i64 - mean2).abs();
        let total: f64 = ways[n1].iter().sum();
        let extreme: f64 = ways[n1]
            .iter()
            .enumerate()
            .filter(|(s, _)| (*s as i64 - mean2).abs() >= dev)
            .map(|(_, c)| c)
            .sum();
        ((extreme / total).min(1.0), Method::Exact)
    } else {
        let (f1, f2, nf) = (n1 as f64, n2 as f64, n as f64);
        let var = f1 * f2 / 12.0 * ((nf + 1.0) - tie_term(&ties) / (nf * (nf - 1.0)));
        (normal_two_sided(u - f1 * f2 / 2.0, var.sqrt()), Method::Normal)
    };
    Ok(MannWhitneyResult { n1, n2, u, p_value, method })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute force over all 2^m sign flips of the non-zero differences.
    fn signed_rank_oracle(a: &[f64], b: &[f64]) -> f64 {
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
        if d.is_empty() {
            return 1.0;
        }
        let mags: Vec<f64> = d.iter().map(|x| x.abs()).collect();
        // plain average ranks, computed independently of doubled_ranks
        let rank = |v: f64| {
            let below = mags.iter().filter(|m| **m < v).count() as f64;
            let equal = mags.iter().filter(|m| **m == v).count() as f64;
            below + (equal + 1.0) / 2.0
        };
        let ranks: Vec<f64> = mags.iter().map(|m| rank(*m)).collect();
        let total: f64 = ranks.iter().sum();
        let obs: f64 = ranks.iter().zip(&d).filter(|(_, d)| **d > 0.0).map(|(r, _)| r).sum();
        let dev = (obs - total / 2.0).abs();
        let m = d.len();
        let mut hits = 0u64;
        for mask in 0u64..1 << m {
            let s: f64 = (0..m).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
            if (s - total / 2.0).abs() >= dev - 1e-9 {
                hits += 1;
            }
        }
        hits as f64 / (1u64 << m) as f64
    }

    /// Brute force over every way of choosing which pooled values form `a`.
    fn mann_whitney_oracle(a: &[f64], b: &[f64]) -> (f64, f64) {
        let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
        let n = pooled.len();
        let u_of = |first: &[f64], second: &[f64]| -> f64 {
            let mut u = 0.0;
            for x in first {
                for y in second {
                    u += if x > y { 1.0 } else if x == y { 0.5 } else { 0.0 };
                }
            }
            u
        };
        let obs = u_of(a, b);
        let mean = (a.len() * b.len()) as f64 / 2.0;
        let (mut hits, mut total) = (0u64, 0u64);
        for mask in 0u64..1 << n {
            if mask.count_ones() as usize != a.len() {
                continue;
            }
            let first: Vec<f64> = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| pooled[i]).collect();
            let second: Vec<f64> = (0..n).filter(|i| mask >> i & 1 == 0).map(|i| pooled[i]).collect();
            total += 1;
            if (u_of(&first, &second) - mean).abs() >= (obs - mean).abs() - 1e-9 {
                hits += 1;
            }
        }
        (obs, hits as f64 / total as f64)
    }

    #[test]
    fn mann_whitney_two_versus_two() {
        let r = mann_whitney_u(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert_eq!(r.u, 0.0);
        assert!((r.p_value - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.method, Method::Exact);
    }

    #[test]
    fn identical_pairs_give_p_one() {
        let a = [3.0, 1.0, 4.0, 1.0, 5.0];
        let r = wilcoxon_signed_rank(&a, &a).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert!(r.all_zero());
        assert_eq!(r.zero_differences, 5);
    }

    #[test]
    fn six_pairs_match_enumeration() {
        let a = [1.83, 0.50, 1.62, 2.48, 1.68, 1.88];
        let b = [0.878, 0.647, 0.598, 2.05, 1.06, 1.29];
        let r = wilcoxon_signed_rank(&a, &b).unwrap();
        assert_eq!(r.w_plus, 20.0);
        // only sign patterns with W+ ∈ {0, 1, 20, 21} are as extreme: 4/64
        assert!((r.p_value - 4.0 / 64.0).abs() < 1e-15);
        assert!((r.p_value - signed_rank_oracle(&a, &b)).abs() < 1e-15);
    }

    #[test]
    fn argument_errors() {
        assert!(matches!(wilcoxon_signed_rank(&[1.0; 5], &[1.0; 4]), Err(EvalError::LengthMismatch { .. })));
        assert!(matches!(wilcoxon_signed_rank(&[1.0; 4], &[2.0; 4]), Err(EvalError::TooFewPairs { .. })));
        assert!(mann_whitney_u(&[], &[1.0]).is_err());
    }

    #[test]
    fn normal_approximation_tracks_the_exact_tail() {
        // 30 pairs: compare the normal route with the exact count
        let a: Vec<f64> = (0..30).map(|i| (i as f64 * 0.37).sin() + 0.3).collect();
        let b: Vec<f64> = (0..30).map(|i| (i as f64 * 0.91).cos() * 0.5).collect();
        let r = wilcoxon_signed_rank(&a, &b).unwrap();
        assert_eq!(r.method, Method::Normal);
        let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let (ranks2, _) = doubled_ranks(&d.iter().map(|x| x.abs()).collect::<Vec<_>>());
        let w2: u64 = ranks2.iter().zip(&d).filter(|(_, d)| **d > 0.0).map(|(r, _)| r).sum();
        let exact = signed_rank_exact(&ranks2, w2);
        assert!((r.p_value - exact).abs() < 0.01, "{} vs {exact}", r.p_value);

        let big_a: Vec<f64> = (0..25).map(|i| i as f64).collect();
        let big_b: Vec<f64> = (0..25).map(|i| i as f64 + 7.5).collect();
        let mw = mann_whitney_u(&big_a, &big_b).unwrap();
        assert_eq!(mw.method, Method::Normal);
        assert!(mw.p_value < 0.05 && mw.p_value > 0.0);
    }

    fn small_values(len: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec((0i32..6).prop_map(f64::from), len)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(400))]

        #[test]
        fn signed_rank_matches_enumeration(pairs in (5usize..=8).prop_flat_map(|n| (small_values(n..=n), small_values(n..=n)))) {
            let (a, b) = pairs;
            let r = wilcoxon_signed_rank(&a, &b).unwrap();
            prop_assert_eq!(r.method, Method::Exact);
            prop_assert!((r.p_value - signed_rank_oracle(&a, &b)).abs() < 1e-12);
        }

        #[test]
        fn mann_whitney_matches_enumeration(a in small_values(1..=8), b in small_values(1..=8)) {
            let r = mann_whitney_u(&a, &b).unwrap();
            let (u, p) = mann_whitney_oracle(&a, &b);
            prop_assert_eq!(r.u, u);
            prop_assert!((r.p_value - p).abs() < 1e-12, "{} vs {}", r.p_value, p);
        }
    }
}
