//! Exact Wilcoxon signed-rank test and a Kolmogorov-Smirnov check for
//! p-values of discrete tests.

use std::io::Read;

use crate::error::StatsError;

const MAX_PAIRS: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct WilcoxonResult {
    pub n: usize,
    /// Sum of the ranks of positive differences.
    pub w_plus: u64,
    /// P(X >= w_plus) under the null hypothesis.
    pub p_value: f64,
    /// Rank of every difference, negative for negative differences.
    pub signed_ranks: Vec<i64>,
}

/// counts[s] = number of sign patterns over ranks 1..=n with positive-rank
/// sum s.
pub fn null_counts(n: usize) -> Result<Vec<u128>, StatsError> {
    if n > MAX_PAIRS {
        return Err(StatsError::TooManyPairs(n));
    }
    let max = n * (n + 1) / 2;
    let mut counts = vec![0u128; max + 1];
    counts[0] = 1;
    for r in 1..=n {
        for s in (r..=r * (r + 1) / 2).rev() {
            counts[s] += counts[s - r];
        }
    }
    Ok(counts)
}

/// P_n(X >= k).
pub fn wilcoxon_exact_tail(n: usize, k: u64) -> Result<f64, StatsError> {
    let max = (n * (n + 1) / 2) as u64;
    if k > max {
        return Err(StatsError::RankSumOutOfRange { k, max });
    }
    let counts = null_counts(n)?;
    let tail: u128 = counts[k as usize..].iter().sum();
    Ok(tail as f64 / 2f64.powi(n as i32))
}

pub fn wilcoxon_signed_rank(differences: &[f64]) -> Result<WilcoxonResult, StatsError> {
    let n = differences.len();
    if n == 0 {
        return Err(StatsError::Empty);
    }
    if n > MAX_PAIRS {
        return Err(StatsError::TooManyPairs(n));
    }
    if let Some(i) = differences.iter().position(|d| !d.is_finite()) {
        return Err(StatsError::NonFinite(i));
    }
    if let Some(i) = differences.iter().position(|&d| d == 0.0) {
        return Err(StatsError::ZeroDifference(i));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| differences[a].abs().total_cmp(&differences[b].abs()));
    for w in order.windows(2) {
        if differences[w[0]].abs() == differences[w[1]].abs() {
            return Err(StatsError::TiedDifferences(w[0], w[1]));
        }
    }
    let mut signed_ranks = vec![0i64; n];
    let mut w_plus = 0u64;
    for (rank0, &i) in order.iter().enumerate() {
        let rank = rank0 as i64 + 1;
        if differences[i] > 0.0 {
            signed_ranks[i] = rank;
            w_plus += rank as u64;
        } else {
            signed_ranks[i] = -rank;
        }
    }
    Ok(WilcoxonResult {
        n,
        w_plus,
        p_value: wilcoxon_exact_tail(n, w_plus)?,
        signed_ranks,
    })
}

/// Reads the `difference` column of a CSV file.
pub fn read_differences<R: Read>(input: R) -> crate::Result<Vec<f64>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let headers = r.headers()?.clone();
    let col = headers
        .iter()
        .position(|h| h.trim() == "difference")
        .ok_or_else(|| crate::Error::Dimension("no difference column".into()))?;
    let mut out = Vec::new();
    for row in r.records() {
        let row = row?;
        let cell = row.get(col).unwrap_or("").trim();
        out.push(
            cell.parse()
                .map_err(|_| crate::Error::Dimension(format!("bad difference {cell:?}")))?,
        );
    }
    Ok(out)
}

/// Null distribution of the exact one-sided p-value: the attainable
/// p-values `P(X >= k)` in increasing order, each with its probability.
pub fn p_value_null(n: usize) -> Result<Vec<(f64, f64)>, StatsError> {
    let counts = null_counts(n)?;
    let total = 2f64.powi(n as i32);
    let mut out = Vec::with_capacity(counts.len());
    let mut tail: u128 = 0;
    for k in (0..counts.len()).rev() {
        tail += counts[k];
        if counts[k] > 0 {
            out.push((tail as f64 / total, counts[k] as f64 / total));
        }
    }
    Ok(out)
}

/// Kolmogorov-Smirnov distance between the empirical distribution of
/// `samples` and the null distribution of exact Wilcoxon p-values for `n`
/// pairs. Both CDFs are step functions, so comparing at the atoms (and
/// just below them) gives the supremum.
pub fn ks_distance_discrete(samples: &[f64], n: usize) -> Result<f64, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::Empty);
    }
    let null = p_value_null(n)?;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() as f64;
    let tol = 1e-12;
    let emp = |x: f64, strict: bool| {
        let c = if strict {
            sorted.partition_point(|&s| s < x - tol)
        } else {
            sorted.partition_point(|&s| s <= x + tol)
        };
        c as f64 / m
    };
    let mut d: f64 = 0.0;
    let mut cdf = 0.0;
    for &(p, mass) in &null {
        d = d.max((emp(p, true) - cdf).abs());
        cdf += mass;
        d = d.max((emp(p, false) - cdf).abs());
    }
    Ok(d)
}

/// Asymptotic Kolmogorov-Smirnov critical value at the 1% level.
pub fn ks_critical_1pct(m: usize) -> f64 {
    1.628 / (m as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(name: &str) -> Vec<f64> {
        let path = format!("{}/../../fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
        read_differences(std::fs::File::open(path).unwrap()).unwrap()
    }

    #[test]
    fn shipped_tables() {
        let r3 = wilcoxon_signed_rank(&fixture("table3.csv")).unwrap();
        assert_eq!(r3.w_plus, 318);
        assert!((r3.p_value - 0.0402).abs() < 5e-4);
        let r4 = wilcoxon_signed_rank(&fixture("table4.csv")).unwrap();
        assert_eq!(r4.w_plus, 271);
        assert!((r4.p_value - 0.22).abs() < 5e-3);
    }

    #[test]
    fn signed_ranks_match_table() {
        let path = format!("{}/../../fixtures/table3.csv", env!("CARGO_MANIFEST_DIR"));
        let mut r = csv::Reader::from_path(path).unwrap();
        let ranks: Vec<i64> = r.records().map(|x| x.unwrap()[4].parse().unwrap()).collect();
        let res = wilcoxon_signed_rank(&fixture("table3.csv")).unwrap();
        assert_eq!(res.signed_ranks, ranks);
    }

    #[test]
    fn small_cases() {
        let r = wilcoxon_signed_rank(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.w_plus, 6);
        assert_eq!(r.p_value, 0.125);
        assert_eq!(wilcoxon_exact_tail(2, 3).unwrap(), 0.25);
        for n in 0..20 {
            assert_eq!(wilcoxon_exact_tail(n, 0).unwrap(), 1.0);
        }
        assert!(matches!(wilcoxon_exact_tail(3, 7), Err(StatsError::RankSumOutOfRange { .. })));
    }

    #[test]
    fn rejects_ties_and_zeros() {
        assert!(matches!(wilcoxon_signed_rank(&[1.0, -1.0]), Err(StatsError::TiedDifferences(..))));
        assert!(matches!(wilcoxon_signed_rank(&[1.0, 0.0]), Err(StatsError::ZeroDifference(1))));
        assert!(matches!(wilcoxon_signed_rank(&[]), Err(StatsError::Empty)));
        assert!(matches!(wilcoxon_signed_rank(&[f64::NAN]), Err(StatsError::NonFinite(0))));
        assert!(matches!(
            wilcoxon_signed_rank(&vec![1.0; 65]),
            Err(StatsError::TooManyPairs(65))
        ));
    }

    #[test]
    fn dp_matches_enumeration() {
        for n in 0..=12usize {
            let counts = null_counts(n).unwrap();
            let mut brute = vec![0u128; counts.len()];
            for mask in 0u32..(1 << n) {
                let s: usize = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| i + 1).sum();
                brute[s] += 1;
            }
            assert_eq!(counts, brute);
            let total: u128 = counts.iter().sum();
            assert_eq!(total, 1u128 << n);
        }
    }

    #[test]
    fn symmetry_and_mean() {
        for n in [5usize, 12, 30, 64] {
            let counts = null_counts(n).unwrap();
            let max = n * (n + 1) / 2;
            for k in 0..=max {
                assert_eq!(counts[k], counts[max - k]);
                let upper = wilcoxon_exact_tail(n, k as u64).unwrap();
                let lower: u128 = counts[..=max - k].iter().sum();
                assert!((upper - lower as f64 / 2f64.powi(n as i32)).abs() < 1e-15);
            }
            let mean: f64 = counts
                .iter()
                .enumerate()
                .map(|(s, &c)| s as f64 * c as f64)
                .sum::<f64>()
                / 2f64.powi(n as i32);
            assert!((mean - (n * (n + 1)) as f64 / 4.0).abs() < 1e-6);
        }
    }

    #[test]
    fn gaussian_sum() {
        let d = fixture("table4.csv");
        let r = wilcoxon_signed_rank(&d).unwrap();
        let w_minus: i64 = r.signed_ranks.iter().filter(|&&x| x < 0).map(|x| -x).sum();
        assert_eq!(r.w_plus as i64 + w_minus, 30 * 31 / 2);
    }

    #[test]
    fn ks_on_exact_null_is_small() {
        // samples placed at the exact null quantiles
        let null = p_value_null(10).unwrap();
        let mut samples = Vec::new();
        for &(p, mass) in &null {
            for _ in 0..(mass * 1024.0).round() as usize {
                samples.push(p);
            }
        }
        assert!(ks_distance_discrete(&samples, 10).unwrap() < 1e-9);
        let skewed = vec![0.001; 100];
        assert!(ks_distance_discrete(&skewed, 10).unwrap() > 0.9);
    }
}
