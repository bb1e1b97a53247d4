//! Paired significance tests: two-sided Wilcoxon signed-rank, a seeded
//! paired randomization (sign-flip) test, and Holm-Bonferroni correction
//! across a family of comparisons.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::Error;

/// Sample size above which the Wilcoxon test switches from the exact
/// null distribution to the normal approximation.
pub const WILCOXON_EXACT_LIMIT: usize = 25;

/// Two-sided Wilcoxon signed-rank test on paired differences.
///
/// Zero differences are dropped and ties receive mid-ranks. Returns
/// `None` when every difference is zero (the statistic is undefined).
/// Up to [`WILCOXON_EXACT_LIMIT`] nonzero pairs the p-value comes from
/// the exact sign-flip distribution of the rank sum; beyond that from
/// the tie-corrected normal approximation with continuity correction.
pub fn wilcoxon_signed_rank(diffs: &[f64]) -> Option<f64> {
    let nonzero: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    let n = nonzero.len();
    if n == 0 {
        return None;
    }
    // Mid-ranks of |d|, doubled so they are exact integers.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by(|&a, &b| nonzero[a].abs().total_cmp(&nonzero[b].abs()));
    let mut doubled_ranks = vec![0u64; n];
    let mut tie_groups: Vec<usize> = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && nonzero[order[j]].abs() == nonzero[order[i]].abs() {
            j += 1;
        }
        // Positions i+1 ..= j carry the average rank (i+1 + j) / 2.
        let doubled = (i + 1 + j) as u64;
        for &idx in &order[i..j] {
            doubled_ranks[idx] = doubled;
        }
        tie_groups.push(j - i);
        i = j;
    }
    let w_plus_doubled: u64 = nonzero
        .iter()
        .zip(&doubled_ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| *r)
        .sum();

    if n <= WILCOXON_EXACT_LIMIT {
        Some(exact_two_sided_p(&doubled_ranks, w_plus_doubled))
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let tie_correction: f64 = tie_groups
            .iter()
            .map(|&t| {
                let t = t as f64;
                t * t * t - t
            })
            .sum::<f64>()
            / 48.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_correction;
        if var <= 0.0 {
            return Some(1.0);
        }
        let w = w_plus_doubled as f64 / 2.0;
        let centered = w - mean;
        let corrected = centered - 0.5 * centered.signum();
        let z = corrected / var.sqrt();
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        Some((2.0 * (1.0 - normal.cdf(z.abs()))).clamp(0.0, 1.0))
    }
}

/// Exact two-sided p-value by dynamic programming over the sign-flip
/// distribution of the doubled rank sum.
fn exact_two_sided_p(doubled_ranks: &[u64], w_doubled: u64) -> f64 {
    let total: u64 = doubled_ranks.iter().sum();
    let mut counts = vec![0.0f64; total as usize + 1];
    counts[0] = 1.0;
    let mut reach = 0usize;
    for &r in doubled_ranks {
        let r = r as usize;
        reach += r;
        for s in (0..=reach).rev() {
            if s >= r && counts[s - r] > 0.0 {
                counts[s] += counts[s - r];
            }
        }
    }
    let denom: f64 = counts.iter().sum();
    let w = w_doubled as usize;
    let lower: f64 = counts[..=w].iter().sum();
    let upper: f64 = counts[w..].iter().sum();
    (2.0 * (lower.min(upper)) / denom).min(1.0)
}

/// Paired randomization test: flips the sign of each difference with
/// probability 1/2, `b` times, and reports
/// `(1 + #{|mean*| >= |mean|}) / (1 + b)`.
pub fn permutation_test(diffs: &[f64], b: usize, seed: u64) -> Result<f64, Error> {
    if diffs.is_empty() {
        return Err(Error::InvalidConfig(
            "permutation test needs at least one pair".to_string(),
        ));
    }
    if b == 0 {
        return Err(Error::InvalidConfig(
            "permutation test needs at least one resample".to_string(),
        ));
    }
    let n = diffs.len() as f64;
    let observed = (diffs.iter().sum::<f64>() / n).abs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..b {
        let mut sum = 0.0;
        for &d in diffs {
            if rng.gen::<bool>() {
                sum += d;
            } else {
                sum -= d;
            }
        }
        if (sum / n).abs() >= observed {
            hits += 1;
        }
    }
    Ok((1 + hits) as f64 / (1 + b) as f64)
}

/// Holm-Bonferroni step-down correction: returns, for each input
/// p-value, whether it stays significant at family level `alpha`.
pub fn holm_bonferroni(pvalues: &[f64], alpha: f64) -> Vec<bool> {
    let m = pvalues.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_unstable_by(|&a, &b| pvalues[a].total_cmp(&pvalues[b]));
    let mut flags = vec![false; m];
    for (i, &idx) in order.iter().enumerate() {
        if pvalues[idx] <= alpha / (m - i) as f64 {
            flags[idx] = true;
        } else {
            break;
        }
    }
    flags
}

/// Wilcoxon + permutation results for one paired comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedTest {
    /// Pairs with a nonzero difference.
    pub n_effective: usize,
    pub mean_diff: f64,
    /// None when all differences are zero (test undefined, flagged).
    pub wilcoxon_p: Option<f64>,
    pub permutation_p: f64,
}

/// Runs both paired tests on `a[i] - b[i]`.
pub fn paired_comparison(
    a: &[f64],
    b: &[f64],
    permutations: usize,
    seed: u64,
) -> Result<PairedTest, Error> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} vs {} paired observations",
            a.len(),
            b.len()
        )));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n_effective = diffs.iter().filter(|d| **d != 0.0).count();
    let mean_diff = if diffs.is_empty() {
        0.0
    } else {
        diffs.iter().sum::<f64>() / diffs.len() as f64
    };
    Ok(PairedTest {
        n_effective,
        mean_diff,
        wilcoxon_p: wilcoxon_signed_rank(&diffs),
        permutation_p: permutation_test(&diffs, permutations, seed)?,
    })
}
