//! Paired significance testing and improvement summaries.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Largest sample size for which the null distribution is enumerated exactly.
pub const EXACT_MAX_N: usize = 20;

/// One standard-vs-MTS comparison cell, accuracies in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedCell {
    pub dataset: String,
    pub arch: String,
    pub standard: f64,
    pub mts: f64,
}

impl PairedCell {
    pub fn delta(&self) -> f64 {
        self.mts - self.standard
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WilcoxonMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// `min(W⁺, W⁻)`.
    pub statistic: f64,
    pub w_plus: f64,
    pub w_minus: f64,
    /// Pairs remaining after zero differences are dropped.
    pub n: usize,
    pub p_value: f64,
    pub method: WilcoxonMethod,
    /// Every difference was zero; `p_value` is 1.
    pub degenerate: bool,
}

/// Average ranks (1-based) of `values`; entries equal up to a relative
/// 1e-12 share their mean rank. Returns the ranks and the tie group sizes.
fn average_ranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks = vec![0.0; values.len()];
    let mut groups = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        let v = values[order[i]];
        while j < order.len() && (values[order[j]] - v).abs() <= 1e-12 * v.abs().max(1.0) {
            j += 1;
        }
        let avg = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = avg;
        }
        groups.push(j - i);
        i = j;
    }
    (ranks, groups)
}

/// Two-sided Wilcoxon signed-rank test on the differences `mts − standard`.
/// Exact for `n ≤ 20`, normal approximation with continuity and tie
/// correction above.
pub fn wilcoxon_signed_rank(differences: &[f64]) -> Result<WilcoxonResult> {
    let n = differences.iter().filter(|d| **d != 0.0).count();
    let method = if n <= EXACT_MAX_N {
        WilcoxonMethod::Exact
    } else {
        WilcoxonMethod::Normal
    };
    wilcoxon_with_method(differences, method)
}

pub fn wilcoxon_with_method(differences: &[f64], method: WilcoxonMethod) -> Result<WilcoxonResult> {
    if differences.is_empty() {
        return Err(Error::Data("Wilcoxon test needs at least one pair".into()));
    }
    if let Some(bad) = differences.iter().find(|d| !d.is_finite()) {
        return Err(Error::Data(format!("non-finite difference {bad}")));
    }
    let nonzero: Vec<f64> = differences.iter().copied().filter(|d| *d != 0.0).collect();
    let n = nonzero.len();
    if n == 0 {
        return Ok(WilcoxonResult {
            statistic: 0.0,
            w_plus: 0.0,
            w_minus: 0.0,
            n: 0,
            p_value: 1.0,
            method,
            degenerate: true,
        });
    }
    let abs: Vec<f64> = nonzero.iter().map(|d| d.abs()).collect();
    let (ranks, groups) = average_ranks(&abs);
    let w_plus: f64 = nonzero.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let w_minus = total - w_plus;
    let p_value = match method {
        WilcoxonMethod::Exact => {
            if n > 62 {
                return Err(Error::Parameter(format!("exact enumeration infeasible for n = {n}")));
            }
            exact_p(&ranks, w_plus)
        }
        WilcoxonMethod::Normal => normal_p(n, &groups, w_plus),
    };
    Ok(WilcoxonResult {
        statistic: w_plus.min(w_minus),
        w_plus,
        w_minus,
        n,
        p_value,
        method,
        degenerate: false,
    })
}

/// P(|W⁺ − E W⁺| ≥ |w − E W⁺|) under the null where every sign is an
/// independent fair coin. Counts subset sums of doubled ranks, which are
/// integers even with averaged ties.
fn exact_p(ranks: &[f64], w_plus: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0.0f64; total + 1];
    counts[0] = 1.0;
    for &r in &doubled {
        for s in (r..=total).rev() {
            counts[s] += counts[s - r];
        }
    }
    let observed = ((2.0 * 2.0 * w_plus).round() as i64 - total as i64).abs();
    let extreme: f64 = counts
        .iter()
        .enumerate()
        .filter(|(s, _)| (2 * *s as i64 - total as i64).abs() >= observed)
        .map(|(_, c)| c)
        .sum();
    (extreme / 2f64.powi(ranks.len() as i32)).min(1.0)
}

fn normal_p(n: usize, groups: &[usize], w_plus: f64) -> f64 {
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let ties: f64 = groups.iter().map(|&t| (t * t * t - t) as f64).sum();
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - ties / 48.0;
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let phi = Normal::new(0.0, 1.0).unwrap().cdf(z);
    (2.0 * (1.0 - phi)).clamp(f64::MIN_POSITIVE, 1.0)
}

pub fn wilcoxon_cells(cells: &[PairedCell]) -> Result<WilcoxonResult> {
    wilcoxon_signed_rank(&cells.iter().map(PairedCell::delta).collect::<Vec<_>>())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementSummary {
    pub mean: f64,
    /// Sample standard deviation (divides by `n − 1`; 0 for a single pair).
    pub std: f64,
    pub max: f64,
    pub per_dataset: Vec<(String, f64)>,
}

/// Deltas `mts − standard` in percentage points.
pub fn improvement_summary(cells: &[PairedCell]) -> Result<ImprovementSummary> {
    if cells.is_empty() {
        return Err(Error::Data("improvement summary needs at least one pair".into()));
    }
    let deltas: Vec<f64> = cells.iter().map(PairedCell::delta).collect();
    let n = deltas.len() as f64;
    let mean = deltas.iter().sum::<f64>() / n;
    let std = if deltas.len() > 1 {
        (deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let max = deltas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut per_dataset: Vec<(String, f64, usize)> = Vec::new();
    for c in cells {
        match per_dataset.iter_mut().find(|(d, _, _)| *d == c.dataset) {
            Some(e) => {
                e.1 += c.delta();
                e.2 += 1;
            }
            None => per_dataset.push((c.dataset.clone(), c.delta(), 1)),
        }
    }
    Ok(ImprovementSummary {
        mean,
        std,
        max,
        per_dataset: per_dataset.into_iter().map(|(d, s, k)| (d, s / k as f64)).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub standard_secs_per_epoch: f64,
    pub mts_secs_per_epoch: f64,
    /// MTS over standard.
    pub ratio: f64,
}

pub fn timing_summary(standard: &[f64], mts: &[f64]) -> Result<TimingSummary> {
    if standard.is_empty() || mts.is_empty() {
        return Err(Error::Data("timing summary needs epochs of both types".into()));
    }
    let s = standard.iter().sum::<f64>() / standard.len() as f64;
    let m = mts.iter().sum::<f64>() / mts.len() as f64;
    Ok(TimingSummary {
        standard_secs_per_epoch: s,
        mts_secs_per_epoch: m,
        ratio: m / s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Walks all 2ⁿ sign assignments.
    fn brute_p(d: &[f64]) -> f64 {
        let nz: Vec<f64> = d.iter().copied().filter(|x| *x != 0.0).collect();
        let (ranks, _) = average_ranks(&nz.iter().map(|x| x.abs()).collect::<Vec<_>>());
        let n = nz.len();
        let mean = ranks.iter().sum::<f64>() / 2.0;
        let obs: f64 = nz.iter().zip(&ranks).filter(|(x, _)| **x > 0.0).map(|(_, r)| r).sum();
        let mut hits = 0u64;
        for mask in 0u64..(1 << n) {
            let w: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
            if (w - mean).abs() >= (obs - mean).abs() - 1e-9 {
                hits += 1;
            }
        }
        hits as f64 / (1u64 << n) as f64
    }

    #[test]
    fn all_positive_eight() {
        let r = wilcoxon_signed_rank(&[1., 2., 3., 4., 5., 6., 7., 8.]).unwrap();
        assert_eq!(r.p_value, 0.0078125);
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.method, WilcoxonMethod::Exact);
    }

    #[test]
    fn symmetric_differences() {
        let r = wilcoxon_signed_rank(&[1., -1., 2., -2., 3., -3.]).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.w_plus, r.w_minus);
        assert_eq!(r.w_plus, 6.0 * 7.0 / 4.0);
    }

    #[test]
    fn all_zero_is_degenerate() {
        let r = wilcoxon_signed_rank(&[0., 0., 0.]).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.p_value, 1.0);
        assert!(wilcoxon_signed_rank(&[]).is_err());
    }

    #[test]
    fn exact_matches_enumeration_up_to_ten() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..=10 {
            for _ in 0..20 {
                // small integer grid provokes ties and zeros
                let d: Vec<f64> = (0..n).map(|_| rng.gen_range(-4i32..=4) as f64 * 0.5).collect();
                if d.iter().all(|x| *x == 0.0) {
                    continue;
                }
                let r = wilcoxon_signed_rank(&d).unwrap();
                assert!((r.p_value - brute_p(&d)).abs() < 1e-12, "{d:?}");
            }
        }
    }

    #[test]
    fn exact_and_normal_agree_at_twenty() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let shift = rng.gen_range(-0.5..0.5);
            let d: Vec<f64> = (0..20).map(|_| rng.gen_range(-1.0..1.0) + shift).collect();
            let e = wilcoxon_with_method(&d, WilcoxonMethod::Exact).unwrap();
            let a = wilcoxon_with_method(&d, WilcoxonMethod::Normal).unwrap();
            assert!((e.p_value - a.p_value).abs() < 0.01, "{} vs {}", e.p_value, a.p_value);
        }
    }

    #[test]
    fn summaries() {
        let cell = |d: &str, s: f64, m: f64| PairedCell {
            dataset: d.into(),
            arch: "A1".into(),
            standard: s,
            mts: m,
        };
        let one = improvement_summary(&[cell("x", 40.0, 45.0)]).unwrap();
        assert_eq!((one.mean, one.max, one.std), (5.0, 5.0, 0.0));
        let same = improvement_summary(&[cell("x", 40.0, 40.0), cell("y", 50.0, 50.0)]).unwrap();
        assert_eq!((same.mean, same.max, same.std), (0.0, 0.0, 0.0));
        assert_eq!(same.per_dataset, vec![("x".into(), 0.0), ("y".into(), 0.0)]);
        let t = timing_summary(&[1.0, 1.0], &[1.3, 1.3]).unwrap();
        assert!((t.ratio - 1.3).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn p_in_unit_interval_and_scale_invariant(d in proptest::collection::vec(-10.0f64..10.0, 1..15), k in 0.1f64..50.0) {
            prop_assume!(d.iter().any(|x| *x != 0.0));
            let r = wilcoxon_signed_rank(&d).unwrap();
            prop_assert!(r.p_value > 0.0 && r.p_value <= 1.0);
            let scaled: Vec<f64> = d.iter().map(|x| x * k).collect();
            let r2 = wilcoxon_signed_rank(&scaled).unwrap();
            prop_assert!((r.p_value - r2.p_value).abs() < 1e-12);
        }
    }
}
