//! Paired Wilcoxon signed-rank test.
//!
//! Zero differences are dropped and tied absolute differences share their
//! average rank. With at most [`EXACT_LIMIT`] nonzero differences the null
//! distribution of `W+` is enumerated exactly; above that a normal
//! approximation with continuity and tie corrections is used.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

pub const EXACT_LIMIT: usize = 12;
pub const SIGNIFICANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exact,
    Normal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Sum of ranks of positive differences `a − b`.
    pub w_plus: f64,
    pub w_minus: f64,
    /// `min(W+, W−)`.
    pub statistic: f64,
    /// Number of nonzero differences.
    pub n: usize,
    /// Two-sided.
    pub p_value: f64,
    pub method: Method,
    /// All differences were zero; `p_value` is 1.
    pub degenerate: bool,
}

impl WilcoxonResult {
    pub fn significant(&self) -> bool {
        self.p_value <= SIGNIFICANCE
    }
}

/// Doubled ranks (so average ranks stay integral) and the sizes of tie groups.
fn doubled_ranks(abs: &[f64]) -> (Vec<u64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..abs.len()).collect();
    order.sort_by(|&i, &j| abs[i].total_cmp(&abs[j]));
    let mut ranks = vec![0u64; abs.len()];
    let mut ties = Vec::new();
    let mut lo = 0;
    while lo < order.len() {
        let mut hi = lo;
        while hi + 1 < order.len() && abs[order[hi + 1]] == abs[order[lo]] {
            hi += 1;
        }
        // 1-based positions lo+1 ..= hi+1 average to (lo + hi + 2) / 2.
        for &idx in &order[lo..=hi] {
            ranks[idx] = (lo + hi + 2) as u64;
        }
        ties.push(hi - lo + 1);
        lo = hi + 1;
    }
    (ranks, ties)
}

/// Two-sided exact p-value of the doubled statistic `w2` under the sign-flip null.
fn exact_p(ranks2: &[u64], w2: u64) -> f64 {
    let total: u64 = ranks2.iter().sum();
    let mut dist = vec![0.0f64; total as usize + 1];
    dist[0] = 1.0;
    for &r in ranks2 {
        let r = r as usize;
        for s in (0..dist.len()).rev() {
            let keep = dist[s] * 0.5;
            let add = if s >= r { dist[s - r] * 0.5 } else { 0.0 };
            dist[s] = keep + add;
        }
    }
    let lower: f64 = dist[..=w2 as usize].iter().sum();
    let upper: f64 = dist[w2 as usize..].iter().sum();
    (2.0 * lower.min(upper)).min(1.0)
}

fn normal_p(n: usize, w_plus: f64, ties: &[usize]) -> f64 {
    let n = n as f64;
    let mean = n * (n + 1.0) / 4.0;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term;
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
    // 2·(1 − Φ(z)) = erfc(z / √2)
    erfc(z / std::f64::consts::SQRT_2).min(1.0)
}

/// Chooses the exact null distribution for small samples, the normal
/// approximation otherwise.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    wilcoxon_with(a, b, None)
}

/// Runs the test with a forced `method`, or the automatic choice for `None`.
pub fn wilcoxon_with(a: &[f64], b: &[f64], method: Option<Method>) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::Shape("non-finite paired difference".into()));
    }
    let n = diffs.len();
    let method = method.unwrap_or(if n <= EXACT_LIMIT { Method::Exact } else { Method::Normal });
    if n == 0 {
        return Ok(WilcoxonResult {
            w_plus: 0.0,
            w_minus: 0.0,
            statistic: 0.0,
            n,
            p_value: 1.0,
            method,
            degenerate: true,
        });
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let (ranks2, ties) = doubled_ranks(&abs);
    let w2_plus: u64 = ranks2.iter().zip(&diffs).filter(|(_, d)| **d > 0.0).map(|(r, _)| r).sum();
    let total2: u64 = ranks2.iter().sum();
    let w_plus = w2_plus as f64 / 2.0;
    let w_minus = (total2 - w2_plus) as f64 / 2.0;
    let p_value = match method {
        Method::Exact => exact_p(&ranks2, w2_plus),
        Method::Normal => normal_p(n, w_plus, &ties),
    };
    Ok(WilcoxonResult {
        w_plus,
        w_minus,
        statistic: w_plus.min(w_minus),
        n,
        p_value,
        method,
        degenerate: false,
    })
}
