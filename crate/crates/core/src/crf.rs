//! Linear-chain CRF over emission scores.
//!
//! The score of a label path `y` over `k` positions is
//! `start[y₀] + Σₜ emissions[t, yₜ] + Σₜ transitions[yₜ₋₁, yₜ] + end[yₖ₋₁]`.
//! No BIO constraints are imposed on transitions.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CrfParams {
    /// `from × to`
    pub transitions: Array2<f64>,
    pub start: Array1<f64>,
    pub end: Array1<f64>,
}

crate::impl_parameters!(CrfParams { transitions, start, end });

impl CrfParams {
    pub fn zeros(num_labels: usize) -> Self {
        CrfParams {
            transitions: Array2::zeros((num_labels, num_labels)),
            start: Array1::zeros(num_labels),
            end: Array1::zeros(num_labels),
        }
    }

    pub fn num_labels(&self) -> usize {
        self.start.len()
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Forward log-scores `α[t, j]`: log-sum over prefixes ending in `j` at `t`.
fn forward_scores(em: ArrayView2<f64>, p: &CrfParams) -> Array2<f64> {
    let (k, m) = em.dim();
    let mut alpha = Array2::zeros((k, m));
    for j in 0..m {
        alpha[[0, j]] = p.start[j] + em[[0, j]];
    }
    for t in 1..k {
        for j in 0..m {
            let prev = alpha.row(t - 1);
            alpha[[t, j]] = em[[t, j]] + log_sum_exp((0..m).map(|i| prev[i] + p.transitions[[i, j]]));
        }
    }
    alpha
}

/// Backward log-scores `β[t, i]`: log-sum over suffixes after `i` at `t`.
fn backward_scores(em: ArrayView2<f64>, p: &CrfParams) -> Array2<f64> {
    let (k, m) = em.dim();
    let mut beta = Array2::zeros((k, m));
    beta.row_mut(k - 1).assign(&p.end);
    for t in (0..k - 1).rev() {
        for i in 0..m {
            let next = beta.row(t + 1);
            beta[[t, i]] = log_sum_exp((0..m).map(|j| p.transitions[[i, j]] + em[[t + 1, j]] + next[j]));
        }
    }
    beta
}

fn check_emissions(em: ArrayView2<f64>, p: &CrfParams) {
    assert!(em.nrows() >= 1, "CRF needs at least one position");
    assert_eq!(em.ncols(), p.num_labels(), "emission width must equal label count");
}

/// log Σ_y exp(score(y)).
pub fn log_partition(em: ArrayView2<f64>, p: &CrfParams) -> f64 {
    check_emissions(em, p);
    let alpha = forward_scores(em, p);
    let last = alpha.row(em.nrows() - 1);
    log_sum_exp((0..p.num_labels()).map(|j| last[j] + p.end[j]))
}

pub fn path_score(em: ArrayView2<f64>, labels: &[usize], p: &CrfParams) -> f64 {
    let mut s = p.start[labels[0]] + p.end[labels[labels.len() - 1]];
    for (t, &y) in labels.iter().enumerate() {
        s += em[[t, y]];
        if t > 0 {
            s += p.transitions[[labels[t - 1], y]];
        }
    }
    s
}

fn check_gold(em: ArrayView2<f64>, gold: &[usize]) -> Result<()> {
    if gold.len() != em.nrows() {
        return Err(Error::LengthMismatch {
            expected: em.nrows(),
            actual: gold.len(),
        });
    }
    Ok(())
}

/// Negative log-likelihood of `gold`: `log Z − score(gold)`.
pub fn sequence_nll(em: ArrayView2<f64>, gold: &[usize], p: &CrfParams) -> Result<f64> {
    check_gold(em, gold)?;
    Ok(log_partition(em, p) - path_score(em, gold, p))
}

/// Posterior label marginals per position.
pub fn marginals(em: ArrayView2<f64>, p: &CrfParams) -> Array2<f64> {
    check_emissions(em, p);
    let alpha = forward_scores(em, p);
    let beta = backward_scores(em, p);
    let last = alpha.row(em.nrows() - 1);
    let log_z = log_sum_exp((0..p.num_labels()).map(|j| last[j] + p.end[j]));
    (&alpha + &beta).mapv(|v| (v - log_z).exp())
}

/// NLL together with its gradient with respect to emissions and every CRF parameter.
pub fn nll_with_grad(em: ArrayView2<f64>, gold: &[usize], p: &CrfParams) -> Result<(f64, Array2<f64>, CrfParams)> {
    check_gold(em, gold)?;
    check_emissions(em, p);
    let (k, m) = em.dim();
    let alpha = forward_scores(em, p);
    let beta = backward_scores(em, p);
    let last = alpha.row(k - 1);
    let log_z = log_sum_exp((0..m).map(|j| last[j] + p.end[j]));
    let nll = log_z - path_score(em, gold, p);

    let mut d_em = (&alpha + &beta).mapv(|v| (v - log_z).exp());
    let mut grads = CrfParams::zeros(m);
    grads.start.assign(&d_em.row(0));
    grads.end.assign(&d_em.row(k - 1));
    for t in 1..k {
        for i in 0..m {
            let a = alpha[[t - 1, i]];
            for j in 0..m {
                grads.transitions[[i, j]] +=
                    (a + p.transitions[[i, j]] + em[[t, j]] + beta[[t, j]] - log_z).exp();
            }
        }
    }
    for (t, &y) in gold.iter().enumerate() {
        d_em[[t, y]] -= 1.0;
        if t > 0 {
            grads.transitions[[gold[t - 1], y]] -= 1.0;
        }
    }
    grads.start[gold[0]] -= 1.0;
    grads.end[gold[k - 1]] -= 1.0;
    Ok((nll, d_em, grads))
}

/// Highest-scoring path and its score. Ties go to the lowest label id at
/// every backtracking step.
pub fn viterbi(em: ArrayView2<f64>, p: &CrfParams) -> (Vec<usize>, f64) {
    check_emissions(em, p);
    let (k, m) = em.dim();
    let mut delta = Array2::<f64>::zeros((k, m));
    let mut back = Array2::<usize>::zeros((k, m));
    for j in 0..m {
        delta[[0, j]] = p.start[j] + em[[0, j]];
    }
    for t in 1..k {
        for j in 0..m {
            let (mut best, mut arg) = (f64::NEG_INFINITY, 0);
            for i in 0..m {
                let s = delta[[t - 1, i]] + p.transitions[[i, j]];
                if s > best {
                    best = s;
                    arg = i;
                }
            }
            delta[[t, j]] = best + em[[t, j]];
            back[[t, j]] = arg;
        }
    }
    let (mut best, mut arg) = (f64::NEG_INFINITY, 0);
    for j in 0..m {
        let s = delta[[k - 1, j]] + p.end[j];
        if s > best {
            best = s;
            arg = j;
        }
    }
    let mut path = vec![0; k];
    path[k - 1] = arg;
    for t in (1..k).rev() {
        path[t - 1] = back[[t, path[t]]];
    }
    (path, best)
}

/// Per-position softmax cross-entropy, the token-level alternative to the CRF loss.
pub fn token_softmax_with_grad(em: ArrayView2<f64>, gold: &[usize]) -> Result<(f64, Array2<f64>)> {
    check_gold(em, gold)?;
    let mut grad = Array2::zeros(em.dim());
    let mut loss = 0.0;
    for (t, row) in em.rows().into_iter().enumerate() {
        let lse = log_sum_exp(row.iter().copied());
        loss += lse - row[gold[t]];
        for (j, &v) in row.iter().enumerate() {
            grad[[t, j]] = (v - lse).exp();
        }
        grad[[t, gold[t]]] -= 1.0;
    }
    Ok((loss, grad))
}

/// Per-position argmax of the emissions (lowest id on ties).
pub fn argmax_decode(em: ArrayView2<f64>) -> Vec<usize> {
    em.rows()
        .into_iter()
        .map(|row| {
            let mut arg = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[arg] {
                    arg = j;
                }
            }
            arg
        })
        .collect()
}

#[cfg(test)]
pub(crate) mod oracle {
    //! Exhaustive enumeration over all `m^k` label paths.
    use super::*;

    pub fn all_paths(k: usize, m: usize) -> Vec<Vec<usize>> {
        let mut out = vec![vec![]];
        for _ in 0..k {
            out = out
                .into_iter()
                .flat_map(|p| {
                    (0..m).map(move |j| {
                        let mut q = p.clone();
                        q.push(j);
                        q
                    })
                })
                .collect();
        }
        out
    }

    fn score(em: ArrayView2<f64>, y: &[usize], p: &CrfParams) -> f64 {
        let mut s = p.start[y[0]];
        for t in 0..y.len() {
            s += em[[t, y[t]]];
        }
        for t in 1..y.len() {
            s += p.transitions[[y[t - 1], y[t]]];
        }
        s + p.end[y[y.len() - 1]]
    }

    pub fn partition(em: ArrayView2<f64>, p: &CrfParams) -> f64 {
        let (k, m) = em.dim();
        all_paths(k, m).iter().map(|y| score(em, y, p).exp()).sum()
    }

    pub fn posterior(em: ArrayView2<f64>, p: &CrfParams) -> Array2<f64> {
        let (k, m) = em.dim();
        let z = partition(em, p);
        let mut out = Array2::zeros((k, m));
        for y in all_paths(k, m) {
            let w = score(em, &y, p).exp() / z;
            for (t, &j) in y.iter().enumerate() {
                out[[t, j]] += w;
            }
        }
        out
    }

    /// Best path; among equal scores prefer the path that is smallest when
    /// compared from the last position backwards.
    pub fn argmax(em: ArrayView2<f64>, p: &CrfParams) -> (Vec<usize>, f64) {
        let (k, m) = em.dim();
        let mut best: Option<(Vec<usize>, f64)> = None;
        for y in all_paths(k, m) {
            let s = score(em, &y, p);
            let better = match &best {
                None => true,
                Some((by, bs)) => s > *bs || (s == *bs && y.iter().rev().lt(by.iter().rev())),
            };
            if better {
                best = Some((y, s));
            }
        }
        best.unwrap()
    }

    pub fn nll(em: ArrayView2<f64>, gold: &[usize], p: &CrfParams) -> f64 {
        -(score(em, gold, p).exp() / partition(em, p)).ln()
    }
}
