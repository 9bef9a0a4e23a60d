//! Central finite-difference gradient checking.

use serde::Serialize;

use super::Parameters;

/// Central differences `(L(θ+ε) − L(θ−ε)) / 2ε` for every scalar of `params`,
/// grouped per tensor in [`Parameters::tensors`] order.
pub fn numeric_gradient<P: Parameters>(params: &mut P, loss: impl Fn(&P) -> f64, eps: f64) -> Vec<Vec<f64>> {
    let sizes: Vec<usize> = params.tensors().iter().map(|t| t.data.len()).collect();
    let mut out = Vec::with_capacity(sizes.len());
    for (ti, &len) in sizes.iter().enumerate() {
        let mut grad = Vec::with_capacity(len);
        for e in 0..len {
            let orig = params.tensors()[ti].data[e];
            params.tensors_mut()[ti].data[e] = orig + eps;
            let plus = loss(params);
            params.tensors_mut()[ti].data[e] = orig - eps;
            let minus = loss(params);
            params.tensors_mut()[ti].data[e] = orig;
            grad.push((plus - minus) / (2.0 * eps));
        }
        out.push(grad);
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct TensorCheck {
    pub name: String,
    pub len: usize,
    /// `max|a − n| / max(‖a‖∞, ‖n‖∞)`; absolute when both norms are below 1e-10.
    pub rel_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub epsilon: f64,
    pub tolerance: f64,
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.tensors.iter().all(|t| t.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &TensorCheck> {
        self.tensors.iter().filter(|t| !t.passed)
    }

    pub fn max_error(&self) -> f64 {
        self.tensors.iter().map(|t| t.rel_error).fold(0.0, f64::max)
    }
}

pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let inf = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let diff = analytic
        .iter()
        .zip(numeric)
        .fold(0.0f64, |m, (a, n)| m.max((a - n).abs()));
    let scale = inf(analytic).max(inf(numeric));
    if scale < 1e-10 {
        diff
    } else {
        diff / scale
    }
}

/// Compares `analytic` against central differences of `loss` around `params`.
pub fn grad_check<P: Parameters>(
    params: &mut P,
    analytic: &P,
    loss: impl Fn(&P) -> f64,
    epsilon: f64,
    tolerance: f64,
) -> GradCheckReport {
    let numeric = numeric_gradient(params, loss, epsilon);
    let tensors = analytic
        .tensors()
        .into_iter()
        .zip(&numeric)
        .map(|(a, n)| {
            let rel_error = relative_error(a.data, n);
            TensorCheck {
                name: a.name,
                len: n.len(),
                rel_error,
                passed: rel_error < tolerance,
            }
        })
        .collect();
    GradCheckReport {
        epsilon,
        tolerance,
        tensors,
    }
}
