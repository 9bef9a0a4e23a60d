//! Gated recurrent units with backpropagation through time.
//!
//! Per step, with `s = h_{t-1} ∘ mask` (mask = recurrent dropout, all ones
//! when disabled):
//!
//! ```text
//! z   = σ(x W_z + s U_z + b_z)
//! r   = σ(x W_r + s U_r + b_r)
//! n   = tanh(x W_n + (r ∘ s) U_n + b_n)
//! h_t = (1 - z) ∘ n + z ∘ h_{t-1}
//! ```
//!
//! The reset gate multiplies the recurrent state before the `U_n` product.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};


#[derive(Debug, Clone, PartialEq)]
pub struct Gru {
    pub w_z: Array2<f64>,
    pub w_r: Array2<f64>,
    pub w_n: Array2<f64>,
    pub u_z: Array2<f64>,
    pub u_r: Array2<f64>,
    pub u_n: Array2<f64>,
    pub b_z: Array1<f64>,
    pub b_r: Array1<f64>,
    pub b_n: Array1<f64>,
}

crate::impl_parameters!(Gru { w_z, w_r, w_n, u_z, u_r, u_n, b_z, b_r, b_n });

/// Activations cached by [`Gru::forward`] for the matching backward pass.
pub struct GruTape {
    inputs: Array2<f64>,
    h_prev: Array2<f64>,
    s: Array2<f64>,
    z: Array2<f64>,
    r: Array2<f64>,
    n: Array2<f64>,
    mask: Option<Array1<f64>>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Gru {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Gru {
            w_z: Array2::zeros((input, hidden)),
            w_r: Array2::zeros((input, hidden)),
            w_n: Array2::zeros((input, hidden)),
            u_z: Array2::zeros((hidden, hidden)),
            u_r: Array2::zeros((hidden, hidden)),
            u_n: Array2::zeros((hidden, hidden)),
            b_z: Array1::zeros(hidden),
            b_r: Array1::zeros(hidden),
            b_n: Array1::zeros(hidden),
        }
    }

    pub fn init<R: rand::Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let mut g = Gru::zeros(input, hidden);
        for w in [&mut g.w_z, &mut g.w_r, &mut g.w_n] {
            *w = super::glorot_uniform(input, hidden, rng);
        }
        for u in [&mut g.u_z, &mut g.u_r, &mut g.u_n] {
            *u = super::glorot_uniform(hidden, hidden, rng);
        }
        g
    }

    pub fn input_size(&self) -> usize {
        self.w_z.nrows()
    }

    pub fn hidden_size(&self) -> usize {
        self.u_z.nrows()
    }

    /// Runs the recurrence from a zero state over the rows of `x`.
    pub fn forward(&self, x: ArrayView2<f64>, mask: Option<ArrayView1<f64>>) -> (Array2<f64>, GruTape) {
        let (k, h) = (x.nrows(), self.hidden_size());
        let mut tape = GruTape {
            inputs: x.to_owned(),
            h_prev: Array2::zeros((k, h)),
            s: Array2::zeros((k, h)),
            z: Array2::zeros((k, h)),
            r: Array2::zeros((k, h)),
            n: Array2::zeros((k, h)),
            mask: mask.map(|m| m.to_owned()),
        };
        let xz = x.dot(&self.w_z) + &self.b_z;
        let xr = x.dot(&self.w_r) + &self.b_r;
        let xn = x.dot(&self.w_n) + &self.b_n;
        let mut out = Array2::zeros((k, h));
        let mut prev = Array1::<f64>::zeros(h);
        for t in 0..k {
            let s = match &tape.mask {
                Some(m) => &prev * m,
                None => prev.clone(),
            };
            let z = (&xz.row(t) + &s.dot(&self.u_z)).mapv(sigmoid);
            let r = (&xr.row(t) + &s.dot(&self.u_r)).mapv(sigmoid);
            let n = (&xn.row(t) + &(&r * &s).dot(&self.u_n)).mapv(f64::tanh);
            let next = ndarray::Zip::from(&z)
                .and(&n)
                .and(&prev)
                .map_collect(|&z, &n, &p| (1.0 - z) * n + z * p);
            tape.h_prev.row_mut(t).assign(&prev);
            tape.s.row_mut(t).assign(&s);
            tape.z.row_mut(t).assign(&z);
            tape.r.row_mut(t).assign(&r);
            tape.n.row_mut(t).assign(&n);
            out.row_mut(t).assign(&next);
            prev = next;
        }
        (out, tape)
    }

    /// Backpropagation through time. `d_out` is the loss gradient with respect
    /// to every output state; returns the gradient with respect to the inputs.
    pub fn backward(&self, tape: &GruTape, d_out: ArrayView2<f64>, grads: &mut Gru) -> Array2<f64> {
        let (k, h) = (tape.inputs.nrows(), self.hidden_size());
        let mut d_xz = Array2::<f64>::zeros((k, h));
        let mut d_xr = Array2::<f64>::zeros((k, h));
        let mut d_xn = Array2::<f64>::zeros((k, h));
        let mut carry = Array1::<f64>::zeros(h);
        for t in (0..k).rev() {
            let dh = &d_out.row(t) + &carry;
            let (z, r, n) = (tape.z.row(t), tape.r.row(t), tape.n.row(t));
            let (hp, s) = (tape.h_prev.row(t), tape.s.row(t));

            let dz = ndarray::Zip::from(&dh).and(&hp).and(&n).map_collect(|&g, &p, &n| g * (p - n));
            let da_n = ndarray::Zip::from(&dh)
                .and(&z)
                .and(&n)
                .map_collect(|&g, &z, &n| g * (1.0 - z) * (1.0 - n * n));
            let mut d_h_prev = &dh * &z;

            let rs = &r * &s;
            let d_rs = da_n.dot(&self.u_n.t());
            let dr = &d_rs * &s;
            let da_z = ndarray::Zip::from(&dz).and(&z).map_collect(|&g, &z| g * z * (1.0 - z));
            let da_r = ndarray::Zip::from(&dr).and(&r).map_collect(|&g, &r| g * r * (1.0 - r));

            outer_add(&mut grads.u_n, rs.view(), da_n.view());
            outer_add(&mut grads.u_z, s, da_z.view());
            outer_add(&mut grads.u_r, s, da_r.view());

            let ds = &d_rs * &r + &da_z.dot(&self.u_z.t()) + &da_r.dot(&self.u_r.t());
            match &tape.mask {
                Some(m) => d_h_prev += &(&ds * m),
                None => d_h_prev += &ds,
            }

            d_xz.row_mut(t).assign(&da_z);
            d_xr.row_mut(t).assign(&da_r);
            d_xn.row_mut(t).assign(&da_n);
            carry = d_h_prev;
        }
        let x = &tape.inputs;
        grads.w_z += &x.t().dot(&d_xz);
        grads.w_r += &x.t().dot(&d_xr);
        grads.w_n += &x.t().dot(&d_xn);
        grads.b_z += &d_xz.sum_axis(Axis(0));
        grads.b_r += &d_xr.sum_axis(Axis(0));
        grads.b_n += &d_xn.sum_axis(Axis(0));
        d_xz.dot(&self.w_z.t()) + d_xr.dot(&self.w_r.t()) + d_xn.dot(&self.w_n.t())
    }
}

fn outer_add(acc: &mut Array2<f64>, a: ArrayView1<f64>, b: ArrayView1<f64>) {
    for (i, &ai) in a.iter().enumerate() {
        if ai != 0.0 {
            acc.row_mut(i).scaled_add(ai, &b);
        }
    }
}

/// Forward and backward GRUs whose outputs are concatenated per position.
#[derive(Debug, Clone, PartialEq)]
pub struct BiGru {
    pub fwd: Gru,
    pub bwd: Gru,
}

crate::impl_parameters!(BiGru { fwd, bwd });

pub struct BiGruTape {
    fwd: GruTape,
    bwd: GruTape,
}

/// Recurrent dropout masks for one utterance, one per direction.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks {
    pub fwd: Array1<f64>,
    pub bwd: Array1<f64>,
}

impl DropoutMasks {
    /// Inverted dropout: kept units are scaled by `1 / (1 - rate)`.
    pub fn sample<R: rand::Rng>(hidden: usize, rate: f64, rng: &mut R) -> Self {
        let keep = 1.0 - rate;
        let mut draw = || Array1::from_shape_fn(hidden, |_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 });
        let fwd = draw();
        let bwd = draw();
        DropoutMasks { fwd, bwd }
    }
}

fn reversed(x: ArrayView2<f64>) -> Array2<f64> {
    x.slice(s![..;-1, ..]).to_owned()
}

impl BiGru {
    pub fn init<R: rand::Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        BiGru {
            fwd: Gru::init(input, hidden, rng),
            bwd: Gru::init(input, hidden, rng),
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        BiGru {
            fwd: Gru::zeros(input, hidden),
            bwd: Gru::zeros(input, hidden),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.fwd.hidden_size()
    }

    /// Returns `k × 2h`: forward states then backward states per position.
    pub fn forward(&self, x: ArrayView2<f64>, masks: Option<&DropoutMasks>) -> (Array2<f64>, BiGruTape) {
        let h = self.hidden_size();
        let (f_out, f_tape) = self.fwd.forward(x, masks.map(|m| m.fwd.view()));
        let rx = reversed(x);
        let (b_out, b_tape) = self.bwd.forward(rx.view(), masks.map(|m| m.bwd.view()));
        let mut out = Array2::zeros((x.nrows(), 2 * h));
        out.slice_mut(s![.., ..h]).assign(&f_out);
        out.slice_mut(s![.., h..]).assign(&b_out.slice(s![..;-1, ..]));
        (out, BiGruTape { fwd: f_tape, bwd: b_tape })
    }

    pub fn backward(&self, tape: &BiGruTape, d_out: ArrayView2<f64>, grads: &mut BiGru) -> Array2<f64> {
        let h = self.hidden_size();
        let d_fwd = d_out.slice(s![.., ..h]);
        let d_bwd = reversed(d_out.slice(s![.., h..]));
        let dx_f = self.fwd.backward(&tape.fwd, d_fwd, &mut grads.fwd);
        let dx_b = self.bwd.backward(&tape.bwd, d_bwd.view(), &mut grads.bwd);
        dx_f + reversed(dx_b.view())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::Parameters;
    use crate::neural::gradcheck::numeric_gradient;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    fn random_gru(input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Gru {
        let mut g = Gru::init(input, hidden, rng);
        for b in [&mut g.b_z, &mut g.b_r, &mut g.b_n] {
            b.mapv_inplace(|_| rand::Rng::random_range(rng, -0.5..0.5));
        }
        g
    }

    /// Independent scalar implementation of one GRU step.
    fn scalar_step(g: &Gru, x: &[f64], prev: &[f64], mask: &[f64]) -> Vec<f64> {
        let (d, h) = (x.len(), prev.len());
        let s: Vec<f64> = (0..h).map(|j| prev[j] * mask[j]).collect();
        let gate = |w: &Array2<f64>, u: &Array2<f64>, b: &Array1<f64>, rec: &[f64], j: usize| {
            let mut a = b[j];
            for i in 0..d {
                a += x[i] * w[[i, j]];
            }
            for i in 0..h {
                a += rec[i] * u[[i, j]];
            }
            a
        };
        let z: Vec<f64> = (0..h).map(|j| 1.0 / (1.0 + (-gate(&g.w_z, &g.u_z, &g.b_z, &s, j)).exp())).collect();
        let r: Vec<f64> = (0..h).map(|j| 1.0 / (1.0 + (-gate(&g.w_r, &g.u_r, &g.b_r, &s, j)).exp())).collect();
        let rs: Vec<f64> = (0..h).map(|j| r[j] * s[j]).collect();
        let n: Vec<f64> = (0..h).map(|j| gate(&g.w_n, &g.u_n, &g.b_n, &rs, j).tanh()).collect();
        (0..h).map(|j| (1.0 - z[j]) * n[j] + z[j] * prev[j]).collect()
    }

    #[test]
    fn matches_scalar_recurrence() {
        let mut rng = rng();
        let g = random_gru(3, 2, &mut rng);
        let x = Array2::from_shape_fn((3, 3), |_| rand::Rng::random_range(&mut rng, -1.0..1.0));
        let mask = Array1::from(vec![2.0, 0.0]);
        for m in [None, Some(mask.view())] {
            let (out, _) = g.forward(x.view(), m);
            let ones = vec![1.0; 2];
            let mvec = m.map_or(ones, |m| m.to_vec());
            let mut prev = vec![0.0; 2];
            for t in 0..3 {
                prev = scalar_step(&g, &x.row(t).to_vec(), &prev, &mvec);
                for j in 0..2 {
                    assert!((out[[t, j]] - prev[j]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn single_step_bigru_is_two_zero_state_steps() {
        let mut rng = rng();
        let bi = BiGru {
            fwd: random_gru(2, 3, &mut rng),
            bwd: random_gru(2, 3, &mut rng),
        };
        let x = Array2::from_shape_vec((1, 2), vec![0.3, -0.7]).unwrap();
        let (out, _) = bi.forward(x.view(), None);
        let f = scalar_step(&bi.fwd, &[0.3, -0.7], &[0.0; 3], &[1.0; 3]);
        let b = scalar_step(&bi.bwd, &[0.3, -0.7], &[0.0; 3], &[1.0; 3]);
        let expect: Vec<f64> = f.into_iter().chain(b).collect();
        for (a, e) in out.iter().zip(&expect) {
            assert!((a - e).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_weights_give_zero_outputs() {
        let bi = BiGru::zeros(4, 3);
        let x = Array2::from_elem((5, 4), 0.9);
        let (out, _) = bi.forward(x.view(), None);
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn reversal_symmetry() {
        let mut rng = rng();
        let g = random_gru(3, 4, &mut rng);
        let bi = BiGru {
            fwd: g.clone(),
            bwd: g.clone(),
        };
        let x = Array2::from_shape_fn((6, 3), |_| rand::Rng::random_range(&mut rng, -1.0..1.0));
        let (fwd_only, _) = g.forward(x.view(), None);
        let (out, _) = bi.forward(reversed(x.view()).view(), None);
        let bwd_half = out.slice(s![.., 4..]);
        for t in 0..6 {
            for j in 0..4 {
                assert_eq!(bwd_half[[5 - t, j]], fwd_only[[t, j]]);
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = rng();
        let mut bi = BiGru {
            fwd: random_gru(3, 2, &mut rng),
            bwd: random_gru(3, 2, &mut rng),
        };
        let x = Array2::from_shape_fn((4, 3), |_| rand::Rng::random_range(&mut rng, -1.0..1.0));
        let probe = Array2::from_shape_fn((4, 4), |_| rand::Rng::random_range(&mut rng, -1.0..1.0));
        let masks = DropoutMasks::sample(2, 0.5, &mut rng);
        let loss = |b: &BiGru, x: &Array2<f64>| {
            let (out, _) = b.forward(x.view(), Some(&masks));
            (&out * &probe).sum()
        };
        let (_, tape) = bi.forward(x.view(), Some(&masks));
        let mut grads = BiGru::zeros(3, 2);
        let dx = bi.backward(&tape, probe.view(), &mut grads);

        let numeric = numeric_gradient(&mut bi, |b| loss(b, &x), 1e-5);
        for (a, n) in grads.tensors().iter().zip(&numeric) {
            for (ga, gn) in a.data.iter().zip(n) {
                assert!((ga - gn).abs() < 1e-8, "{}: {ga} vs {gn}", a.name);
            }
        }
        let mut xv = x.clone();
        let numeric_x = numeric_gradient(&mut xv, |xx| loss(&bi, xx), 1e-5);
        for (a, n) in dx.iter().zip(&numeric_x[0]) {
            assert!((a - n).abs() < 1e-8);
        }
    }

    #[test]
    fn dropout_mask_is_inverted_and_deterministic() {
        let m1 = DropoutMasks::sample(1000, 0.5, &mut rng());
        let m2 = DropoutMasks::sample(1000, 0.5, &mut rng());
        assert_eq!(m1, m2);
        assert!(m1.fwd.iter().all(|&v| v == 0.0 || v == 2.0));
        let kept = m1.fwd.iter().filter(|&&v| v > 0.0).count();
        assert!((400..600).contains(&kept));
    }

    #[test]
    fn param_count_formula() {
        assert_eq!(Gru::zeros(300, 60).num_params(), 3 * (300 * 60 + 60 * 60 + 60));
    }
}
