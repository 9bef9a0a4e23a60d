use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    None,
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::None => x,
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation output `y`.
    fn derivative(self, y: f64) -> f64 {
        match self {
            Activation::None => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

/// Fully connected layer; `weight` is `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

crate::impl_parameters!(Dense { weight, bias });

pub struct DenseTape {
    input: Array2<f64>,
    output: Array2<f64>,
    activation: Activation,
}

impl Dense {
    pub fn zeros(input: usize, output: usize) -> Self {
        Dense {
            weight: Array2::zeros((input, output)),
            bias: Array1::zeros(output),
        }
    }

    pub fn init<R: rand::Rng>(input: usize, output: usize, rng: &mut R) -> Self {
        Dense {
            weight: super::glorot_uniform(input, output, rng),
            bias: Array1::zeros(output),
        }
    }

    pub fn forward_vec(&self, x: &Array1<f64>, activation: Activation) -> Array1<f64> {
        (x.dot(&self.weight) + &self.bias).mapv(|v| activation.apply(v))
    }

    /// Row-wise affine map over a `k × in` input.
    pub fn forward(&self, x: ArrayView2<f64>, activation: Activation) -> (Array2<f64>, DenseTape) {
        let out = (x.dot(&self.weight) + &self.bias).mapv(|v| activation.apply(v));
        let tape = DenseTape {
            input: x.to_owned(),
            output: out.clone(),
            activation,
        };
        (out, tape)
    }

    /// Accumulates parameter gradients into `grads` and returns the input gradient.
    pub fn backward(&self, tape: &DenseTape, d_out: ArrayView2<f64>, grads: &mut Dense) -> Array2<f64> {
        let act = tape.activation;
        let d_pre = ndarray::Zip::from(&d_out)
            .and(&tape.output)
            .map_collect(|&g, &y| g * act.derivative(y));
        grads.weight += &tape.input.t().dot(&d_pre);
        grads.bias += &d_pre.sum_axis(Axis(0));
        d_pre.dot(&self.weight.t())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::Parameters;
    use ndarray::array;

    #[test]
    fn identity_passes_through() {
        let d = Dense {
            weight: Array2::eye(3),
            bias: Array1::zeros(3),
        };
        let x = array![1.0, -2.0, 3.5];
        assert_eq!(d.forward_vec(&x, Activation::None), x);
    }

    #[test]
    fn relu_clamps_negative() {
        let d = Dense {
            weight: array![[1.0]],
            bias: array![-5.0],
        };
        assert_eq!(d.forward_vec(&array![2.0], Activation::Relu), array![0.0]);
    }

    #[test]
    fn hand_example() {
        // [1, 2] · [[1, 2], [3, 4]] + [0.5, -1] = [7.5, 9]
        let d = Dense {
            weight: array![[1.0, 2.0], [3.0, 4.0]],
            bias: array![0.5, -1.0],
        };
        assert_eq!(d.forward_vec(&array![1.0, 2.0], Activation::None), array![7.5, 9.0]);
        let t = d.forward_vec(&array![1.0, 2.0], Activation::Tanh);
        assert!((t[0] - 7.5f64.tanh()).abs() < 1e-15);
    }

    #[test]
    fn quadratic_loss_gradient_is_outer_product() {
        // L = ½‖xW + b‖² ⇒ ∂L/∂W = xᵀ y, ∂L/∂b = y.
        let d = Dense {
            weight: array![[0.5, -1.0], [2.0, 0.25]],
            bias: array![0.1, 0.2],
        };
        let x = array![[1.0, 3.0]];
        let (y, tape) = d.forward(x.view(), Activation::None);
        let mut g = Dense::zeros(2, 2);
        let dx = d.backward(&tape, y.view(), &mut g);
        assert_eq!(g.weight, x.t().dot(&y));
        assert_eq!(g.bias, y.row(0).to_owned());
        assert_eq!(dx, y.dot(&d.weight.t()));
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let d = Dense::zeros(3, 2);
        let (y, tape) = d.forward(array![[1.0, 2.0, 3.0]].view(), Activation::Tanh);
        let mut g = Dense::zeros(3, 2);
        d.backward(&tape, Array2::zeros(y.dim()).view(), &mut g);
        assert!(g.tensors().iter().all(|t| t.data.iter().all(|&v| v == 0.0)));
    }
}
