//! Named views over trainable tensors.
//!
//! Every layer exposes its tensors through [`Parameters`] so the optimizer,
//! checkpoint writer and gradient checker can treat a model as a flat,
//! ordered list of `(name, shape, data)` triples. A gradient structure has
//! the same type as the parameters it belongs to, so both lists line up
//! index for index.

use ndarray::{Array1, Array2};

#[derive(Debug)]
pub struct Tensor<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

#[derive(Debug)]
pub struct TensorMut<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a mut [f64],
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

pub trait Parameters {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<Tensor<'a>>);
    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<TensorMut<'a>>);

    fn tensors(&self) -> Vec<Tensor<'_>> {
        let mut out = Vec::new();
        self.collect("", &mut out);
        out
    }

    fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        let mut out = Vec::new();
        self.collect_mut("", &mut out);
        out
    }

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    fn fill(&mut self, value: f64) {
        for t in self.tensors_mut() {
            t.data.fill(value);
        }
    }

    /// `self += scale * other`, tensor by tensor.
    fn add_scaled(&mut self, other: &Self, scale: f64)
    where
        Self: Sized,
    {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.data.iter_mut().zip(src.data) {
                *d += scale * s;
            }
        }
    }
}

impl Parameters for Array1<f64> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<Tensor<'a>>) {
        out.push(Tensor {
            name: prefix.to_string(),
            shape: vec![self.len()],
            data: self.as_slice().expect("parameter tensors are contiguous"),
        });
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<TensorMut<'a>>) {
        let shape = vec![self.len()];
        out.push(TensorMut {
            name: prefix.to_string(),
            shape,
            data: self.as_slice_mut().expect("parameter tensors are contiguous"),
        });
    }
}

impl Parameters for Array2<f64> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<Tensor<'a>>) {
        out.push(Tensor {
            name: prefix.to_string(),
            shape: self.shape().to_vec(),
            data: self.as_slice().expect("parameter tensors are contiguous"),
        });
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<TensorMut<'a>>) {
        let shape = self.shape().to_vec();
        out.push(TensorMut {
            name: prefix.to_string(),
            shape,
            data: self.as_slice_mut().expect("parameter tensors are contiguous"),
        });
    }
}

impl<T: Parameters> Parameters for Option<T> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<Tensor<'a>>) {
        if let Some(p) = self {
            p.collect(prefix, out);
        }
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<TensorMut<'a>>) {
        if let Some(p) = self {
            p.collect_mut(prefix, out);
        }
    }
}

/// Implements [`Parameters`] for a struct by visiting the listed fields in order.
#[macro_export]
macro_rules! impl_parameters {
    ($ty:ty { $($field:ident),+ $(,)? }) => {
        impl $crate::neural::Parameters for $ty {
            fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<$crate::neural::Tensor<'a>>) {
                $( $crate::neural::Parameters::collect(
                    &self.$field, &$crate::neural::params::join(prefix, stringify!($field)), out); )+
            }

            fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<$crate::neural::TensorMut<'a>>) {
                $( $crate::neural::Parameters::collect_mut(
                    &mut self.$field, &$crate::neural::params::join(prefix, stringify!($field)), out); )+
            }
        }
    };
}

/// Glorot/Xavier uniform initialization for a `fan_in × fan_out` matrix.
pub fn glorot_uniform<R: rand::Rng>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-limit..=limit))
}
