//! Multi-layer perceptron head producing the scalar match score.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{
    affine_into, affine_transpose_acc, init_uniform, outer_acc, Activation, Tensor,
};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams<T> {
    pub w: Tensor<T>,
    pub b: Tensor<T>,
}

impl<T: Scalar> DenseParams<T> {
    fn zeros_like(&self) -> Self {
        Self {
            w: Tensor::zeros(self.w.shape()),
            b: Tensor::zeros(self.b.shape()),
        }
    }
}

/// Hidden layers use `activation` and optional inverted dropout; the last
/// layer is linear with one output.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpHead<T> {
    pub layers: Vec<DenseParams<T>>,
    pub activation: Activation,
    pub dropout: f64,
}

#[derive(Debug, Clone)]
pub struct HeadTrace<T> {
    /// Input to each dense layer (after dropout for hidden layers).
    inputs: Vec<Vec<T>>,
    /// Activated hidden outputs before dropout.
    hidden: Vec<Vec<T>>,
    masks: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> MlpHead<T> {
    pub fn init(
        input: usize,
        hidden: &[usize],
        activation: Activation,
        dropout: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        if input == 0 || hidden.contains(&0) {
            return Err(Error::Config(format!(
                "MLP widths must be positive: input {input}, hidden {hidden:?}"
            )));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::Config(format!(
                "dropout rate {dropout} outside [0, 1)"
            )));
        }
        let mut widths = vec![input];
        widths.extend_from_slice(hidden);
        widths.push(1);
        let layers = widths
            .windows(2)
            .map(|w| DenseParams {
                w: init_uniform(&[w[1], w[0]], w[0], w[1], rng),
                b: Tensor::zeros(&[w[1]]),
            })
            .collect();
        Ok(Self {
            layers,
            activation,
            dropout,
        })
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].w.shape()[1]
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(|l| l.b.len())
            .collect()
    }

    pub fn check(&self) -> Result<()> {
        let last = self
            .layers
            .last()
            .ok_or_else(|| Error::Config("empty MLP".into()))?;
        if last.b.len() != 1 {
            return Err(Error::Config("MLP must end in a single output".into()));
        }
        for pair in self.layers.windows(2) {
            if pair[1].w.shape()[1] != pair[0].b.len() {
                return Err(Error::Dimension(format!(
                    "MLP layer widths do not chain: {:?} then {:?}",
                    pair[0].w.shape(),
                    pair[1].w.shape()
                )));
            }
        }
        Ok(())
    }

    /// Score `input`; dropout masks are drawn from `dropout_rng` when given
    /// and the rate is positive.
    pub fn forward(
        &self,
        input: &[T],
        mut dropout_rng: Option<&mut Rng>,
    ) -> Result<(T, HeadTrace<T>)> {
        if input.len() != self.input_len() {
            return Err(Error::Dimension(format!(
                "MLP expects {} inputs, got {}",
                self.input_len(),
                input.len()
            )));
        }
        let last = self.layers.len() - 1;
        let mut trace = HeadTrace {
            inputs: Vec::new(),
            hidden: Vec::new(),
            masks: Vec::new(),
        };
        let mut current = input.to_vec();
        for (l, p) in self.layers.iter().enumerate() {
            let mut out = vec![T::zero(); p.b.len()];
            affine_into(p.w.data(), current.len(), &current, p.b.data(), &mut out);
            trace.inputs.push(std::mem::take(&mut current));
            if l == last {
                return Ok((out[0], trace));
            }
            out.iter_mut().for_each(|v| *v = self.activation.apply(*v));
            let mask = match dropout_rng.as_deref_mut() {
                Some(rng) if self.dropout > 0.0 => {
                    let keep = T::from_f64_lossy(1.0 / (1.0 - self.dropout));
                    Some(
                        (0..out.len())
                            .map(|_| {
                                if rng.bernoulli(self.dropout) {
                                    T::zero()
                                } else {
                                    keep
                                }
                            })
                            .collect::<Vec<T>>(),
                    )
                }
                _ => None,
            };
            current = match &mask {
                Some(m) => out.iter().zip(m).map(|(&a, &b)| a * b).collect(),
                None => out.clone(),
            };
            trace.hidden.push(out);
            trace.masks.push(mask);
        }
        unreachable!("MLP has at least one layer")
    }

    /// Gradients for every layer and w.r.t. the head input.
    pub fn backward(&self, trace: &HeadTrace<T>, upstream: T) -> (Vec<DenseParams<T>>, Vec<T>) {
        let mut grads: Vec<DenseParams<T>> =
            self.layers.iter().map(DenseParams::zeros_like).collect();
        let mut d_out = vec![upstream];
        for l in (0..self.layers.len()).rev() {
            let p = &self.layers[l];
            let input = &trace.inputs[l];
            let n = input.len();
            outer_acc(grads[l].w.data_mut(), n, &d_out, input);
            for (g, &d) in grads[l].b.data_mut().iter_mut().zip(&d_out) {
                *g += d;
            }
            let mut d_in = vec![T::zero(); n];
            affine_transpose_acc(p.w.data(), n, &d_out, &mut d_in);
            if l > 0 {
                let h = &trace.hidden[l - 1];
                if let Some(m) = &trace.masks[l - 1] {
                    d_in.iter_mut().zip(m).for_each(|(d, &mv)| *d *= mv);
                }
                d_in.iter_mut()
                    .zip(h)
                    .for_each(|(d, &hv)| *d *= self.activation.derivative_from_output(hv));
            }
            d_out = d_in;
        }
        (grads, d_out)
    }

    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        self.layers.iter().flat_map(|p| [&p.w, &p.b]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers
            .iter_mut()
            .flat_map(|p| [&mut p.w, &mut p.b])
            .collect()
    }
}

pub(crate) fn dense_tensors<T>(grads: Vec<DenseParams<T>>) -> impl Iterator<Item = Tensor<T>> {
    grads.into_iter().flat_map(|p| [p.w, p.b])
}
