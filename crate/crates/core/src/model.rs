//! Common interface over every matching model.

use crate::embedding::EncodedSentence;
use crate::error::{Error, Result};
use crate::mlp::MlpHead;
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Gradients of a scalar objective, aligned with [`MatchModel::params`], plus
/// the gradients w.r.t. both input sentence matrices.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    pub params: Vec<Tensor<T>>,
    pub dx: Tensor<T>,
    pub dy: Tensor<T>,
}

/// A scorer `s(x, y)` with hand-written backpropagation.
pub trait MatchModel<T: Scalar>: Clone + Send + Sync {
    type Trace: Send;

    /// Score the pair. Dropout is applied only when `dropout` is given.
    fn forward(
        &self,
        sx: &EncodedSentence<T>,
        sy: &EncodedSentence<T>,
        dropout: Option<&mut Rng>,
    ) -> Result<(T, Self::Trace)>;

    /// Gradients given `upstream = d(objective)/d(score)`.
    fn backward(&self, trace: &Self::Trace, upstream: T) -> Gradients<T>;

    /// Every parameter tensor in a fixed order (layer ascending, W before b, head last).
    fn params(&self) -> Vec<&Tensor<T>>;

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>>;

    /// The scoring head, e.g. to set its dropout rate.
    fn head_mut(&mut self) -> &mut MlpHead<T>;

    fn score(&self, sx: &EncodedSentence<T>, sy: &EncodedSentence<T>) -> Result<T> {
        Ok(self.forward(sx, sy, None)?.0)
    }

    fn num_params(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }
}

pub fn flat_params<T: Scalar, M: MatchModel<T>>(model: &M) -> Vec<T> {
    model
        .params()
        .iter()
        .flat_map(|t| t.data().iter().copied())
        .collect()
}

pub fn set_flat_params<T: Scalar, M: MatchModel<T>>(model: &mut M, values: &[T]) -> Result<()> {
    let want = model.num_params();
    if values.len() != want {
        return Err(Error::Dimension(format!(
            "expected {want} parameter values, got {}",
            values.len()
        )));
    }
    let mut off = 0;
    for t in model.params_mut() {
        let n = t.len();
        t.data_mut().copy_from_slice(&values[off..off + n]);
        off += n;
    }
    Ok(())
}

pub fn flat_grads<T: Scalar>(grads: &Gradients<T>) -> Vec<T> {
    grads
        .params
        .iter()
        .flat_map(|t| t.data().iter().copied())
        .collect()
}

pub(crate) fn check_sentence<T: Scalar>(
    s: &EncodedSentence<T>,
    l_max: usize,
    dim: usize,
    side: &str,
) -> Result<()> {
    if s.x.shape() != [l_max, dim] {
        return Err(Error::Dimension(format!(
            "{side} sentence is {:?}, model expects [{l_max}, {dim}]",
            s.x.shape()
        )));
    }
    Ok(())
}
