//! Cheap competitor scorers that share the MLP head and training loop:
//! sum-of-embeddings, whole-sentence MLP, and the shallow global-pool CNN.

use std::cmp::Ordering;

use crate::arc1::Arc1Model;
use crate::conv::SentenceModelConfig;
use crate::embedding::EncodedSentence;
use crate::error::{Error, Result};
use crate::mlp::{dense_tensors, HeadTrace, MlpHead};
use crate::model::{check_sentence, Gradients, MatchModel};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{Activation, Tensor};

/// Sum of word vectors for each sentence, concatenated into an MLP.
#[derive(Debug, Clone, PartialEq)]
pub struct WordEmbedModel<T> {
    pub dim: usize,
    /// Padded lengths used when encoding inputs; the score itself accepts any length.
    pub l_max_x: usize,
    pub l_max_y: usize,
    pub head: MlpHead<T>,
}

#[derive(Debug, Clone)]
pub struct WordEmbedTrace<T> {
    shape_x: Vec<usize>,
    shape_y: Vec<usize>,
    head: HeadTrace<T>,
}

/// Sum of the rows of `x`, added in a content-determined order so the result
/// is bitwise invariant under any permutation of the words.
pub fn bag_sum<T: Scalar>(x: &Tensor<T>) -> Vec<T> {
    let d = x.shape()[1];
    let mut rows: Vec<&[T]> = (0..x.shape()[0])
        .map(|i| x.row(i))
        .filter(|r| r.iter().any(|v| !v.is_zero()))
        .collect();
    rows.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let mut sum = vec![T::zero(); d];
    for r in rows {
        for (s, &v) in sum.iter_mut().zip(r) {
            *s += v;
        }
    }
    sum
}

impl<T: Scalar> WordEmbedModel<T> {
    pub fn new(
        dim: usize,
        l_max_x: usize,
        l_max_y: usize,
        hidden: &[usize],
        activation: Activation,
        dropout: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        Ok(Self {
            dim,
            l_max_x,
            l_max_y,
            head: MlpHead::init(2 * dim, hidden, activation, dropout, rng)?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.head.check()?;
        if self.head.input_len() != 2 * self.dim {
            return Err(Error::Dimension(format!(
                "head takes {} inputs, expected {}",
                self.head.input_len(),
                2 * self.dim
            )));
        }
        Ok(())
    }
}

impl<T: Scalar> MatchModel<T> for WordEmbedModel<T> {
    type Trace = WordEmbedTrace<T>;

    fn forward(
        &self,
        sx: &EncodedSentence<T>,
        sy: &EncodedSentence<T>,
        dropout: Option<&mut Rng>,
    ) -> Result<(T, WordEmbedTrace<T>)> {
        if sx.dim() != self.dim || sy.dim() != self.dim {
            return Err(Error::Dimension(format!(
                "sentences have D={}/{}, model expects {}",
                sx.dim(),
                sy.dim(),
                self.dim
            )));
        }
        let mut joint = bag_sum(&sx.x);
        joint.extend(bag_sum(&sy.x));
        let (score, head) = self.head.forward(&joint, dropout)?;
        Ok((
            score,
            WordEmbedTrace {
                shape_x: sx.x.shape().to_vec(),
                shape_y: sy.x.shape().to_vec(),
                head,
            },
        ))
    }

    fn backward(&self, trace: &WordEmbedTrace<T>, upstream: T) -> Gradients<T> {
        let (grads, d_joint) = self.head.backward(&trace.head, upstream);
        let spread = |shape: &[usize], d: &[T]| {
            let mut t = Tensor::zeros(shape);
            for i in 0..shape[0] {
                t.row_mut(i).copy_from_slice(d);
            }
            t
        };
        let dx = spread(&trace.shape_x, &d_joint[..self.dim]);
        let dy = spread(&trace.shape_y, &d_joint[self.dim..]);
        Gradients {
            params: dense_tensors(grads).collect(),
            dx,
            dy,
        }
    }

    fn params(&self) -> Vec<&Tensor<T>> {
        self.head.tensors()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.head.tensors_mut()
    }

    fn head_mut(&mut self) -> &mut MlpHead<T> {
        &mut self.head
    }
}

/// Both padded sentence matrices flattened and concatenated into an MLP.
#[derive(Debug, Clone, PartialEq)]
pub struct SenMlpModel<T> {
    pub dim: usize,
    pub l_max_x: usize,
    pub l_max_y: usize,
    pub head: MlpHead<T>,
}

#[derive(Debug, Clone)]
pub struct SenMlpTrace<T> {
    head: HeadTrace<T>,
}

impl<T: Scalar> SenMlpModel<T> {
    pub fn new(
        dim: usize,
        l_max_x: usize,
        l_max_y: usize,
        hidden: &[usize],
        activation: Activation,
        dropout: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        let head = MlpHead::init((l_max_x + l_max_y) * dim, hidden, activation, dropout, rng)?;
        Ok(Self {
            dim,
            l_max_x,
            l_max_y,
            head,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.head.check()?;
        let want = (self.l_max_x + self.l_max_y) * self.dim;
        if self.head.input_len() != want {
            return Err(Error::Dimension(format!(
                "head takes {} inputs, expected {want}",
                self.head.input_len()
            )));
        }
        Ok(())
    }
}

impl<T: Scalar> MatchModel<T> for SenMlpModel<T> {
    type Trace = SenMlpTrace<T>;

    fn forward(
        &self,
        sx: &EncodedSentence<T>,
        sy: &EncodedSentence<T>,
        dropout: Option<&mut Rng>,
    ) -> Result<(T, SenMlpTrace<T>)> {
        check_sentence(sx, self.l_max_x, self.dim, "x")?;
        check_sentence(sy, self.l_max_y, self.dim, "y")?;
        let mut joint = sx.x.data().to_vec();
        joint.extend_from_slice(sy.x.data());
        let (score, head) = self.head.forward(&joint, dropout)?;
        Ok((score, SenMlpTrace { head }))
    }

    fn backward(&self, trace: &SenMlpTrace<T>, upstream: T) -> Gradients<T> {
        let (grads, d_joint) = self.head.backward(&trace.head, upstream);
        let split = self.l_max_x * self.dim;
        let dx = Tensor::from_vec(&[self.l_max_x, self.dim], d_joint[..split].to_vec())
            .expect("x shape");
        let dy = Tensor::from_vec(&[self.l_max_y, self.dim], d_joint[split..].to_vec())
            .expect("y shape");
        Gradients {
            params: dense_tensors(grads).collect(),
            dx,
            dy,
        }
    }

    fn params(&self) -> Vec<&Tensor<T>> {
        self.head.tensors()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.head.tensors_mut()
    }

    fn head_mut(&mut self) -> &mut MlpHead<T> {
        &mut self.head
    }
}

/// Shallow convolutional baseline: one convolution, a max over all
/// locations per feature map, then the shared head. It is an [`Arc1Model`]
/// whose encoders run in global-pool mode.
pub fn senna_mlp_model<T: Scalar>(
    config_x: SentenceModelConfig,
    config_y: SentenceModelConfig,
    hidden: &[usize],
    dropout: f64,
    rng: &mut Rng,
) -> Result<Arc1Model<T>> {
    for (side, c) in [("x", &config_x), ("y", &config_y)] {
        if !c.global_pool || c.depth() != 1 {
            return Err(Error::Config(format!(
                "SENNA-style {side} encoder needs exactly one conv layer with global pooling"
            )));
        }
    }
    Arc1Model::new(config_x, config_y, false, hidden, dropout, rng)
}
