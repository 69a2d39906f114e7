//! Siamese matcher: two convolutional sentence encoders whose vectors are
//! concatenated and scored by an MLP.

use crate::conv::{encode, encode_backward, LayerTrace, SentenceModelConfig, SentenceModelParams};
use crate::embedding::EncodedSentence;
use crate::error::{Error, Result};
use crate::mlp::{dense_tensors, HeadTrace, MlpHead};
use crate::model::{check_sentence, Gradients, MatchModel};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{Activation, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct Arc1Model<T> {
    pub config_x: SentenceModelConfig,
    pub config_y: SentenceModelConfig,
    pub params_x: SentenceModelParams<T>,
    /// `None` when the two encoders share weights.
    pub params_y: Option<SentenceModelParams<T>>,
    pub head: MlpHead<T>,
}

#[derive(Debug, Clone)]
pub struct Arc1Trace<T> {
    pub vx: Tensor<T>,
    pub vy: Tensor<T>,
    pub trace_x: LayerTrace<T>,
    pub trace_y: LayerTrace<T>,
    head: HeadTrace<T>,
}

impl<T: Scalar> Arc1Model<T> {
    pub fn new(
        config_x: SentenceModelConfig,
        config_y: SentenceModelConfig,
        tie_weights: bool,
        hidden: &[usize],
        dropout: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        if tie_weights && config_x != config_y {
            return Err(Error::Config(
                "tied encoders need identical sentence configs".into(),
            ));
        }
        let params_x = SentenceModelParams::init(&config_x, rng)?;
        let params_y = if tie_weights {
            None
        } else {
            Some(SentenceModelParams::init(&config_y, rng)?)
        };
        let input = config_x.output_len()? + config_y.output_len()?;
        let head = MlpHead::init(input, hidden, config_x.activation, dropout, rng)?;
        let model = Self {
            config_x,
            config_y,
            params_x,
            params_y,
            head,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn tie_weights(&self) -> bool {
        self.params_y.is_none()
    }

    pub fn encoder_y(&self) -> &SentenceModelParams<T> {
        self.params_y.as_ref().unwrap_or(&self.params_x)
    }

    pub fn validate(&self) -> Result<()> {
        self.params_x.check_shapes(&self.config_x)?;
        self.encoder_y().check_shapes(&self.config_y)?;
        self.head.check()?;
        let want = self.config_x.output_len()? + self.config_y.output_len()?;
        if self.head.input_len() != want {
            return Err(Error::Dimension(format!(
                "head takes {} inputs but the encoders produce {want}",
                self.head.input_len()
            )));
        }
        Ok(())
    }

    pub fn activation(&self) -> Activation {
        self.config_x.activation
    }
}

impl<T: Scalar> MatchModel<T> for Arc1Model<T> {
    type Trace = Arc1Trace<T>;

    fn forward(
        &self,
        sx: &EncodedSentence<T>,
        sy: &EncodedSentence<T>,
        dropout: Option<&mut Rng>,
    ) -> Result<(T, Arc1Trace<T>)> {
        check_sentence(sx, self.config_x.l_max, self.config_x.dim, "x")?;
        check_sentence(sy, self.config_y.l_max, self.config_y.dim, "y")?;
        let (vx, trace_x) = encode(sx, &self.params_x, &self.config_x)?;
        let (vy, trace_y) = encode(sy, self.encoder_y(), &self.config_y)?;
        let mut joint = Vec::with_capacity(vx.len() + vy.len());
        joint.extend_from_slice(vx.data());
        joint.extend_from_slice(vy.data());
        let (score, head) = self.head.forward(&joint, dropout)?;
        Ok((
            score,
            Arc1Trace {
                vx,
                vy,
                trace_x,
                trace_y,
                head,
            },
        ))
    }

    fn backward(&self, trace: &Arc1Trace<T>, upstream: T) -> Gradients<T> {
        let (head_grads, d_joint) = self.head.backward(&trace.head, upstream);
        let (d_vx, d_vy) = d_joint.split_at(trace.vx.len());
        let (mut gx, dx) = encode_backward(&trace.trace_x, &self.params_x, &self.config_x, d_vx);
        let (gy, dy) = encode_backward(&trace.trace_y, self.encoder_y(), &self.config_y, d_vy);
        let mut params: Vec<Tensor<T>> = Vec::new();
        if self.tie_weights() {
            for (a, b) in gx.tensors_mut().into_iter().zip(gy.tensors()) {
                a.axpy(T::one(), b).expect("tied encoders share shapes");
            }
            params.extend(gx.tensors().into_iter().cloned());
        } else {
            params.extend(gx.tensors().into_iter().cloned());
            params.extend(gy.tensors().into_iter().cloned());
        }
        params.extend(dense_tensors(head_grads));
        Gradients { params, dx, dy }
    }

    fn params(&self) -> Vec<&Tensor<T>> {
        let mut v = self.params_x.tensors();
        if let Some(py) = &self.params_y {
            v.extend(py.tensors());
        }
        v.extend(self.head.tensors());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut v = self.params_x.tensors_mut();
        if let Some(py) = &mut self.params_y {
            v.extend(py.tensors_mut());
        }
        v.extend(self.head.tensors_mut());
        v
    }

    fn head_mut(&mut self) -> &mut MlpHead<T> {
        &mut self.head
    }
}
