//! Every model kind behind one enum, plus a flat description of its shape
//! that round-trips through `key=value` text.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::arc1::{Arc1Model, Arc1Trace};
use crate::arc2::{Arc2Config, Arc2Model, Arc2Trace};
use crate::baselines::{senna_mlp_model, SenMlpModel, SenMlpTrace, WordEmbedModel, WordEmbedTrace};
use crate::conv::{ConvLayerSpec, SentenceModelConfig};
use crate::embedding::EncodedSentence;
use crate::error::{Error, Result};
use crate::mlp::MlpHead;
use crate::model::{Gradients, MatchModel};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{Activation, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Arc1,
    Arc2,
    WordEmbed,
    SenMlp,
    Senna,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Arc1,
        ModelKind::Arc2,
        ModelKind::WordEmbed,
        ModelKind::SenMlp,
        ModelKind::Senna,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Arc1 => "arc1",
            ModelKind::Arc2 => "arc2",
            ModelKind::WordEmbed => "wordembed",
            ModelKind::SenMlp => "senmlp",
            ModelKind::Senna => "senna",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown model kind {s:?} (expected arc1, arc2, wordembed, senmlp, senna)"
                ))
            })
    }
}

/// Shape-determining configuration of any model kind.
///
/// `layers` holds the encoder convolutions for `arc1`/`senna`, and for
/// `arc2` the pair convolution followed by the 2D convolutions. Baselines
/// without convolutions leave it empty.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub dim: usize,
    pub l_max_x: usize,
    pub l_max_y: usize,
    pub layers: Vec<ConvLayerSpec>,
    pub activation: Activation,
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub tie_weights: bool,
}

impl ModelSpec {
    /// Default layer stacks: ARC-I with two convolutions, ARC-II with three,
    /// SENNA-style with one, all using `window`-wide filters.
    pub fn standard(
        kind: ModelKind,
        dim: usize,
        l_max: usize,
        window: usize,
        features: usize,
        hidden: usize,
    ) -> Self {
        let depth = match kind {
            ModelKind::Arc1 => 2,
            ModelKind::Arc2 => 3,
            ModelKind::Senna => 1,
            ModelKind::WordEmbed | ModelKind::SenMlp => 0,
        };
        Self {
            kind,
            dim,
            l_max_x: l_max,
            l_max_y: l_max,
            layers: vec![ConvLayerSpec::new(window, features); depth],
            activation: Activation::Relu,
            hidden: vec![hidden],
            dropout: 0.0,
            tie_weights: false,
        }
    }

    fn sentence_config(&self, l_max: usize) -> SentenceModelConfig {
        SentenceModelConfig {
            dim: self.dim,
            l_max,
            layers: self.layers.clone(),
            activation: self.activation,
            global_pool: self.kind == ModelKind::Senna,
        }
    }

    pub fn arc2_config(&self) -> Result<Arc2Config> {
        if self.l_max_x != self.l_max_y {
            return Err(Error::Config(format!(
                "ARC-II needs one shared L_max, got {} and {}",
                self.l_max_x, self.l_max_y
            )));
        }
        let (first, rest) = self
            .layers
            .split_first()
            .ok_or_else(|| Error::Config("ARC-II needs a first-layer convolution".into()))?;
        Ok(Arc2Config {
            dim: self.dim,
            l_max: self.l_max_x,
            window: first.window,
            features: first.features,
            conv2d: rest.to_vec(),
            activation: self.activation,
            hidden: self.hidden.clone(),
            dropout: self.dropout,
        })
    }

    /// Layer counts `(convolution, pooling, mlp)`. Every convolution is
    /// followed by one pooling; the MLP count includes the output layer.
    pub fn layer_counts(&self) -> (usize, usize, usize) {
        (self.layers.len(), self.layers.len(), self.hidden.len() + 1)
    }

    pub fn to_kv(&self) -> BTreeMap<String, String> {
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let layers = self
            .layers
            .iter()
            .map(|l| format!("{}x{}", l.window, l.features))
            .collect::<Vec<_>>()
            .join(",");
        [
            ("kind", self.kind.name().to_string()),
            ("dim", self.dim.to_string()),
            ("l_max_x", self.l_max_x.to_string()),
            ("l_max_y", self.l_max_y.to_string()),
            ("layers", layers),
            ("activation", self.activation.name().to_string()),
            ("hidden", join(&self.hidden)),
            ("dropout", self.dropout.to_string()),
            ("tie_weights", self.tie_weights.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    pub fn from_kv(kv: &BTreeMap<String, String>) -> Result<Self> {
        let get = |k: &str| {
            kv.get(k)
                .ok_or_else(|| Error::Config(format!("missing config key {k:?}")))
        };
        let num = |k: &str| -> Result<usize> {
            get(k)?
                .parse()
                .map_err(|_| Error::Config(format!("config key {k:?} is not a count")))
        };
        Ok(Self {
            kind: get("kind")?.parse()?,
            dim: num("dim")?,
            l_max_x: num("l_max_x")?,
            l_max_y: num("l_max_y")?,
            layers: parse_layers(get("layers")?)?,
            activation: Activation::parse(get("activation")?)?,
            hidden: parse_widths(get("hidden")?)?,
            dropout: get("dropout")?
                .parse()
                .map_err(|_| Error::Config("bad dropout".into()))?,
            tie_weights: get("tie_weights")?
                .parse()
                .map_err(|_| Error::Config("bad tie_weights".into()))?,
        })
    }
}

/// Parse `"3x16,3x16"` (window x features per layer); empty means none.
pub fn parse_layers(s: &str) -> Result<Vec<ConvLayerSpec>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|p| {
            let (w, f) = p.split_once('x').ok_or_else(|| {
                Error::Config(format!("bad layer {p:?}, expected WINDOWxFEATURES"))
            })?;
            match (w.trim().parse(), f.trim().parse()) {
                (Ok(w), Ok(f)) => Ok(ConvLayerSpec::new(w, f)),
                _ => Err(Error::Config(format!(
                    "bad layer {p:?}, expected WINDOWxFEATURES"
                ))),
            }
        })
        .collect()
}

/// Parse a comma-separated width list such as `"64,32"`.
pub fn parse_widths(s: &str) -> Result<Vec<usize>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad width {p:?}")))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel<T> {
    Arc1(Arc1Model<T>),
    Arc2(Arc2Model<T>),
    WordEmbed(WordEmbedModel<T>),
    SenMlp(SenMlpModel<T>),
    Senna(Arc1Model<T>),
}

#[derive(Debug, Clone)]
pub enum AnyTrace<T> {
    Arc1(Arc1Trace<T>),
    Arc2(Arc2Trace<T>),
    WordEmbed(WordEmbedTrace<T>),
    SenMlp(SenMlpTrace<T>),
}

impl<T: Scalar> AnyModel<T> {
    pub fn build(spec: &ModelSpec, rng: &mut Rng) -> Result<Self> {
        let needs_conv = matches!(
            spec.kind,
            ModelKind::Arc1 | ModelKind::Arc2 | ModelKind::Senna
        );
        if needs_conv && spec.layers.is_empty() {
            return Err(Error::Config(format!(
                "{} needs convolution layers",
                spec.kind
            )));
        }
        Ok(match spec.kind {
            ModelKind::Arc1 => AnyModel::Arc1(Arc1Model::new(
                spec.sentence_config(spec.l_max_x),
                spec.sentence_config(spec.l_max_y),
                spec.tie_weights,
                &spec.hidden,
                spec.dropout,
                rng,
            )?),
            ModelKind::Senna => AnyModel::Senna(senna_mlp_model(
                spec.sentence_config(spec.l_max_x),
                spec.sentence_config(spec.l_max_y),
                &spec.hidden,
                spec.dropout,
                rng,
            )?),
            ModelKind::Arc2 => AnyModel::Arc2(Arc2Model::new(spec.arc2_config()?, rng)?),
            ModelKind::WordEmbed => AnyModel::WordEmbed(WordEmbedModel::new(
                spec.dim,
                spec.l_max_x,
                spec.l_max_y,
                &spec.hidden,
                spec.activation,
                spec.dropout,
                rng,
            )?),
            ModelKind::SenMlp => AnyModel::SenMlp(SenMlpModel::new(
                spec.dim,
                spec.l_max_x,
                spec.l_max_y,
                &spec.hidden,
                spec.activation,
                spec.dropout,
                rng,
            )?),
        })
    }

    /// Same model with parameters converted to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Result<AnyModel<U>> {
        let mut out = AnyModel::<U>::build(&self.spec(), &mut Rng::new(0))?;
        for (dst, src) in out.params_mut().into_iter().zip(self.params()) {
            *dst = src.cast();
        }
        Ok(out)
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            AnyModel::Arc1(_) => ModelKind::Arc1,
            AnyModel::Arc2(_) => ModelKind::Arc2,
            AnyModel::WordEmbed(_) => ModelKind::WordEmbed,
            AnyModel::SenMlp(_) => ModelKind::SenMlp,
            AnyModel::Senna(_) => ModelKind::Senna,
        }
    }

    pub fn spec(&self) -> ModelSpec {
        let head = self.head();
        let base = |kind, dim, l_max_x, l_max_y, layers, activation| ModelSpec {
            kind,
            dim,
            l_max_x,
            l_max_y,
            layers,
            activation,
            hidden: head.hidden_widths(),
            dropout: head.dropout,
            tie_weights: false,
        };
        match self {
            AnyModel::Arc1(m) | AnyModel::Senna(m) => ModelSpec {
                tie_weights: m.tie_weights(),
                ..base(
                    self.kind(),
                    m.config_x.dim,
                    m.config_x.l_max,
                    m.config_y.l_max,
                    m.config_x.layers.clone(),
                    m.activation(),
                )
            },
            AnyModel::Arc2(m) => {
                let c = &m.config;
                let mut layers = vec![ConvLayerSpec::new(c.window, c.features)];
                layers.extend(c.conv2d.iter().copied());
                base(
                    ModelKind::Arc2,
                    c.dim,
                    c.l_max,
                    c.l_max,
                    layers,
                    c.activation,
                )
            }
            AnyModel::WordEmbed(m) => base(
                ModelKind::WordEmbed,
                m.dim,
                m.l_max_x,
                m.l_max_y,
                Vec::new(),
                m.head.activation,
            ),
            AnyModel::SenMlp(m) => base(
                ModelKind::SenMlp,
                m.dim,
                m.l_max_x,
                m.l_max_y,
                Vec::new(),
                m.head.activation,
            ),
        }
    }

    pub fn head(&self) -> &MlpHead<T> {
        match self {
            AnyModel::Arc1(m) | AnyModel::Senna(m) => &m.head,
            AnyModel::Arc2(m) => &m.params.head,
            AnyModel::WordEmbed(m) => &m.head,
            AnyModel::SenMlp(m) => &m.head,
        }
    }

    /// Padded lengths used to encode `(x, y)`.
    pub fn l_max(&self) -> (usize, usize) {
        match self {
            AnyModel::Arc1(m) | AnyModel::Senna(m) => (m.config_x.l_max, m.config_y.l_max),
            AnyModel::Arc2(m) => (m.config.l_max, m.config.l_max),
            AnyModel::WordEmbed(m) => (m.l_max_x, m.l_max_y),
            AnyModel::SenMlp(m) => (m.l_max_x, m.l_max_y),
        }
    }
}

impl<T: Scalar> MatchModel<T> for AnyModel<T> {
    type Trace = AnyTrace<T>;

    fn forward(
        &self,
        sx: &EncodedSentence<T>,
        sy: &EncodedSentence<T>,
        dropout: Option<&mut Rng>,
    ) -> Result<(T, AnyTrace<T>)> {
        Ok(match self {
            AnyModel::Arc1(m) | AnyModel::Senna(m) => {
                let (s, t) = m.forward(sx, sy, dropout)?;
                (s, AnyTrace::Arc1(t))
            }
            AnyModel::Arc2(m) => {
                let (s, t) = m.forward(sx, sy, dropout)?;
                (s, AnyTrace::Arc2(t))
            }
            AnyModel::WordEmbed(m) => {
                let (s, t) = m.forward(sx, sy, dropout)?;
                (s, AnyTrace::WordEmbed(t))
            }
            AnyModel::SenMlp(m) => {
                let (s, t) = m.forward(sx, sy, dropout)?;
                (s, AnyTrace::SenMlp(t))
            }
        })
    }

    fn backward(&self, trace: &AnyTrace<T>, upstream: T) -> Gradients<T> {
        match (self, trace) {
            (AnyModel::Arc1(m) | AnyModel::Senna(m), AnyTrace::Arc1(t)) => m.backward(t, upstream),
            (AnyModel::Arc2(m), AnyTrace::Arc2(t)) => m.backward(t, upstream),
            (AnyModel::WordEmbed(m), AnyTrace::WordEmbed(t)) => m.backward(t, upstream),
            (AnyModel::SenMlp(m), AnyTrace::SenMlp(t)) => m.backward(t, upstream),
            _ => panic!("trace does not belong to a {} model", self.kind()),
        }
    }

    fn params(&self) -> Vec<&Tensor<T>> {
        match self {
            AnyModel::Arc1(m) | AnyModel::Senna(m) => m.params(),
            AnyModel::Arc2(m) => m.params(),
            AnyModel::WordEmbed(m) => m.params(),
            AnyModel::SenMlp(m) => m.params(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match self {
            AnyModel::Arc1(m) | AnyModel::Senna(m) => m.params_mut(),
            AnyModel::Arc2(m) => m.params_mut(),
            AnyModel::WordEmbed(m) => m.params_mut(),
            AnyModel::SenMlp(m) => m.params_mut(),
        }
    }

    fn head_mut(&mut self) -> &mut MlpHead<T> {
        match self {
            AnyModel::Arc1(m) | AnyModel::Senna(m) => &mut m.head,
            AnyModel::Arc2(m) => &mut m.params.head,
            AnyModel::WordEmbed(m) => &mut m.head,
            AnyModel::SenMlp(m) => &mut m.head,
        }
    }
}
