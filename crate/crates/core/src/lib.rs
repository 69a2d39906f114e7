//! Convolutional sentence matching: ARC-I and ARC-II scorers, baseline
//! models, ranking-loss training, data handling, metrics and checkpoints.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the bottom fix the common choice.

pub mod arc1;
pub mod arc2;
pub mod baselines;
pub mod checkpoint;
pub mod conv;
pub mod data;
pub mod embedding;
pub mod error;
pub mod metrics;
pub mod mlp;
pub mod model;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod training;
pub mod zoo;

pub use arc1::Arc1Model;
pub use arc2::{embed_arc1_as_arc2, Arc2Config, Arc2Model};
pub use baselines::{senna_mlp_model, SenMlpModel, WordEmbedModel};
pub use checkpoint::{
    load_checkpoint, load_checkpoint_file, save_checkpoint, save_checkpoint_file,
};
pub use conv::{ConvLayerSpec, SentenceModelConfig, SentenceModelParams};
pub use data::{
    EncodedInstance, NegativeMode, PairCorpus, RankingInstance, SynthConfig, TokenTriple,
};
pub use embedding::{
    encode_sentence, load_embeddings, tokenize, EmbeddingTable, EncodedSentence, Vocabulary,
};
pub use error::{Error, Result};
pub use metrics::{p_at_1, EvalReport};
pub use mlp::MlpHead;
pub use model::{Gradients, MatchModel};
pub use rng::Rng;
pub use scalar::Scalar;
pub use tensor::{Activation, Tensor};
pub use training::{
    gradient_check, hinge_loss, sgd_step, train, TrainConfig, TrainHistory, Triple,
};
pub use zoo::{parse_layers, parse_widths, AnyModel, ModelKind, ModelSpec};

pub type Tensor64 = Tensor<f64>;
pub type Tensor32 = Tensor<f32>;
pub type Model64 = AnyModel<f64>;
pub type Model32 = AnyModel<f32>;
pub type Sentence64 = EncodedSentence<f64>;
pub type Table64 = EmbeddingTable<f64>;
pub type Triple64 = Triple<f64>;
pub type Instance64 = EncodedInstance<f64>;
