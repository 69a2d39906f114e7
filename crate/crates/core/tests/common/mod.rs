#![allow(dead_code)]

pub mod oracle;
pub mod padding;
pub mod subsumption;

use arcmatch::{Activation, EncodedSentence, MatchModel, Rng, Tensor};

/// `[l_max × dim]` matrix whose first `length` rows are random and never all zero.
pub fn sentence(length: usize, l_max: usize, dim: usize, rng: &mut Rng) -> EncodedSentence<f64> {
    let mut x = Tensor::zeros(&[l_max, dim]);
    for i in 0..length {
        let row = x.row_mut(i);
        for v in row.iter_mut() {
            *v = rng.uniform_range(-1.0, 1.0);
        }
        row[0] += if row[0] >= 0.0 { 0.1 } else { -0.1 };
    }
    EncodedSentence {
        ids: vec![1; length],
        length,
        truncated: false,
        x,
    }
}

/// Overwrite every parameter with uniform values, biases included, so that
/// gated units are distinguishable from units that merely compute zero.
pub fn scramble<M: MatchModel<f64>>(model: &mut M, scale: f64, rng: &mut Rng) {
    for t in model.params_mut() {
        for v in t.data_mut() {
            *v = rng.uniform_range(-scale, scale);
        }
    }
}

pub fn activation(rng: &mut Rng) -> Activation {
    if rng.bernoulli(0.5) {
        Activation::Relu
    } else {
        Activation::Sigmoid
    }
}

pub fn act(a: Activation, v: f64) -> f64 {
    match a {
        Activation::Relu => v.max(0.0),
        Activation::Sigmoid => 1.0 / (1.0 + (-v).exp()),
    }
}

pub fn rows(t: &Tensor<f64>) -> Vec<Vec<f64>> {
    let cols = t.shape()[1];
    t.data().chunks(cols).map(<[f64]>::to_vec).collect()
}

/// A small encoded synthetic task: training triples and validation instances.
pub struct Task {
    pub triples: Vec<arcmatch::Triple<f64>>,
    pub val: Vec<arcmatch::EncodedInstance<f64>>,
    pub table: arcmatch::EmbeddingTable<f64>,
}

pub fn synth_task(
    seed: u64,
    n_train: usize,
    n_val: usize,
    mode: arcmatch::NegativeMode,
    l_max: usize,
    dim: usize,
) -> Task {
    use arcmatch::data::{
        encode_instances, encode_triples, gen_synthetic_corpus, make_eval_instances,
        sample_negatives,
    };
    use arcmatch::embedding::random_embeddings;
    use arcmatch::{PairCorpus, SynthConfig};

    let mut rng = Rng::new(seed);
    let mut cfg = SynthConfig::new(n_train + n_val, 70, (3, 5), 4);
    cfg.lexicon = 8;
    cfg.topical = (2, 3);
    let syn = gen_synthetic_corpus(&cfg, &mut rng).unwrap();
    let split = |a: usize, b: usize| PairCorpus {
        pairs: syn.corpus.pairs[a..b].to_vec(),
        provenance: String::new(),
    };
    let (train_c, val_c) = (split(0, n_train), split(n_train, n_train + n_val));
    let table = random_embeddings(&syn.tokens, dim, &mut rng).unwrap();
    let (tt, _) = sample_negatives(&train_c, 2, mode, Some(&table), &mut rng).unwrap();
    let (vi, _) = make_eval_instances(&val_c, 4, mode, Some(&table), &mut rng).unwrap();
    Task {
        triples: encode_triples(&tt, &table, (l_max, l_max)).unwrap(),
        val: encode_instances(&vi, &table, (l_max, l_max)).unwrap(),
        table,
    }
}
