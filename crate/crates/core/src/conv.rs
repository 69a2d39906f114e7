//! Convolutional sentence model: alternating gated 1D convolution and
//! two-unit max-pooling over a padded sentence matrix.
//!
//! A unit whose whole input segment is zero is gated off and outputs exact
//! zeros. Together with the all-zero padding rows appended after the last
//! word, this keeps padding from leaking into any layer.

use crate::embedding::EncodedSentence;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{
    affine_into, affine_transpose_acc, init_uniform, outer_acc, Activation, Tensor,
};

/// Argmax marker for a pooled unit won by the implicit zero row of an odd-length input.
pub const PAD_ARGMAX: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvLayerSpec {
    pub window: usize,
    pub features: usize,
}

impl ConvLayerSpec {
    pub fn new(window: usize, features: usize) -> Self {
        Self { window, features }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentenceModelConfig {
    pub dim: usize,
    pub l_max: usize,
    pub layers: Vec<ConvLayerSpec>,
    pub activation: Activation,
    /// Single convolution followed by a max over every location.
    pub global_pool: bool,
}

impl SentenceModelConfig {
    /// `depth` layers of `window`-wide convolutions with `features` maps each.
    pub fn uniform(dim: usize, l_max: usize, depth: usize, window: usize, features: usize) -> Self {
        Self {
            dim,
            l_max,
            layers: vec![ConvLayerSpec::new(window, features); depth],
            activation: Activation::Relu,
            global_pool: false,
        }
    }

    /// One convolution plus a max over the whole sentence per feature map.
    pub fn global(dim: usize, l_max: usize, window: usize, features: usize) -> Self {
        Self {
            dim,
            l_max,
            layers: vec![ConvLayerSpec::new(window, features)],
            activation: Activation::Relu,
            global_pool: true,
        }
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Lengths after each stage: `[L_max, conv₁, pool₁, conv₂, pool₂, …]`.
    /// In global-pool mode the last entry is 1.
    pub fn stage_lengths(&self) -> Result<Vec<usize>> {
        self.validate()?;
        let mut out = vec![self.l_max];
        let mut len = self.l_max;
        for (l, spec) in self.layers.iter().enumerate() {
            if len < spec.window {
                return Err(Error::Config(format!(
                    "conv layer {} has window {} but only {len} input locations (L_max={})",
                    l + 1,
                    spec.window,
                    self.l_max
                )));
            }
            len = len - spec.window + 1;
            out.push(len);
            len = if self.global_pool { 1 } else { len.div_ceil(2) };
            out.push(len);
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.l_max == 0 {
            return Err(Error::Config(
                "embedding dim and L_max must be positive".into(),
            ));
        }
        if self.layers.is_empty() {
            return Err(Error::Config(
                "sentence model needs at least one conv layer".into(),
            ));
        }
        if let Some(s) = self.layers.iter().find(|s| s.window < 2 || s.features == 0) {
            return Err(Error::Config(format!(
                "bad conv layer {s:?}: window must be >= 2, features >= 1"
            )));
        }
        if self.global_pool && self.layers.len() != 1 {
            return Err(Error::Config(
                "global pooling requires exactly one conv layer".into(),
            ));
        }
        Ok(())
    }

    /// Length of the sentence vector.
    pub fn output_len(&self) -> Result<usize> {
        let stages = self.stage_lengths()?;
        Ok(stages[stages.len() - 1] * self.layers[self.layers.len() - 1].features)
    }

    fn in_features(&self, layer: usize) -> usize {
        if layer == 0 {
            self.dim
        } else {
            self.layers[layer - 1].features
        }
    }
}

/// Weights `[F_out × (k·F_in)]` and biases `[F_out]` of one convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<T> {
    pub w: Tensor<T>,
    pub b: Tensor<T>,
}

impl<T: Scalar> ConvParams<T> {
    pub fn init(f_out: usize, fan_in: usize, rng: &mut Rng) -> Self {
        Self {
            w: init_uniform(&[f_out, fan_in], fan_in, f_out, rng),
            b: Tensor::zeros(&[f_out]),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            w: Tensor::zeros(self.w.shape()),
            b: Tensor::zeros(self.b.shape()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentenceModelParams<T> {
    pub layers: Vec<ConvParams<T>>,
}

impl<T: Scalar> SentenceModelParams<T> {
    pub fn init(config: &SentenceModelConfig, rng: &mut Rng) -> Result<Self> {
        config.stage_lengths()?;
        let layers = (0..config.depth())
            .map(|l| {
                let spec = config.layers[l];
                ConvParams::init(spec.features, spec.window * config.in_features(l), rng)
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(ConvParams::zeros_like).collect(),
        }
    }

    pub fn check_shapes(&self, config: &SentenceModelConfig) -> Result<()> {
        if self.layers.len() != config.depth() {
            return Err(Error::Dimension(format!(
                "params have {} conv layers, config has {}",
                self.layers.len(),
                config.depth()
            )));
        }
        for (l, p) in self.layers.iter().enumerate() {
            let spec = config.layers[l];
            let want = [spec.features, spec.window * config.in_features(l)];
            if p.w.shape() != want || p.b.shape() != [spec.features] {
                return Err(Error::Dimension(format!(
                    "conv layer {}: W{:?} b{:?}, config wants W{want:?} b[{}]",
                    l + 1,
                    p.w.shape(),
                    p.b.shape(),
                    spec.features
                )));
            }
        }
        Ok(())
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

/// Everything one convolution + pooling round kept for the backward pass.
#[derive(Debug, Clone)]
pub struct LayerRecord<T> {
    /// Input to the convolution, `[L_in × F_in]`; segment `i` is rows `i..i+k`.
    pub input: Tensor<T>,
    pub gates: Vec<bool>,
    /// Convolution output `[L_conv × F_out]`.
    pub conv: Tensor<T>,
    /// Pooled output.
    pub pooled: Tensor<T>,
    /// Per pooled `(i, f)`, the conv row that won, or [`PAD_ARGMAX`].
    pub argmax: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct LayerTrace<T> {
    pub layers: Vec<LayerRecord<T>>,
}

fn all_zero<T: Scalar>(v: &[T]) -> bool {
    v.iter().all(|x| x.is_zero())
}

/// Gated 1D convolution: output row `i` is `g(ẑ_i)·σ(W ẑ_i + b)` where `ẑ_i`
/// concatenates input rows `i..i+k`.
pub fn conv1d_gated<T: Scalar>(
    z_prev: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    k: usize,
    activation: Activation,
) -> Result<(Tensor<T>, Vec<bool>)> {
    if z_prev.rank() != 2 || w.rank() != 2 || b.rank() != 1 {
        return Err(Error::Dimension(format!(
            "conv1d expects z[L×F], W[F'×kF], b[F'], got {:?} {:?} {:?}",
            z_prev.shape(),
            w.shape(),
            b.shape()
        )));
    }
    let (l_in, f_in) = (z_prev.shape()[0], z_prev.shape()[1]);
    let f_out = w.shape()[0];
    if l_in < k || k == 0 {
        return Err(Error::Dimension(format!(
            "conv1d window {k} exceeds input length {l_in}"
        )));
    }
    if w.shape()[1] != k * f_in || b.len() != f_out {
        return Err(Error::Dimension(format!(
            "conv1d W{:?} b{:?} incompatible with window {k} over {f_in} features",
            w.shape(),
            b.shape()
        )));
    }
    let l_out = l_in - k + 1;
    let seg = k * f_in;
    let mut out = Tensor::zeros(&[l_out, f_out]);
    let mut gates = Vec::with_capacity(l_out);
    let src = z_prev.data();
    for i in 0..l_out {
        let segment = &src[i * f_in..i * f_in + seg];
        let on = !all_zero(segment);
        gates.push(on);
        if on {
            let row = out.row_mut(i);
            affine_into(w.data(), seg, segment, b.data(), row);
            row.iter_mut().for_each(|v| *v = activation.apply(*v));
        }
    }
    Ok((out, gates))
}

/// Max over disjoint pairs of rows, per feature. Odd lengths get one implicit
/// zero row. Ties go to the lower index.
pub fn maxpool1d<T: Scalar>(z: &Tensor<T>) -> (Tensor<T>, Vec<usize>) {
    let (l, f) = (z.shape()[0], z.shape()[1]);
    let l_out = l.div_ceil(2);
    let mut out = Tensor::zeros(&[l_out, f]);
    let mut argmax = vec![PAD_ARGMAX; l_out * f];
    for i in 0..l_out {
        for c in 0..f {
            let a = z.at2(2 * i, c);
            let (v, idx) = if 2 * i + 1 < l {
                let b = z.at2(2 * i + 1, c);
                if b > a {
                    (b, 2 * i + 1)
                } else {
                    (a, 2 * i)
                }
            } else if T::zero() > a {
                (T::zero(), PAD_ARGMAX)
            } else {
                (a, 2 * i)
            };
            out.data_mut()[i * f + c] = v;
            argmax[i * f + c] = idx;
        }
    }
    (out, argmax)
}

/// Max over every location per feature; ties to the lower index.
fn global_maxpool<T: Scalar>(z: &Tensor<T>) -> (Tensor<T>, Vec<usize>) {
    let (l, f) = (z.shape()[0], z.shape()[1]);
    let mut out = Tensor::zeros(&[1, f]);
    let mut argmax = vec![0; f];
    for c in 0..f {
        let mut best = 0;
        for i in 1..l {
            if z.at2(i, c) > z.at2(best, c) {
                best = i;
            }
        }
        out.data_mut()[c] = z.at2(best, c);
        argmax[c] = best;
    }
    (out, argmax)
}

/// Sentence vector (final layer flattened row-major) and the trace for backprop.
pub fn encode<T: Scalar>(
    sent: &EncodedSentence<T>,
    params: &SentenceModelParams<T>,
    config: &SentenceModelConfig,
) -> Result<(Tensor<T>, LayerTrace<T>)> {
    encode_matrix(&sent.x, params, config)
}

pub fn encode_matrix<T: Scalar>(
    x: &Tensor<T>,
    params: &SentenceModelParams<T>,
    config: &SentenceModelConfig,
) -> Result<(Tensor<T>, LayerTrace<T>)> {
    if x.shape() != [config.l_max, config.dim] {
        return Err(Error::Dimension(format!(
            "sentence matrix {:?} does not match config [L_max={}, D={}]",
            x.shape(),
            config.l_max,
            config.dim
        )));
    }
    config.stage_lengths()?;
    let mut layers = Vec::with_capacity(config.depth());
    let mut current = x.clone();
    for (l, p) in params.layers.iter().enumerate() {
        let (conv, gates) = conv1d_gated(
            &current,
            &p.w,
            &p.b,
            config.layers[l].window,
            config.activation,
        )?;
        let (pooled, argmax) = if config.global_pool {
            global_maxpool(&conv)
        } else {
            maxpool1d(&conv)
        };
        let next = pooled.clone();
        layers.push(LayerRecord {
            input: current,
            gates,
            conv,
            pooled,
            argmax,
        });
        current = next;
    }
    let n = current.len();
    let vector = Tensor::from_vec(&[n], current.into_data())?;
    Ok((vector, LayerTrace { layers }))
}

/// Gradients of a scalar objective w.r.t. every `W`, `b` and the input matrix,
/// given its gradient `upstream` w.r.t. the sentence vector.
///
/// Gate bits are constants: gated-off units pass no gradient.
pub fn encode_backward<T: Scalar>(
    trace: &LayerTrace<T>,
    params: &SentenceModelParams<T>,
    config: &SentenceModelConfig,
    upstream: &[T],
) -> (SentenceModelParams<T>, Tensor<T>) {
    let mut grads = params.zeros_like();
    let mut d_out: Vec<T> = upstream.to_vec();
    for l in (0..trace.layers.len()).rev() {
        let rec = &trace.layers[l];
        let p = &params.layers[l];
        let k = config.layers[l].window;
        let f_out = rec.conv.shape()[1];
        let (l_in, f_in) = (rec.input.shape()[0], rec.input.shape()[1]);
        let seg = k * f_in;

        let mut d_conv = vec![T::zero(); rec.conv.len()];
        for (slot, &src) in rec.argmax.iter().enumerate() {
            if src != PAD_ARGMAX {
                d_conv[src * f_out + slot % f_out] += d_out[slot];
            }
        }

        let mut d_in = vec![T::zero(); l_in * f_in];
        let mut d_pre = vec![T::zero(); f_out];
        let g = &mut grads.layers[l];
        for (i, &on) in rec.gates.iter().enumerate() {
            if !on {
                continue;
            }
            let out_row = rec.conv.row(i);
            let mut any = false;
            for c in 0..f_out {
                d_pre[c] =
                    d_conv[i * f_out + c] * config.activation.derivative_from_output(out_row[c]);
                any |= !d_pre[c].is_zero();
            }
            if !any {
                continue;
            }
            let segment = &rec.input.data()[i * f_in..i * f_in + seg];
            outer_acc(g.w.data_mut(), seg, &d_pre, segment);
            for (bv, &d) in g.b.data_mut().iter_mut().zip(&d_pre) {
                *bv += d;
            }
            affine_transpose_acc(p.w.data(), seg, &d_pre, &mut d_in[i * f_in..i * f_in + seg]);
        }
        d_out = d_in;
    }
    let dx = Tensor::from_vec(&[config.l_max, config.dim], d_out)
        .expect("input gradient matches sentence shape");
    (grads, dx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(&[v.len(), 1], v.to_vec()).unwrap()
    }

    #[test]
    fn conv_sum_and_difference_filters() {
        let w = Tensor::from_rows(&[vec![1.0, 1.0]]).unwrap();
        let b = Tensor::vector(vec![0.0]);
        let (out, gates) =
            conv1d_gated(&col(&[1.0, 2.0, 3.0]), &w, &b, 2, Activation::Relu).unwrap();
        assert_eq!(out.data(), &[3.0, 5.0]);
        assert_eq!(gates, vec![true, true]);
        let w = Tensor::from_rows(&[vec![1.0, -1.0]]).unwrap();
        let (out, _) = conv1d_gated(&col(&[1.0, 2.0, 3.0]), &w, &b, 2, Activation::Relu).unwrap();
        assert_eq!(out.data(), &[0.0, 0.0]);
    }

    #[test]
    fn all_zero_segment_is_gated_regardless_of_bias() {
        let w = Tensor::from_rows(&[vec![1.0, 1.0]]).unwrap();
        let b = Tensor::vector(vec![5.0]);
        let (out, gates) =
            conv1d_gated(&col(&[1.0, 0.0, 0.0]), &w, &b, 2, Activation::Sigmoid).unwrap();
        assert_eq!(gates, vec![true, false]);
        assert_eq!(out.data()[1], 0.0);
    }

    #[test]
    fn conv_rejects_short_input() {
        let w = Tensor::from_rows(&[vec![1.0, 1.0, 1.0]]).unwrap();
        let b = Tensor::vector(vec![0.0]);
        assert!(matches!(
            conv1d_gated(&col(&[1.0, 2.0]), &w, &b, 3, Activation::Relu),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn pooling_even_and_odd() {
        let (p, a) = maxpool1d(&col(&[1.0, 4.0, 2.0, 3.0]));
        assert_eq!(p.data(), &[4.0, 3.0]);
        assert_eq!(a, vec![1, 3]);
        let (p, _) = maxpool1d(&col(&[1.0, 4.0, 2.0]));
        assert_eq!(p.data(), &[4.0, 2.0]);
        let (p, _) = maxpool1d(&Tensor::<f64>::zeros(&[14, 2]));
        assert_eq!(p.shape(), &[7, 2]);
    }

    #[test]
    fn stage_lengths_follow_shape_law() {
        let mut cfg = SentenceModelConfig::uniform(4, 16, 2, 3, 5);
        cfg.layers[1].window = 2;
        assert_eq!(cfg.stage_lengths().unwrap(), vec![16, 14, 7, 6, 3]);
        assert_eq!(cfg.output_len().unwrap(), 15);
    }

    #[test]
    fn config_errors() {
        assert!(SentenceModelConfig::uniform(4, 4, 3, 3, 2)
            .stage_lengths()
            .is_err());
        let mut c = SentenceModelConfig::global(4, 10, 3, 2);
        c.layers.push(ConvLayerSpec::new(2, 2));
        assert!(c.validate().is_err());
        assert!(SentenceModelConfig::uniform(4, 10, 1, 1, 2)
            .validate()
            .is_err());
    }

    #[test]
    fn global_pool_output_len_independent_of_l_max() {
        for l_max in [5, 9, 20] {
            assert_eq!(
                SentenceModelConfig::global(4, l_max, 3, 3)
                    .output_len()
                    .unwrap(),
                3
            );
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = Rng::new(2);
        let cfg = SentenceModelConfig::uniform(3, 10, 2, 3, 4);
        let params = SentenceModelParams::<f64>::init(&cfg, &mut rng).unwrap();
        let x: Tensor<f64> = init_uniform(&[10, 3], 1, 1, &mut rng);
        let (v, trace) = encode_matrix(&x, &params, &cfg).unwrap();
        let (g, dx) = encode_backward(&trace, &params, &cfg, &vec![0.0; v.len()]);
        assert!(g.tensors().iter().all(|t| t.is_all_zero()));
        assert!(dx.is_all_zero());
    }
}
