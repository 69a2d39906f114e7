//! Interaction-space matcher.
//!
//! Layer 1 convolves every pair of sentence segments `(x_{i:i+k}, y_{j:j+k})`
//! into an `n × n × F₁` grid; 2×2 max-pooling and gated 2D convolutions
//! follow, and the last pooled grid is flattened (i, j, f row-major) into an
//! MLP head.

use crate::arc1::Arc1Model;
use crate::conv::{ConvLayerSpec, ConvParams, PAD_ARGMAX};
use crate::embedding::EncodedSentence;
use crate::error::{Error, Result};
use crate::mlp::{dense_tensors, HeadTrace, MlpHead};
use crate::model::{check_sentence, Gradients, MatchModel};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{
    affine_into, affine_transpose_acc, dot, init_uniform, outer_acc, Activation, Tensor,
};

#[derive(Debug, Clone, PartialEq)]
pub struct Arc2Config {
    pub dim: usize,
    /// Shared by both sentences.
    pub l_max: usize,
    /// First-layer window `k₁` on each sentence.
    pub window: usize,
    /// First-layer feature maps `F₁`.
    pub features: usize,
    /// Square 2D convolutions after the first pooling (one or two).
    pub conv2d: Vec<ConvLayerSpec>,
    pub activation: Activation,
    pub hidden: Vec<usize>,
    pub dropout: f64,
}

impl Arc2Config {
    /// Three convolutions, three poolings and a one-hidden-layer MLP.
    pub fn standard(
        dim: usize,
        l_max: usize,
        window: usize,
        features: usize,
        hidden: usize,
    ) -> Self {
        Self {
            dim,
            l_max,
            window,
            features,
            conv2d: vec![ConvLayerSpec::new(window, features); 2],
            activation: Activation::Relu,
            hidden: vec![hidden],
            dropout: 0.0,
        }
    }

    /// Number of sliding windows per sentence.
    pub fn n(&self) -> usize {
        (self.l_max + 1).saturating_sub(self.window)
    }

    /// Square extents after each stage: `[n, pool, conv, pool, (conv, pool)]`.
    pub fn stage_extents(&self) -> Result<Vec<usize>> {
        if self.dim == 0 || self.features == 0 || self.window == 0 {
            return Err(Error::Config(
                "ARC-II dim, window and features must be positive".into(),
            ));
        }
        if self.conv2d.is_empty() || self.conv2d.len() > 2 {
            return Err(Error::Config(format!(
                "ARC-II supports one or two 2D conv layers, got {}",
                self.conv2d.len()
            )));
        }
        if self.l_max < self.window || self.n() < 2 {
            return Err(Error::Config(format!(
                "L_max={} with window {} leaves n={} < 2 segment positions",
                self.l_max,
                self.window,
                self.n()
            )));
        }
        let mut ext = self.n();
        let mut out = vec![ext];
        ext = ext.div_ceil(2);
        out.push(ext);
        for (l, spec) in self.conv2d.iter().enumerate() {
            if spec.window == 0 || spec.features == 0 {
                return Err(Error::Config(format!("bad 2D conv layer {spec:?}")));
            }
            if ext < spec.window {
                return Err(Error::Config(format!(
                    "2D conv layer {} has window {} but the grid is only {ext}×{ext}",
                    l + 1,
                    spec.window
                )));
            }
            ext = ext - spec.window + 1;
            out.push(ext);
            ext = ext.div_ceil(2);
            out.push(ext);
        }
        Ok(out)
    }

    pub fn flat_len(&self) -> Result<usize> {
        let ext = *self.stage_extents()?.last().expect("nonempty");
        Ok(ext * ext * self.conv2d.last().expect("validated").features)
    }

    fn in_features(&self, l: usize) -> usize {
        if l == 0 {
            self.features
        } else {
            self.conv2d[l - 1].features
        }
    }

    /// Word range `[lo, hi]` of `x` (equally of `y`, by symmetry) that feeds
    /// each row index at every stage, aligned with [`Self::stage_extents`].
    pub fn receptive_fields(&self) -> Result<Vec<Vec<(usize, usize)>>> {
        let extents = self.stage_extents()?;
        let mut stages: Vec<Vec<(usize, usize)>> = Vec::new();
        stages.push((0..extents[0]).map(|i| (i, i + self.window - 1)).collect());
        for (s, &ext) in extents.iter().enumerate().skip(1) {
            let prev = &stages[s - 1];
            let fields = if s % 2 == 1 {
                (0..ext)
                    .map(|i| (prev[2 * i].0, prev[(2 * i + 1).min(prev.len() - 1)].1))
                    .collect()
            } else {
                let k = self.conv2d[s / 2 - 1].window;
                (0..ext).map(|i| (prev[i].0, prev[i + k - 1].1)).collect()
            };
            stages.push(fields);
        }
        Ok(stages)
    }
}

/// `values` is `[rows × cols × F]`; `gates` is per cell (row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionTensor<T> {
    pub values: Tensor<T>,
    pub gates: Vec<bool>,
}

impl<T: Scalar> InteractionTensor<T> {
    pub fn rows(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn cols(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn features(&self) -> usize {
        self.values.shape()[2]
    }

    pub fn cell(&self, i: usize, j: usize) -> &[T] {
        let f = self.features();
        let start = (i * self.cols() + j) * f;
        &self.values.data()[start..start + f]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arc2Params<T> {
    /// `[F₁ × 2·k₁·D]`: the first `k₁·D` columns act on the x-segment.
    pub w1: Tensor<T>,
    pub b1: Tensor<T>,
    pub conv2d: Vec<ConvParams<T>>,
    pub head: MlpHead<T>,
}

impl<T: Scalar> Arc2Params<T> {
    pub fn init(config: &Arc2Config, rng: &mut Rng) -> Result<Self> {
        let flat = config.flat_len()?;
        let seg = 2 * config.window * config.dim;
        let w1 = init_uniform(&[config.features, seg], seg, config.features, rng);
        let b1 = Tensor::zeros(&[config.features]);
        let conv2d = config
            .conv2d
            .iter()
            .enumerate()
            .map(|(l, s)| {
                ConvParams::init(s.features, s.window * s.window * config.in_features(l), rng)
            })
            .collect();
        let head = MlpHead::init(flat, &config.hidden, config.activation, config.dropout, rng)?;
        Ok(Self {
            w1,
            b1,
            conv2d,
            head,
        })
    }

    pub fn check_shapes(&self, config: &Arc2Config) -> Result<()> {
        let seg = 2 * config.window * config.dim;
        if self.w1.shape() != [config.features, seg] || self.b1.shape() != [config.features] {
            return Err(Error::Dimension(format!(
                "first layer W{:?} b{:?}, config wants W[{}, {seg}]",
                self.w1.shape(),
                self.b1.shape(),
                config.features
            )));
        }
        if self.conv2d.len() != config.conv2d.len() {
            return Err(Error::Dimension(
                "number of 2D conv layers differs from config".into(),
            ));
        }
        for (l, (p, s)) in self.conv2d.iter().zip(&config.conv2d).enumerate() {
            let want = [s.features, s.window * s.window * config.in_features(l)];
            if p.w.shape() != want || p.b.shape() != [s.features] {
                return Err(Error::Dimension(format!(
                    "2D conv layer {}: W{:?}, config wants W{want:?}",
                    l + 1,
                    p.w.shape()
                )));
            }
        }
        self.head.check()?;
        if self.head.input_len() != config.flat_len()? {
            return Err(Error::Dimension(format!(
                "head takes {} inputs, grid flattens to {}",
                self.head.input_len(),
                config.flat_len()?
            )));
        }
        Ok(())
    }
}

fn all_zero<T: Scalar>(v: &[T]) -> bool {
    v.iter().all(|x| x.is_zero())
}

fn seg_check<T: Scalar>(
    s: &EncodedSentence<T>,
    w: &Tensor<T>,
    k1: usize,
) -> Result<(usize, usize)> {
    let (l, d) = (s.x.shape()[0], s.x.shape()[1]);
    if l < k1 || w.rank() != 2 || w.shape()[1] != 2 * k1 * d {
        return Err(Error::Dimension(format!(
            "pair convolution W{:?} with window {k1} does not fit sentence {:?}",
            w.shape(),
            s.x.shape()
        )));
    }
    Ok((l - k1 + 1, d))
}

/// First layer: gated convolution over every `(x-segment, y-segment)` pair.
///
/// A cell is gated off only if the full concatenated pair segment is zero,
/// i.e. both segments are entirely padding.
pub fn interaction_conv1d<T: Scalar>(
    sx: &EncodedSentence<T>,
    sy: &EncodedSentence<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    k1: usize,
    activation: Activation,
) -> Result<InteractionTensor<T>> {
    if sx.x.shape() != sy.x.shape() {
        return Err(Error::Dimension(format!(
            "ARC-II sentences must share [L_max, D]: {:?} vs {:?}",
            sx.x.shape(),
            sy.x.shape()
        )));
    }
    let (n, d) = seg_check(sx, w, k1)?;
    let f = w.shape()[0];
    if b.len() != f {
        return Err(Error::Dimension(format!(
            "bias {:?} vs {f} filters",
            b.shape()
        )));
    }
    let seg = k1 * d;
    let row_len = 2 * seg;
    // The filter splits into an x-block and a y-block, so the pair response is
    // a sum of per-segment projections.
    let project = |s: &EncodedSentence<T>, offset: usize| -> (Vec<T>, Vec<bool>) {
        let mut proj = vec![T::zero(); n * f];
        let mut zero = vec![false; n];
        for i in 0..n {
            let segment = &s.x.data()[i * d..i * d + seg];
            zero[i] = all_zero(segment);
            for c in 0..f {
                proj[i * f + c] = dot(
                    &w.data()[c * row_len + offset..c * row_len + offset + seg],
                    segment,
                );
            }
        }
        (proj, zero)
    };
    let (px, zx) = project(sx, 0);
    let (py, zy) = project(sy, seg);
    let mut values = Tensor::zeros(&[n, n, f]);
    let mut gates = vec![false; n * n];
    let out = values.data_mut();
    for i in 0..n {
        for j in 0..n {
            let on = !(zx[i] && zy[j]);
            gates[i * n + j] = on;
            if on {
                let cell = &mut out[(i * n + j) * f..(i * n + j + 1) * f];
                for c in 0..f {
                    cell[c] = activation.apply(px[i * f + c] + py[j * f + c] + b.data()[c]);
                }
            }
        }
    }
    Ok(InteractionTensor { values, gates })
}

/// Max over disjoint 2×2 blocks per channel; odd extents get an implicit zero
/// row/column. Argmax is the source cell index `r·cols + c` (row-major-first
/// on ties) or [`PAD_ARGMAX`].
pub fn maxpool2d<T: Scalar>(z: &InteractionTensor<T>) -> (InteractionTensor<T>, Vec<usize>) {
    let (h, w, f) = (z.rows(), z.cols(), z.features());
    let (ho, wo) = (h.div_ceil(2), w.div_ceil(2));
    let mut values = Tensor::zeros(&[ho, wo, f]);
    let mut gates = vec![false; ho * wo];
    let mut argmax = vec![PAD_ARGMAX; ho * wo * f];
    let src = z.values.data();
    for i in 0..ho {
        for j in 0..wo {
            let cells = [
                (2 * i, 2 * j),
                (2 * i, 2 * j + 1),
                (2 * i + 1, 2 * j),
                (2 * i + 1, 2 * j + 1),
            ];
            gates[i * wo + j] = cells
                .iter()
                .any(|&(r, c)| r < h && c < w && z.gates[r * w + c]);
            for ch in 0..f {
                let mut best: Option<(T, usize)> = None;
                let mut saw_pad = false;
                for &(r, c) in &cells {
                    if r < h && c < w {
                        let v = src[(r * w + c) * f + ch];
                        if best.is_none_or(|(bv, _)| v > bv) {
                            best = Some((v, r * w + c));
                        }
                    } else {
                        saw_pad = true;
                    }
                }
                let (mut v, mut idx) = best.expect("every block has its top-left cell");
                if saw_pad && T::zero() > v {
                    v = T::zero();
                    idx = PAD_ARGMAX;
                }
                values.data_mut()[(i * wo + j) * f + ch] = v;
                argmax[(i * wo + j) * f + ch] = idx;
            }
        }
    }
    (InteractionTensor { values, gates }, argmax)
}

fn gather_patch<T: Scalar>(
    z: &InteractionTensor<T>,
    i: usize,
    j: usize,
    k: usize,
    buf: &mut Vec<T>,
) {
    let (w, f) = (z.cols(), z.features());
    buf.clear();
    for di in 0..k {
        let start = ((i + di) * w + j) * f;
        buf.extend_from_slice(&z.values.data()[start..start + k * f]);
    }
}

/// Gated 2D convolution over `k × k` windows; the receptive field is
/// concatenated row-major (row, column, channel).
pub fn conv2d_gated<T: Scalar>(
    z: &InteractionTensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    k: usize,
    activation: Activation,
) -> Result<InteractionTensor<T>> {
    let (h, wd, f_in) = (z.rows(), z.cols(), z.features());
    if k == 0 || h < k || wd < k {
        return Err(Error::Dimension(format!(
            "2D window {k} exceeds grid {h}×{wd}"
        )));
    }
    let patch = k * k * f_in;
    if w.rank() != 2 || w.shape()[1] != patch || b.len() != w.shape()[0] {
        return Err(Error::Dimension(format!(
            "2D conv W{:?} b{:?} incompatible with {k}×{k}×{f_in} fields",
            w.shape(),
            b.shape()
        )));
    }
    let f_out = w.shape()[0];
    let (ho, wo) = (h - k + 1, wd - k + 1);
    let mut values = Tensor::zeros(&[ho, wo, f_out]);
    let mut gates = vec![false; ho * wo];
    let mut buf = Vec::with_capacity(patch);
    for i in 0..ho {
        for j in 0..wo {
            gather_patch(z, i, j, k, &mut buf);
            let on = !all_zero(&buf);
            gates[i * wo + j] = on;
            if on {
                let cell = &mut values.data_mut()[(i * wo + j) * f_out..(i * wo + j + 1) * f_out];
                affine_into(w.data(), patch, &buf, b.data(), cell);
                cell.iter_mut().for_each(|v| *v = activation.apply(*v));
            }
        }
    }
    Ok(InteractionTensor { values, gates })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arc2Model<T> {
    pub config: Arc2Config,
    pub params: Arc2Params<T>,
}

#[derive(Debug, Clone)]
pub struct Arc2Trace<T> {
    x: Tensor<T>,
    y: Tensor<T>,
    /// Convolution outputs: first-layer grid, then each 2D layer.
    pub convs: Vec<InteractionTensor<T>>,
    /// Pooled grids with their argmax routing, one per convolution.
    pub pools: Vec<(InteractionTensor<T>, Vec<usize>)>,
    head: HeadTrace<T>,
}

impl<T: Scalar> Arc2Model<T> {
    pub fn new(config: Arc2Config, rng: &mut Rng) -> Result<Self> {
        let params = Arc2Params::init(&config, rng)?;
        Ok(Self { config, params })
    }

    pub fn from_parts(config: Arc2Config, params: Arc2Params<T>) -> Result<Self> {
        params.check_shapes(&config)?;
        Ok(Self { config, params })
    }
}

fn unpool<T: Scalar>(d_pooled: &[T], argmax: &[usize], f: usize, src_cells: usize) -> Vec<T> {
    let mut d = vec![T::zero(); src_cells * f];
    for (slot, &src) in argmax.iter().enumerate() {
        if src != PAD_ARGMAX {
            d[src * f + slot % f] += d_pooled[slot];
        }
    }
    d
}

impl<T: Scalar> MatchModel<T> for Arc2Model<T> {
    type Trace = Arc2Trace<T>;

    fn forward(
        &self,
        sx: &EncodedSentence<T>,
        sy: &EncodedSentence<T>,
        dropout: Option<&mut Rng>,
    ) -> Result<(T, Arc2Trace<T>)> {
        let c = &self.config;
        check_sentence(sx, c.l_max, c.dim, "x")?;
        check_sentence(sy, c.l_max, c.dim, "y")?;
        let first = interaction_conv1d(
            sx,
            sy,
            &self.params.w1,
            &self.params.b1,
            c.window,
            c.activation,
        )?;
        let mut convs = vec![first];
        let mut pools = vec![maxpool2d(&convs[0])];
        for (l, p) in self.params.conv2d.iter().enumerate() {
            let z = conv2d_gated(&pools[l].0, &p.w, &p.b, c.conv2d[l].window, c.activation)?;
            pools.push(maxpool2d(&z));
            convs.push(z);
        }
        let flat = pools.last().expect("nonempty").0.values.data();
        let (score, head) = self.params.head.forward(flat, dropout)?;
        Ok((
            score,
            Arc2Trace {
                x: sx.x.clone(),
                y: sy.x.clone(),
                convs,
                pools,
                head,
            },
        ))
    }

    fn backward(&self, trace: &Arc2Trace<T>, upstream: T) -> Gradients<T> {
        let c = &self.config;
        let act = c.activation;
        let (head_grads, mut d_pooled) = self.params.head.backward(&trace.head, upstream);

        let mut conv_grads: Vec<ConvParams<T>> = self
            .params
            .conv2d
            .iter()
            .map(ConvParams::zeros_like)
            .collect();
        for l in (0..self.params.conv2d.len()).rev() {
            let out = &trace.convs[l + 1];
            let input = &trace.pools[l].0;
            let (ho, wo, f_out) = (out.rows(), out.cols(), out.features());
            let d_conv = unpool(&d_pooled, &trace.pools[l + 1].1, f_out, ho * wo);
            let k = c.conv2d[l].window;
            let (w_in, f_in) = (input.cols(), input.features());
            let patch = k * k * f_in;
            let w = &self.params.conv2d[l].w;
            let mut d_in = vec![T::zero(); input.values.len()];
            let mut d_pre = vec![T::zero(); f_out];
            let mut buf = Vec::with_capacity(patch);
            let mut d_patch = vec![T::zero(); patch];
            for i in 0..ho {
                for j in 0..wo {
                    if !out.gates[i * wo + j] {
                        continue;
                    }
                    let cell = out.cell(i, j);
                    let mut any = false;
                    for ch in 0..f_out {
                        d_pre[ch] = d_conv[(i * wo + j) * f_out + ch]
                            * act.derivative_from_output(cell[ch]);
                        any |= !d_pre[ch].is_zero();
                    }
                    if !any {
                        continue;
                    }
                    gather_patch(input, i, j, k, &mut buf);
                    outer_acc(conv_grads[l].w.data_mut(), patch, &d_pre, &buf);
                    for (g, &d) in conv_grads[l].b.data_mut().iter_mut().zip(&d_pre) {
                        *g += d;
                    }
                    d_patch.iter_mut().for_each(|v| *v = T::zero());
                    affine_transpose_acc(w.data(), patch, &d_pre, &mut d_patch);
                    for di in 0..k {
                        let start = ((i + di) * w_in + j) * f_in;
                        for (a, &g) in d_in[start..start + k * f_in]
                            .iter_mut()
                            .zip(&d_patch[di * k * f_in..])
                        {
                            *a += g;
                        }
                    }
                }
            }
            d_pooled = d_in;
        }

        // First layer.
        let first = &trace.convs[0];
        let (n, f) = (first.rows(), first.features());
        let d_conv = unpool(&d_pooled, &trace.pools[0].1, f, n * n);
        let d = c.dim;
        let seg = c.window * d;
        let row_len = 2 * seg;
        let mut row_sum = vec![T::zero(); n * f];
        let mut col_sum = vec![T::zero(); n * f];
        let mut db1 = vec![T::zero(); f];
        for i in 0..n {
            for j in 0..n {
                if !first.gates[i * n + j] {
                    continue;
                }
                let cell = first.cell(i, j);
                for ch in 0..f {
                    let dp = d_conv[(i * n + j) * f + ch] * act.derivative_from_output(cell[ch]);
                    row_sum[i * f + ch] += dp;
                    col_sum[j * f + ch] += dp;
                    db1[ch] += dp;
                }
            }
        }
        let mut dw1 = Tensor::zeros(&[f, row_len]);
        let mut dx = Tensor::zeros(trace.x.shape());
        let mut dy = Tensor::zeros(trace.y.shape());
        for (src, sums, offset, dst) in [
            (&trace.x, &row_sum, 0, &mut dx),
            (&trace.y, &col_sum, seg, &mut dy),
        ] {
            for i in 0..n {
                let segment = &src.data()[i * d..i * d + seg];
                let ds = &sums[i * f..(i + 1) * f];
                let dd = &mut dst.data_mut()[i * d..i * d + seg];
                for (ch, &g) in ds.iter().enumerate() {
                    if g.is_zero() {
                        continue;
                    }
                    let wrow =
                        &self.params.w1.data()[ch * row_len + offset..ch * row_len + offset + seg];
                    let grow =
                        &mut dw1.data_mut()[ch * row_len + offset..ch * row_len + offset + seg];
                    for t in 0..seg {
                        grow[t] += g * segment[t];
                        dd[t] += g * wrow[t];
                    }
                }
            }
        }

        let mut params = vec![dw1, Tensor::vector(db1)];
        for g in conv_grads {
            params.push(g.w);
            params.push(g.b);
        }
        params.extend(dense_tensors(head_grads));
        Gradients { params, dx, dy }
    }

    fn params(&self) -> Vec<&Tensor<T>> {
        let mut v = vec![&self.params.w1, &self.params.b1];
        for p in &self.params.conv2d {
            v.push(&p.w);
            v.push(&p.b);
        }
        v.extend(self.params.head.tensors());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut v = vec![&mut self.params.w1, &mut self.params.b1];
        for p in &mut self.params.conv2d {
            v.push(&mut p.w);
            v.push(&mut p.b);
        }
        v.extend(self.params.head.tensors_mut());
        v
    }

    fn head_mut(&mut self) -> &mut MlpHead<T> {
        &mut self.params.head
    }
}

/// Build ARC-II parameters that reproduce an ARC-I model's convolution and
/// pooling stacks.
///
/// The first `F₁` first-layer filters only see the x-segment (their y-block is
/// zero) and the next `F₁` only see the y-segment, so each devoted map is
/// constant along one grid axis. The first 2D convolution is confined the same
/// way: X-devoted outputs read X channels along a single grid column, Y-devoted
/// outputs read Y channels along a single grid row. An optional further 2D
/// layer `last` is initialized randomly inside the two channel groups; the
/// head is initialized randomly.
///
/// On inputs without padding, X-devoted channels after the first 2D
/// convolution equal ARC-I's second x-convolution, broadcast along `j`.
/// With padding the pair gate and the per-sentence gate differ.
pub fn embed_arc1_as_arc2<T: Scalar>(
    arc1: &Arc1Model<T>,
    last: Option<ConvLayerSpec>,
    hidden: &[usize],
    rng: &mut Rng,
) -> Result<Arc2Model<T>> {
    let (cx, cy) = (&arc1.config_x, &arc1.config_y);
    let mut violations = Vec::new();
    if cx.depth() != 2 || cy.depth() != 2 {
        violations.push(format!(
            "encoders must have two conv layers (x: {}, y: {})",
            cx.depth(),
            cy.depth()
        ));
    }
    if cx.global_pool || cy.global_pool {
        violations.push("global pooling encoders have no 2D counterpart".to_string());
    }
    if cx.dim != cy.dim || cx.l_max != cy.l_max {
        violations.push(format!(
            "sentences must share D and L_max ({}/{} vs {}/{})",
            cx.dim, cx.l_max, cy.dim, cy.l_max
        ));
    }
    if cx.layers != cy.layers {
        violations.push(format!(
            "x and y encoders need equal windows and feature counts so the first layer splits evenly ({:?} vs {:?})",
            cx.layers, cy.layers
        ));
    }
    if cx.activation != cy.activation {
        violations.push("x and y encoders use different activations".to_string());
    }
    if !violations.is_empty() {
        return Err(Error::Config(format!(
            "cannot embed ARC-I into ARC-II: {}",
            violations.join("; ")
        )));
    }

    let (d, k1, f1) = (cx.dim, cx.layers[0].window, cx.layers[0].features);
    let (k2, f2) = (cx.layers[1].window, cx.layers[1].features);
    let mut conv2d = vec![ConvLayerSpec::new(k2, 2 * f2)];
    if let Some(spec) = last {
        if spec.features % 2 != 0 {
            return Err(Error::Config(format!(
                "cannot embed ARC-I into ARC-II: last 2D layer needs an even feature count, got {}",
                spec.features
            )));
        }
        conv2d.push(spec);
    }
    let config = Arc2Config {
        dim: d,
        l_max: cx.l_max,
        window: k1,
        features: 2 * f1,
        conv2d,
        activation: cx.activation,
        hidden: hidden.to_vec(),
        dropout: arc1.head.dropout,
    };
    config.stage_extents()?;

    let px = &arc1.params_x;
    let py = arc1.encoder_y();
    let seg = k1 * d;

    let mut w1 = Tensor::zeros(&[2 * f1, 2 * seg]);
    let mut b1 = Tensor::zeros(&[2 * f1]);
    for f in 0..f1 {
        w1.row_mut(f)[..seg].copy_from_slice(px.layers[0].w.row(f));
        w1.row_mut(f1 + f)[seg..].copy_from_slice(py.layers[0].w.row(f));
        b1.data_mut()[f] = px.layers[0].b.data()[f];
        b1.data_mut()[f1 + f] = py.layers[0].b.data()[f];
    }

    // Patch layout is (di, dj, channel) with 2·F₁ channels.
    let ch_in = 2 * f1;
    let mut w3 = Tensor::zeros(&[2 * f2, k2 * k2 * ch_in]);
    let mut b3 = Tensor::zeros(&[2 * f2]);
    for g in 0..f2 {
        for t in 0..k2 {
            for c in 0..f1 {
                // X outputs: slide along i (di = t) in column dj = 0.
                w3.row_mut(g)[(t * k2) * ch_in + c] = px.layers[1].w.at2(g, t * f1 + c);
                // Y outputs: slide along j (dj = t) in row di = 0.
                w3.row_mut(f2 + g)[t * ch_in + f1 + c] = py.layers[1].w.at2(g, t * f1 + c);
            }
        }
        b3.data_mut()[g] = px.layers[1].b.data()[g];
        b3.data_mut()[f2 + g] = py.layers[1].b.data()[g];
    }
    let mut layers = vec![ConvParams { w: w3, b: b3 }];

    if let Some(spec) = last {
        let (k, half_out, half_in) = (spec.window, spec.features / 2, f2);
        let r = (6.0 / (k * k * half_in + half_out) as f64).sqrt();
        let mut w = Tensor::zeros(&[spec.features, k * k * 2 * f2]);
        for o in 0..spec.features {
            let group = if o < half_out { 0 } else { half_in };
            for p in 0..k * k {
                for c in 0..half_in {
                    w.row_mut(o)[p * 2 * f2 + group + c] =
                        T::from_f64_lossy(rng.uniform_range(-r, r));
                }
            }
        }
        layers.push(ConvParams {
            w,
            b: Tensor::zeros(&[spec.features]),
        });
    }

    let head = MlpHead::init(
        config.flat_len()?,
        hidden,
        config.activation,
        config.dropout,
        rng,
    )?;
    Arc2Model::from_parts(
        config,
        Arc2Params {
            w1,
            b1,
            conv2d: layers,
            head,
        },
    )
}
