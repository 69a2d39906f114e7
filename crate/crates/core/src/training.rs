//! Margin ranking loss, mini-batch SGD, early stopping and the
//! finite-difference gradient check.

use rayon::prelude::*;
use twofloat::TwoFloat;

use crate::conv::ConvLayerSpec;
use crate::data::EncodedInstance;
use crate::embedding::{encode_sentence, random_embeddings, EmbeddingTable, EncodedSentence};
use crate::error::{Error, Result};
use crate::metrics::p_at_1;
use crate::model::{flat_grads, flat_params, set_flat_params, MatchModel};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{finite_diff, Activation, Tensor};
use crate::zoo::{AnyModel, ModelKind, ModelSpec};

/// Training example: `x` should score higher with `y_pos` than with `y_neg`.
#[derive(Debug, Clone, PartialEq)]
pub struct Triple<T> {
    pub x: EncodedSentence<T>,
    pub y_pos: EncodedSentence<T>,
    pub y_neg: EncodedSentence<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Evaluations without validation improvement before stopping.
    pub patience: usize,
    pub dropout: f64,
    /// Validate every this many batches; 0 means once per epoch.
    pub eval_every: usize,
    pub finetune_embeddings: bool,
    pub seed: u64,
    /// Sum per-triple gradients in a fixed order.
    pub deterministic: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            batch_size: 128,
            max_epochs: 20,
            patience: 3,
            dropout: 0.0,
            eval_every: 0,
            finetune_embeddings: false,
            seed: 1,
            deterministic: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            problems.push(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if self.batch_size == 0 {
            problems.push("batch size must be at least 1".to_string());
        }
        if self.patience == 0 {
            problems.push("patience must be at least 1".to_string());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            problems.push(format!("dropout rate {} outside [0, 1)", self.dropout));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalPoint {
    pub epoch: usize,
    pub batches: usize,
    /// Mean batch loss since the previous evaluation.
    pub train_loss: f64,
    pub val_p_at_1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub points: Vec<EvalPoint>,
    /// Index into `points` of the snapshot that was returned.
    pub best: Option<usize>,
    pub epochs: usize,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn to_text(&self) -> String {
        let mut out = String::from("epoch\tbatches\ttrain_loss\tval_p_at_1\n");
        for p in &self.points {
            let val = p
                .val_p_at_1
                .map_or_else(|| "-".to_string(), |v| format!("{v:.6}"));
            out.push_str(&format!(
                "{}\t{}\t{:.6}\t{val}\n",
                p.epoch, p.batches, p.train_loss
            ));
        }
        if let Some(b) = self.best {
            out.push_str(&format!("# best point {b}\n"));
        }
        out
    }
}

/// `max(0, 1 + s_neg - s_pos)`.
pub fn hinge_loss<T: Scalar>(s_pos: T, s_neg: T) -> T {
    (T::one() + s_neg - s_pos).max(T::zero())
}

const REDUCE_CHUNK: usize = 8;

struct TripleGrad<T> {
    params: Vec<Tensor<T>>,
    rows: Vec<(usize, Vec<T>)>,
}

fn sentence_rows<T: Scalar>(s: &EncodedSentence<T>, d: &Tensor<T>, out: &mut Vec<(usize, Vec<T>)>) {
    for (i, &id) in s.ids.iter().enumerate() {
        out.push((id, d.row(i).to_vec()));
    }
}

fn triple_grad<T: Scalar, M: MatchModel<T>>(
    model: &M,
    t: &Triple<T>,
    dropout: Option<Rng>,
    want_rows: bool,
) -> Result<(T, Option<TripleGrad<T>>)> {
    let mut r_pos = dropout.clone();
    let mut r_neg = dropout;
    let (s_pos, tr_pos) = model.forward(&t.x, &t.y_pos, r_pos.as_mut())?;
    let (s_neg, tr_neg) = model.forward(&t.x, &t.y_neg, r_neg.as_mut())?;
    let loss = hinge_loss(s_pos, s_neg);
    if !loss.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite loss (s+ = {s_pos}, s- = {s_neg}); the learning rate is probably too high"
        )));
    }
    if loss <= T::zero() {
        return Ok((loss, None));
    }
    let g_pos = model.backward(&tr_pos, -T::one());
    let g_neg = model.backward(&tr_neg, T::one());
    let mut params = g_pos.params;
    for (a, b) in params.iter_mut().zip(&g_neg.params) {
        a.axpy(T::one(), b)?;
    }
    let mut rows = Vec::new();
    if want_rows {
        let mut dx = g_pos.dx;
        dx.axpy(T::one(), &g_neg.dx)?;
        sentence_rows(&t.x, &dx, &mut rows);
        sentence_rows(&t.y_pos, &g_pos.dy, &mut rows);
        sentence_rows(&t.y_neg, &g_neg.dy, &mut rows);
    }
    Ok((loss, Some(TripleGrad { params, rows })))
}

fn merge<T: Scalar>(
    acc: Option<TripleGrad<T>>,
    g: Option<TripleGrad<T>>,
) -> Result<Option<TripleGrad<T>>> {
    Ok(match (acc, g) {
        (None, g) => g,
        (a, None) => a,
        (Some(mut a), Some(b)) => {
            for (x, y) in a.params.iter_mut().zip(&b.params) {
                x.axpy(T::one(), y)?;
            }
            a.rows.extend(b.rows);
            Some(a)
        }
    })
}

fn refreshed<T: Scalar>(t: &Triple<T>, table: &EmbeddingTable<T>) -> Triple<T> {
    let mut t = t.clone();
    t.x.refresh(table);
    t.y_pos.refresh(table);
    t.y_neg.refresh(table);
    t
}

/// One SGD update on `batch`; returns the batch mean hinge loss.
///
/// Triple `k` draws its dropout masks from `rng.substream(k)`, shared by the
/// positive and negative evaluations. With a `table`, inputs are re-encoded
/// from it and its rows are updated too.
pub fn sgd_step<T: Scalar, M: MatchModel<T>>(
    model: &mut M,
    batch: &[&Triple<T>],
    cfg: &TrainConfig,
    rng: &Rng,
    table: Option<&mut EmbeddingTable<T>>,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    let fresh: Option<Vec<Triple<T>>> = table
        .as_deref()
        .map(|tb| batch.iter().map(|t| refreshed(t, tb)).collect());
    let items: Vec<&Triple<T>> = match &fresh {
        Some(v) => v.iter().collect(),
        None => batch.to_vec(),
    };
    let want_rows = table.is_some();
    let use_dropout = cfg.dropout > 0.0;
    let shared: &M = model;
    let work = |(k, t): (usize, &&Triple<T>)| {
        let r = use_dropout.then(|| rng.substream(k as u64));
        triple_grad(shared, t, r, want_rows)
    };
    let (loss_sum, grad) = if cfg.deterministic {
        // Fixed-size chunks summed in order: the result does not depend on
        // how many threads run them.
        let indexed: Vec<(usize, &&Triple<T>)> = items.iter().enumerate().collect();
        let parts = indexed
            .par_chunks(REDUCE_CHUNK)
            .map(|chunk| {
                let mut loss = T::zero();
                let mut acc = None;
                for &item in chunk {
                    let (l, g) = work(item)?;
                    loss += l;
                    acc = merge(acc, g)?;
                }
                Ok((loss, acc))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut loss = T::zero();
        let mut acc = None;
        for (l, g) in parts {
            loss += l;
            acc = merge(acc, g)?;
        }
        (loss, acc)
    } else {
        items.par_iter().enumerate().map(work).try_reduce(
            || (T::zero(), None),
            |(la, ga), (lb, gb)| Ok((la + lb, merge(ga, gb)?)),
        )?
    };
    let n = T::from_usize_lossy(batch.len());
    if let Some(g) = grad {
        let step = -T::from_f64_lossy(cfg.learning_rate) / n;
        for (p, d) in model.params_mut().into_iter().zip(&g.params) {
            p.axpy(step, d)?;
        }
        if let Some(tb) = table {
            let vectors = tb.vectors_mut();
            for (id, d) in &g.rows {
                for (v, &dv) in vectors.row_mut(*id).iter_mut().zip(d) {
                    *v += step * dv;
                }
            }
        }
    }
    Ok((loss_sum / n).to_f64_lossy())
}

/// Result of [`train`]: the best snapshot and, when fine-tuning, its table.
#[derive(Debug, Clone)]
pub struct TrainOutcome<T, M> {
    pub model: M,
    pub table: Option<EmbeddingTable<T>>,
    pub history: TrainHistory,
}

fn validate_p_at_1<T: Scalar, M: MatchModel<T>>(
    model: &M,
    val: &[EncodedInstance<T>],
    table: Option<&EmbeddingTable<T>>,
) -> Result<Option<f64>> {
    if val.is_empty() {
        return Ok(None);
    }
    let report = match table {
        Some(tb) => {
            let fresh: Vec<EncodedInstance<T>> = val
                .iter()
                .map(|inst| {
                    let mut inst = inst.clone();
                    inst.x.refresh(tb);
                    inst.candidates.iter_mut().for_each(|c| c.refresh(tb));
                    inst
                })
                .collect();
            p_at_1(model, &fresh)?
        }
        None => p_at_1(model, val)?,
    };
    Ok(Some(report.value))
}

/// Shuffled mini-batch SGD with validation every `eval_every` batches (or
/// per epoch), keeping the best-validation snapshot and stopping after
/// `patience` evaluations without improvement. Without validation data the
/// final parameters are returned.
pub fn train<T: Scalar, M: MatchModel<T>>(
    mut model: M,
    triples: &[Triple<T>],
    val: &[EncodedInstance<T>],
    cfg: &TrainConfig,
    mut table: Option<EmbeddingTable<T>>,
) -> Result<TrainOutcome<T, M>> {
    cfg.validate()?;
    if triples.is_empty() {
        return Err(Error::Input("no training triples".into()));
    }
    if cfg.finetune_embeddings && table.is_none() {
        return Err(Error::Config(
            "fine-tuning embeddings needs the embedding table".into(),
        ));
    }
    model.head_mut().dropout = cfg.dropout;
    let mut rng = Rng::new(cfg.seed);
    let mut order: Vec<usize> = (0..triples.len()).collect();
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, M, Option<EmbeddingTable<T>>)> = None;
    let mut stale = 0;
    let mut batches = 0;
    let (mut loss_sum, mut loss_n) = (0.0, 0usize);

    let mut evaluate = |model: &M,
                        table: &Option<EmbeddingTable<T>>,
                        epoch: usize,
                        batches: usize,
                        loss_sum: &mut f64,
                        loss_n: &mut usize,
                        history: &mut TrainHistory|
     -> Result<bool> {
        let tb = if cfg.finetune_embeddings {
            table.as_ref()
        } else {
            None
        };
        let val_p = validate_p_at_1(model, val, tb)?;
        history.points.push(EvalPoint {
            epoch,
            batches,
            train_loss: if *loss_n == 0 {
                0.0
            } else {
                *loss_sum / *loss_n as f64
            },
            val_p_at_1: val_p,
        });
        (*loss_sum, *loss_n) = (0.0, 0);
        let Some(v) = val_p else { return Ok(false) };
        if best.as_ref().is_none_or(|(b, _, _)| v > *b) {
            best = Some((v, model.clone(), table.clone()));
            history.best = Some(history.points.len() - 1);
            stale = 0;
        } else {
            stale += 1;
        }
        Ok(stale >= cfg.patience)
    };

    'epochs: for epoch in 1..=cfg.max_epochs {
        history.epochs = epoch;
        rng.shuffle(&mut order);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Triple<T>> = chunk.iter().map(|&i| &triples[i]).collect();
            let step_rng = rng.fork();
            let tb = if cfg.finetune_embeddings {
                table.as_mut()
            } else {
                None
            };
            loss_sum += sgd_step(&mut model, &batch, cfg, &step_rng, tb)?;
            loss_n += 1;
            batches += 1;
            if cfg.eval_every > 0
                && batches % cfg.eval_every == 0
                && evaluate(
                    &model,
                    &table,
                    epoch,
                    batches,
                    &mut loss_sum,
                    &mut loss_n,
                    &mut history,
                )?
            {
                history.stopped_early = true;
                break 'epochs;
            }
        }
        if cfg.eval_every == 0
            && evaluate(
                &model,
                &table,
                epoch,
                batches,
                &mut loss_sum,
                &mut loss_n,
                &mut history,
            )?
        {
            history.stopped_early = true;
            break;
        }
    }
    if let Some((_, m, t)) = best {
        model = m;
        table = t;
    }
    Ok(TrainOutcome {
        model,
        table,
        history,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub kind: ModelKind,
    pub max_rel_err: f64,
    /// Flat index of the worst parameter.
    pub worst: usize,
    pub n_params: usize,
    pub loss: f64,
}

/// Small configuration of `kind` used by [`gradient_check`].
pub fn gradcheck_spec(kind: ModelKind, activation: Activation) -> ModelSpec {
    let (dim, lx, ly, layers, hidden) = match kind {
        ModelKind::Arc1 => (
            4,
            10,
            9,
            vec![ConvLayerSpec::new(3, 4), ConvLayerSpec::new(3, 4)],
            6,
        ),
        ModelKind::Arc2 => (
            3,
            12,
            12,
            vec![
                ConvLayerSpec::new(3, 3),
                ConvLayerSpec::new(2, 4),
                ConvLayerSpec::new(2, 4),
            ],
            6,
        ),
        ModelKind::Senna => (4, 9, 8, vec![ConvLayerSpec::new(3, 5)], 6),
        ModelKind::WordEmbed => (4, 7, 6, Vec::new(), 6),
        ModelKind::SenMlp => (3, 6, 5, Vec::new(), 5),
    };
    ModelSpec {
        kind,
        dim,
        l_max_x: lx,
        l_max_y: ly,
        layers,
        activation,
        hidden: vec![hidden],
        dropout: 0.0,
        tie_weights: false,
    }
}

/// Compare analytic and central-difference gradients of the hinge loss on a
/// random model and triple, for every parameter. Relative error is
/// `|a - n| / max(1e-8, |a| + |n|)`. Analytic gradients come from the `f64`
/// model; the numeric side evaluates the same parameters in double-double.
/// `flip_bias` negates the bias gradients
/// of the positive-pair backward pass, which the check must catch.
pub fn gradient_check(
    kind: ModelKind,
    activation: Activation,
    seed: u64,
    eps: f64,
    flip_bias: bool,
) -> Result<GradCheckReport> {
    let spec = gradcheck_spec(kind, activation);
    let mut rng = Rng::new(seed);
    let model = AnyModel::<f64>::build(&spec, &mut rng)?;
    let words: Vec<String> = (0..20).map(|i| format!("w{i}")).collect();
    let table = random_embeddings::<f64, _>(&words, spec.dim, &mut rng)?;
    let sentence = |l_max: usize, rng: &mut Rng| {
        let len = rng.between(1, l_max);
        let toks: Vec<&String> = (0..len).map(|_| &words[rng.below(words.len())]).collect();
        encode_sentence(&toks, &table, l_max)
    };
    let mut triple = None;
    for _ in 0..100 {
        let t = Triple {
            x: sentence(spec.l_max_x, &mut rng)?,
            y_pos: sentence(spec.l_max_y, &mut rng)?,
            y_neg: sentence(spec.l_max_y, &mut rng)?,
        };
        let loss = hinge_loss(model.score(&t.x, &t.y_pos)?, model.score(&t.x, &t.y_neg)?);
        if loss > 0.0 {
            triple = Some((t, loss));
            break;
        }
    }
    let (t, loss) =
        triple.ok_or_else(|| Error::Numeric("no triple with an active hinge found".into()))?;

    let (_, tp) = model.forward(&t.x, &t.y_pos, None)?;
    let (_, tn) = model.forward(&t.x, &t.y_neg, None)?;
    let mut gp = model.backward(&tp, -1.0);
    let gn = model.backward(&tn, 1.0);
    if flip_bias {
        // The positive pair's final bias gradient is always -1, so this
        // fault can never hide behind a zero gradient.
        for g in gp.params.iter_mut().skip(1).step_by(2) {
            *g = g.map(|v| -v);
        }
    }
    for (a, b) in gp.params.iter_mut().zip(&gn.params) {
        a.axpy(1.0, b)?;
    }
    let analytic = flat_grads(&gp);

    // Finite differences in double-double: f64 roundoff in the loss would
    // otherwise show up as ~1e-11 noise on gradients that are exactly zero.
    let mut probe = model.cast::<TwoFloat>()?;
    let (x, y_pos, y_neg) = (
        t.x.cast::<TwoFloat>(),
        t.y_pos.cast::<TwoFloat>(),
        t.y_neg.cast::<TwoFloat>(),
    );
    let theta = Tensor::vector(flat_params(&probe));
    let numeric = finite_diff(
        |th: &Tensor<TwoFloat>| {
            set_flat_params(&mut probe, th.data()).expect("same parameter count");
            hinge_loss(
                probe.score(&x, &y_pos).expect("valid"),
                probe.score(&x, &y_neg).expect("valid"),
            )
        },
        &theta,
        TwoFloat::from(eps),
    )?;
    let numeric: Vec<f64> = numeric.data().iter().map(|v| v.to_f64_lossy()).collect();
    let (mut max_rel_err, mut worst) = (0.0, 0);
    for (i, (&a, &n)) in analytic.iter().zip(&numeric).enumerate() {
        let rel = (a - n).abs() / (a.abs() + n.abs()).max(1e-8);
        if rel > max_rel_err {
            (max_rel_err, worst) = (rel, i);
        }
    }
    Ok(GradCheckReport {
        kind,
        max_rel_err,
        worst,
        n_params: analytic.len(),
        loss,
    })
}
