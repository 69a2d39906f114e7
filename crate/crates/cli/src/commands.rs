use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use arcmatch::data::{
    encode_instances, encode_triples, gen_synthetic_corpus, load_labeled_pairs, load_pairs,
    load_triples, make_eval_instances, sample_negatives, Sentence, SynthConfig,
};
use arcmatch::embedding::random_embeddings;
use arcmatch::metrics::{classify_from_scores, p_at_1_tie_averaged, select_threshold};
use arcmatch::training::{GradCheckReport, TrainHistory};
use arcmatch::{
    encode_sentence, gradient_check, load_checkpoint_file, load_embeddings, p_at_1, parse_layers,
    parse_widths, save_checkpoint_file, tokenize, train, AnyModel, EvalReport, MatchModel,
    ModelKind, ModelSpec, NegativeMode, PairCorpus, Rng, Table64, TokenTriple, TrainConfig,
};

use crate::args::{EvalArgs, GenSynthArgs, GlobalOpts, GradcheckArgs, ScoreArgs, TrainArgs};
use crate::error::{data_err, io_err, CliError, CliResult};

/// Substreams of the `--seed` generator, one per consumer, so that e.g.
/// `eval` rebuilds exactly the validation instances `train` used.
const STREAM_EMBEDDINGS: u64 = 1;
const STREAM_INIT: u64 = 2;
const STREAM_NEGATIVES: u64 = 3;
const STREAM_EVAL: u64 = 4;

/// Longest `L_max` tried when searching for one the model accepts.
const L_MAX_SEARCH: usize = 256;

fn line(out: &mut dyn Write, text: impl std::fmt::Display) -> CliResult<()> {
    writeln!(out, "{text}").map_err(io_err(Path::new("<stdout>")))
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(io_err(path))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = OsString::from(path.as_os_str());
    s.push(suffix);
    PathBuf::from(s)
}

/// The embeddings file written next to a checkpoint.
pub fn vectors_path(checkpoint: &Path) -> PathBuf {
    with_suffix(checkpoint, ".vectors")
}

pub fn history_path(checkpoint: &Path) -> PathBuf {
    with_suffix(checkpoint, ".history")
}

fn load_table(path: &Path) -> CliResult<Table64> {
    load_embeddings(open(path)?).map_err(data_err(path))
}

fn load_model(checkpoint: &Path, embeddings: Option<&Path>) -> CliResult<(AnyModel<f64>, Table64)> {
    let model = load_checkpoint_file::<f64>(checkpoint).map_err(data_err(checkpoint))?;
    let vectors = embeddings.map_or_else(|| vectors_path(checkpoint), Path::to_path_buf);
    let table = load_table(&vectors)?;
    let dim = model.spec().dim;
    if table.dim() != dim {
        return Err(CliError::Data {
            path: vectors,
            source: arcmatch::Error::Dimension(format!(
                "vectors have dimension {}, the model expects {dim}",
                table.dim()
            )),
        });
    }
    Ok((model, table))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenSynthSummary {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub dir: PathBuf,
}

pub fn cmd_gen_synth(
    g: &GlobalOpts,
    a: &GenSynthArgs,
    out: &mut dyn Write,
) -> CliResult<GenSynthSummary> {
    let cfg = SynthConfig {
        n_pairs: a.pairs,
        vocab_size: a.vocab,
        len_range: (a.min_len, a.max_len),
        n_topics: a.topics,
        lexicon: a.lexicon,
        topical: (a.topical_min, a.topical_max),
    };
    let synth = gen_synthetic_corpus(&cfg, &mut Rng::new(g.seed))?;
    let (n_train, n_val, n_test) = a.split.sizes(a.pairs);
    fs::create_dir_all(&a.out).map_err(io_err(&a.out))?;

    let pairs = &synth.corpus.pairs;
    let parts = [
        ("train", 0, n_train),
        ("val", n_train, n_val),
        ("test", n_train + n_val, n_test),
    ];
    for (name, start, len) in parts {
        let path = a.out.join(format!("{name}.tsv"));
        let part = PairCorpus {
            pairs: pairs[start..start + len].to_vec(),
            provenance: String::new(),
        };
        let mut w = create(&path)?;
        part.write(&mut w).map_err(data_err(&path))?;
        w.flush().map_err(io_err(&path))?;
    }

    let manifest: BTreeMap<&str, String> = [
        ("seed", g.seed.to_string()),
        ("pairs", a.pairs.to_string()),
        ("split", a.split.to_string()),
        ("train", n_train.to_string()),
        ("val", n_val.to_string()),
        ("test", n_test.to_string()),
        ("vocab", a.vocab.to_string()),
        ("topics", a.topics.to_string()),
        ("lexicon", a.lexicon.to_string()),
        ("min_len", a.min_len.to_string()),
        ("max_len", a.max_len.to_string()),
        ("topical_min", a.topical_min.to_string()),
        ("topical_max", a.topical_max.to_string()),
        ("provenance", synth.corpus.provenance.clone()),
    ]
    .into_iter()
    .collect();
    let path = a.out.join("manifest.txt");
    let mut w = create(&path)?;
    for (k, v) in &manifest {
        writeln!(w, "{k}={v}").map_err(io_err(&path))?;
    }
    w.flush().map_err(io_err(&path))?;

    line(
        out,
        format!(
            "wrote {n_train}/{n_val}/{n_test} train/val/test pairs to {}",
            a.out.display()
        ),
    )?;
    Ok(GenSynthSummary {
        train: n_train,
        val: n_val,
        test: n_test,
        dir: a.out.clone(),
    })
}

fn longest(sentences: impl Iterator<Item = usize>) -> usize {
    sentences.max().unwrap_or(1).max(1)
}

/// The model spec implied by the training flags, with `l_max` either given
/// or the smallest length at least `longest` that the layer stack accepts.
pub fn train_spec(a: &TrainArgs, dim: usize, longest: usize) -> CliResult<ModelSpec> {
    let hidden = parse_widths(&a.hidden)?;
    let mut spec = ModelSpec::standard(a.model, dim, longest, a.window, a.features, 0);
    if a.layers != "default" {
        spec.layers = parse_layers(&a.layers)?;
    }
    spec.hidden = hidden;
    spec.activation = a.activation.into();
    spec.dropout = a.dropout;
    spec.tie_weights = a.tie_weights;

    let builds = |l: usize| {
        let mut s = spec.clone();
        s.l_max_x = l;
        s.l_max_y = l;
        AnyModel::<f64>::build(&s, &mut Rng::new(0)).map(|_| s)
    };
    match a.l_max {
        Some(l) => Ok(builds(l)?),
        None => {
            let first_err = match builds(longest) {
                Ok(s) => return Ok(s),
                Err(e) => e,
            };
            (longest + 1..=L_MAX_SEARCH)
                .find_map(|l| builds(l).ok())
                .ok_or(CliError::Core(first_err))
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub spec: ModelSpec,
    pub history: TrainHistory,
    /// P@1 of the saved checkpoint on the validation instances.
    pub val_report: Option<EvalReport>,
    pub checkpoint: PathBuf,
}

fn all_tokens<'a>(sentences: impl Iterator<Item = &'a Sentence>) -> Vec<String> {
    let mut toks: Vec<String> = sentences.flatten().cloned().collect();
    toks.sort_unstable();
    toks.dedup();
    toks
}

pub fn cmd_train(g: &GlobalOpts, a: &TrainArgs, out: &mut dyn Write) -> CliResult<TrainSummary> {
    if a.embeddings.is_none() && !a.random_embeddings {
        return Err(CliError::Usage(
            "pass --embeddings FILE or --random-embeddings".into(),
        ));
    }
    let master = Rng::new(g.seed);
    let mode: NegativeMode = a.negative_mode.into();
    let pairs = match &a.train {
        Some(p) => Some(load_pairs(open(p)?).map_err(data_err(p))?),
        None => None,
    };
    let given_triples = match &a.triples {
        Some(p) => Some(load_triples(open(p)?).map_err(data_err(p))?),
        None => None,
    };
    let val = match &a.val {
        Some(p) => Some(load_pairs(open(p)?).map_err(data_err(p))?),
        None => None,
    };

    let mut sentences: Vec<&Sentence> = Vec::new();
    if let Some(c) = &pairs {
        sentences.extend(c.pairs.iter().flat_map(|(x, y)| [x, y]));
    }
    if let Some(t) = &given_triples {
        sentences.extend(t.iter().flat_map(|t| [&t.x, &t.y_pos, &t.y_neg]));
    }
    if let Some(c) = &val {
        sentences.extend(c.pairs.iter().flat_map(|(x, y)| [x, y]));
    }
    let table: Table64 = match &a.embeddings {
        Some(p) => load_table(p)?,
        None => random_embeddings(
            &all_tokens(sentences.iter().copied()),
            a.dim,
            &mut master.substream(STREAM_EMBEDDINGS),
        )?,
    };

    let spec = train_spec(a, table.dim(), longest(sentences.iter().map(|s| s.len())))?;
    let model = AnyModel::<f64>::build(&spec, &mut master.substream(STREAM_INIT))?;
    let (conv, pool, mlp) = spec.layer_counts();
    line(
        out,
        format!(
        "model {}: {conv} convolution, {pool} pooling, {mlp} MLP layers; {} parameters; L_max {}",
        spec.kind,
        model.num_params(),
        spec.l_max_x
    ),
    )?;

    let triples: Vec<TokenTriple> = match (pairs, given_triples) {
        (Some(c), _) => {
            let (t, stats) = sample_negatives(
                &c,
                a.negatives,
                mode,
                Some(&table),
                &mut master.substream(STREAM_NEGATIVES),
            )?;
            line(
                out,
                format!(
                    "sampled {} {mode} triples (hard fallbacks {}, shuffle skips {})",
                    stats.emitted, stats.hard_fallbacks, stats.shuffle_skipped
                ),
            )?;
            t
        }
        (None, Some(t)) => t,
        (None, None) => unreachable!("clap requires --train or --triples"),
    };
    let (val_instances, val_stats) = match &val {
        Some(c) => make_eval_instances(
            c,
            a.val_negatives,
            mode,
            Some(&table),
            &mut master.substream(STREAM_EVAL),
        )?,
        None => Default::default(),
    };
    if val_stats.shuffle_skipped > 0 {
        line(
            out,
            format!(
                "skipped {} validation pairs with no distinct shuffle",
                val_stats.shuffle_skipped
            ),
        )?;
    }

    let lens = model.l_max();
    let encoded = encode_triples(&triples, &table, lens)?;
    let val_encoded = encode_instances(&val_instances, &table, lens)?;
    let truncated = encoded
        .iter()
        .filter(|t| t.x.truncated || t.y_pos.truncated || t.y_neg.truncated)
        .count();
    if truncated > 0 {
        line(
            out,
            format!("{truncated} triples hold sentences truncated to L_max"),
        )?;
    }

    let cfg = TrainConfig {
        learning_rate: a.lr,
        batch_size: a.batch,
        max_epochs: a.epochs,
        patience: a.patience,
        dropout: a.dropout,
        eval_every: a.eval_every,
        finetune_embeddings: a.finetune_embeddings,
        seed: g.seed,
        deterministic: g.deterministic,
    };
    let fine = a.finetune_embeddings.then(|| table.clone());
    let outcome = train(model, &encoded, &val_encoded, &cfg, fine)?;
    let table = outcome.table.unwrap_or(table);

    save_checkpoint_file(&outcome.model, &a.out).map_err(data_err(&a.out))?;
    let vectors = vectors_path(&a.out);
    let mut vw = create(&vectors)?;
    table.write_text(&mut vw).map_err(data_err(&vectors))?;
    vw.flush().map_err(io_err(&vectors))?;
    let history_file = history_path(&a.out);
    fs::write(&history_file, outcome.history.to_text()).map_err(io_err(&history_file))?;

    line(out, outcome.history.to_text().trim_end())?;
    let val_report = if val_encoded.is_empty() {
        None
    } else {
        let saved = load_checkpoint_file::<f64>(&a.out).map_err(data_err(&a.out))?;
        let fresh = encode_instances(&val_instances, &table, lens)?;
        let report = p_at_1(&saved, &fresh)?;
        line(out, format!("validation (saved checkpoint)\n{report}"))?;
        Some(report)
    };
    line(
        out,
        format!(
            "wrote {}, {} and {}",
            a.out.display(),
            vectors.display(),
            history_file.display()
        ),
    )?;
    Ok(TrainSummary {
        spec,
        history: outcome.history,
        val_report,
        checkpoint: a.out.clone(),
    })
}

/// Column count of the first non-blank line.
fn columns(text: &str) -> usize {
    text.lines()
        .find(|l| !l.trim().is_empty())
        .map_or(0, |l| l.split('\t').count())
}

pub fn cmd_eval(g: &GlobalOpts, a: &EvalArgs, out: &mut dyn Write) -> CliResult<EvalReport> {
    let text = fs::read_to_string(&a.data).map_err(io_err(&a.data))?;
    match (a.classify, columns(&text)) {
        (true, 2) => {
            return Err(CliError::Usage(format!(
                "{} holds unlabeled pairs (ranking data); --classify needs x TAB y TAB label lines",
                a.data.display()
            )))
        }
        (false, 3) => {
            return Err(CliError::Usage(format!(
                "{} has three columns; ranking evaluation reads x TAB y pairs (use --classify for labeled pairs)",
                a.data.display()
            )))
        }
        _ => {}
    }
    let (model, table) = load_model(&a.checkpoint, a.embeddings.as_deref())?;
    let (lx, ly) = model.l_max();

    let report = if a.classify {
        let labeled = load_labeled_pairs(text.as_bytes()).map_err(data_err(&a.data))?;
        let mut scores = Vec::with_capacity(labeled.len());
        for (x, y, _) in &labeled {
            let sx = encode_sentence(x, &table, lx)?;
            let sy = encode_sentence(y, &table, ly)?;
            scores.push(model.score(&sx, &sy)?);
        }
        let labels: Vec<bool> = labeled.iter().map(|l| l.2).collect();
        let threshold = match a.threshold {
            Some(t) => t,
            None => select_threshold(&scores, &labels)?,
        };
        classify_from_scores(&scores, &labels, threshold)?
    } else {
        let corpus = load_pairs(text.as_bytes()).map_err(data_err(&a.data))?;
        let mode: NegativeMode = a.negative_mode.into();
        let mut rng = Rng::new(g.seed).substream(STREAM_EVAL);
        let (instances, stats) =
            make_eval_instances(&corpus, a.negatives, mode, Some(&table), &mut rng)?;
        let encoded = encode_instances(&instances, &table, (lx, ly))?;
        let mut report = p_at_1(&model, &encoded)?;
        let tie = p_at_1_tie_averaged(&model, &encoded)?;
        report.extra.push(("p_at_1_tie_averaged".into(), tie.value));
        report
            .extra
            .push(("shuffle_skipped".into(), stats.shuffle_skipped as f64));
        report
    };
    let rendered = if a.kv {
        report.to_kv()
    } else {
        report.to_string()
    };
    write!(out, "{rendered}").map_err(io_err(Path::new("<stdout>")))?;
    Ok(report)
}

pub fn cmd_score(_g: &GlobalOpts, a: &ScoreArgs, out: &mut dyn Write) -> CliResult<Vec<f64>> {
    let pairs: Vec<(Sentence, Sentence)> = match (&a.x, &a.y, &a.pairs) {
        (Some(x), Some(y), _) => vec![(tokenize(x), tokenize(y))],
        (_, _, Some(p)) => load_pairs(open(p)?).map_err(data_err(p))?.pairs,
        _ => return Err(CliError::Usage("pass --x and --y, or --pairs FILE".into())),
    };
    let (model, table) = load_model(&a.checkpoint, a.embeddings.as_deref())?;
    let (lx, ly) = model.l_max();
    let mut scores = Vec::with_capacity(pairs.len());
    for (x, y) in &pairs {
        let sx = encode_sentence(x, &table, lx)?;
        let sy = encode_sentence(y, &table, ly)?;
        let s = model.score(&sx, &sy)?;
        line(out, format!("{s:.6}"))?;
        scores.push(s);
    }
    Ok(scores)
}

pub fn cmd_gradcheck(
    g: &GlobalOpts,
    a: &GradcheckArgs,
    out: &mut dyn Write,
) -> CliResult<Vec<GradCheckReport>> {
    let kinds: Vec<ModelKind> = a.kinds()?;
    let mut reports = Vec::new();
    let mut failed = 0;
    for kind in kinds {
        for seed in g.seed..g.seed + a.seeds {
            let r = gradient_check(kind, a.activation.into(), seed, a.eps, a.inject_bias_fault)?;
            if r.max_rel_err < a.tolerance {
                line(
                    out,
                    format!(
                        "PASS {kind} seed={seed} max_rel_err={:.3e} < {:e}",
                        r.max_rel_err, a.tolerance
                    ),
                )?;
            } else {
                failed += 1;
                line(
                    out,
                    format!(
                        "FAIL {kind} seed={seed} max_rel_err={:.3e} >= {:e} (worst parameter {})",
                        r.max_rel_err, a.tolerance, r.worst
                    ),
                )?;
            }
            reports.push(r);
        }
    }
    if failed > 0 {
        return Err(CliError::GradcheckFailed {
            failed,
            total: reports.len(),
        });
    }
    Ok(reports)
}
