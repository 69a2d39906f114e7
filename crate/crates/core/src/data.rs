//! Pair corpora, negative sampling, ranking instances and the synthetic
//! topical task.

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::embedding::{encode_sentence, tokenize, EmbeddingTable, EncodedSentence};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::training::Triple;

/// Draws allowed per negative before giving up (hard mode falls back to the
/// closest candidate seen, other modes skip or fail).
pub const MAX_DRAWS: usize = 1000;
pub const HARD_BAND: (f64, f64) = (0.7, 0.8);

pub type Sentence = Vec<String>;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PairCorpus {
    pub pairs: Vec<(Sentence, Sentence)>,
    pub provenance: String,
}

impl PairCorpus {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Every distinct token, sorted.
    pub fn tokens(&self) -> Vec<String> {
        let mut all: Vec<String> = self
            .pairs
            .iter()
            .flat_map(|(x, y)| x.iter().chain(y))
            .cloned()
            .collect();
        all.sort_unstable();
        all.dedup();
        all
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        for (x, y) in &self.pairs {
            writeln!(out, "{}\t{}", x.join(" "), y.join(" "))?;
        }
        Ok(())
    }
}

fn split_fields(line: &str, n: usize, lineno: usize, what: &str) -> Result<Vec<Sentence>> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != n {
        return Err(Error::Parse {
            line: lineno,
            msg: format!(
                "expected {n} TAB-separated fields ({what}), found {}",
                fields.len()
            ),
        });
    }
    fields
        .into_iter()
        .map(|f| {
            let t = tokenize(f);
            if t.is_empty() {
                Err(Error::Parse {
                    line: lineno,
                    msg: "empty sentence".into(),
                })
            } else {
                Ok(t)
            }
        })
        .collect()
}

fn data_lines<R: BufRead>(source: R) -> impl Iterator<Item = Result<(usize, String)>> {
    source
        .lines()
        .enumerate()
        .map(|(i, l)| l.map(|l| (i + 1, l)).map_err(Error::from))
        .filter(|r| !matches!(r, Ok((_, l)) if l.trim().is_empty()))
}

/// One pair per line: `x tokens TAB y tokens`. Blank lines are ignored.
pub fn load_pairs<R: BufRead>(source: R) -> Result<PairCorpus> {
    let mut pairs = Vec::new();
    for item in data_lines(source) {
        let (n, line) = item?;
        let mut f = split_fields(&line, 2, n, "x, y")?;
        let y = f.pop().expect("two fields");
        let x = f.pop().expect("two fields");
        pairs.push((x, y));
    }
    Ok(PairCorpus {
        pairs,
        provenance: String::new(),
    })
}

/// Labeled pairs: `x TAB y TAB label` with label `1` (match) or `0`.
pub fn load_labeled_pairs<R: BufRead>(source: R) -> Result<Vec<(Sentence, Sentence, bool)>> {
    let mut out = Vec::new();
    for item in data_lines(source) {
        let (n, line) = item?;
        let (text, label) = line.rsplit_once('\t').ok_or_else(|| Error::Parse {
            line: n,
            msg: "expected x TAB y TAB label".into(),
        })?;
        let label = match label.trim() {
            "1" => true,
            "0" => false,
            other => {
                return Err(Error::Parse {
                    line: n,
                    msg: format!("label must be 0 or 1, found {other:?}"),
                })
            }
        };
        let mut f = split_fields(text, 2, n, "x, y, label")?;
        let y = f.pop().expect("two fields");
        let x = f.pop().expect("two fields");
        out.push((x, y, label));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenTriple {
    pub x: Sentence,
    pub y_pos: Sentence,
    pub y_neg: Sentence,
}

/// Triple file: `x TAB y+ TAB y-` per line.
pub fn load_triples<R: BufRead>(source: R) -> Result<Vec<TokenTriple>> {
    let mut out = Vec::new();
    for item in data_lines(source) {
        let (n, line) = item?;
        let mut f = split_fields(&line, 3, n, "x, y+, y-")?;
        let y_neg = f.pop().expect("three fields");
        let y_pos = f.pop().expect("three fields");
        let x = f.pop().expect("three fields");
        out.push(TokenTriple { x, y_pos, y_neg });
    }
    Ok(out)
}

pub fn write_triples<W: Write>(triples: &[TokenTriple], mut out: W) -> Result<()> {
    for t in triples {
        writeln!(
            out,
            "{}\t{}\t{}",
            t.x.join(" "),
            t.y_pos.join(" "),
            t.y_neg.join(" ")
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NegativeMode {
    Random,
    Hard,
    Shuffle,
}

impl fmt::Display for NegativeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NegativeMode::Random => "random",
            NegativeMode::Hard => "hard",
            NegativeMode::Shuffle => "shuffle",
        })
    }
}

impl FromStr for NegativeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(NegativeMode::Random),
            "hard" => Ok(NegativeMode::Hard),
            "shuffle" => Ok(NegativeMode::Shuffle),
            _ => Err(Error::Config(format!(
                "unknown negative mode {s:?} (expected random, hard, shuffle)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SamplingStats {
    pub emitted: usize,
    /// Hard negatives taken as the closest-to-band fallback.
    pub hard_fallbacks: usize,
    /// Positives skipped because no distinct permutation exists.
    pub shuffle_skipped: usize,
}

impl SamplingStats {
    pub fn fallback_fraction(&self) -> f64 {
        if self.emitted == 0 {
            0.0
        } else {
            self.hard_fallbacks as f64 / self.emitted as f64
        }
    }
}

/// Sum of the word vectors of a sentence (unknown words map to `<unk>`).
pub fn sum_vector<T: Scalar>(tokens: &[String], table: &EmbeddingTable<T>) -> Vec<f64> {
    let mut s = vec![0.0; table.dim()];
    for t in tokens {
        for (a, v) in s.iter_mut().zip(table.vector(table.vocab().id(t))) {
            *a += v.to_f64_lossy();
        }
    }
    s
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

struct Sampler<'a> {
    corpus: &'a PairCorpus,
    mode: NegativeMode,
    sums: Vec<Vec<f64>>,
}

impl<'a> Sampler<'a> {
    fn new<T: Scalar>(
        corpus: &'a PairCorpus,
        mode: NegativeMode,
        table: Option<&EmbeddingTable<T>>,
        m: usize,
    ) -> Result<Self> {
        if m == 0 {
            return Err(Error::Config(
                "need at least one negative per positive".into(),
            ));
        }
        if corpus
            .pairs
            .iter()
            .any(|(x, y)| x.is_empty() || y.is_empty())
        {
            return Err(Error::Input("corpus contains an empty sentence".into()));
        }
        if mode != NegativeMode::Shuffle {
            let distinct: HashSet<&Sentence> = corpus.pairs.iter().map(|(_, y)| y).collect();
            if distinct.len() < 2 {
                return Err(Error::Input(format!(
                    "corpus has {} distinct responses; sampling negatives needs at least 2",
                    distinct.len()
                )));
            }
        }
        let sums = match (mode, table) {
            (NegativeMode::Hard, Some(t)) => {
                corpus.pairs.iter().map(|(_, y)| sum_vector(y, t)).collect()
            }
            (NegativeMode::Hard, None) => {
                return Err(Error::Config(
                    "hard negatives need an embedding table".into(),
                ))
            }
            _ => Vec::new(),
        };
        Ok(Self { corpus, mode, sums })
    }

    /// One negative for pair `i` not in `taken`; `None` when the draw cap is
    /// hit (random/shuffle). The flag marks a hard-mode fallback.
    fn draw(&self, i: usize, taken: &[&Sentence], rng: &mut Rng) -> Option<(Sentence, bool)> {
        let y_pos = &self.corpus.pairs[i].1;
        let n = self.corpus.len();
        match self.mode {
            NegativeMode::Random => (0..MAX_DRAWS).find_map(|_| {
                let j = rng.below(n);
                let y = &self.corpus.pairs[j].1;
                (j != i && y != y_pos && !taken.contains(&y)).then(|| (y.clone(), false))
            }),
            NegativeMode::Shuffle => {
                if y_pos.iter().all(|t| t == &y_pos[0]) {
                    return None;
                }
                (0..MAX_DRAWS).find_map(|_| {
                    let mut y = y_pos.clone();
                    rng.shuffle(&mut y);
                    (&y != y_pos && !taken.contains(&&y)).then_some((y, false))
                })
            }
            NegativeMode::Hard => {
                let mut best: Option<(f64, usize)> = None;
                for _ in 0..MAX_DRAWS {
                    let j = rng.below(n);
                    let y = &self.corpus.pairs[j].1;
                    if j == i || y == y_pos || taken.contains(&y) {
                        continue;
                    }
                    let c = cosine(&self.sums[i], &self.sums[j]);
                    if (HARD_BAND.0..=HARD_BAND.1).contains(&c) {
                        return Some((y.clone(), false));
                    }
                    let gap = (c - 0.75).abs();
                    if best.is_none_or(|(g, _)| gap < g) {
                        best = Some((gap, j));
                    }
                }
                best.map(|(_, j)| (self.corpus.pairs[j].1.clone(), true))
            }
        }
    }
}

/// `m` triples per positive pair. Shuffle mode skips (and counts) positives
/// whose words admit no distinct order.
pub fn sample_negatives<T: Scalar>(
    corpus: &PairCorpus,
    m: usize,
    mode: NegativeMode,
    table: Option<&EmbeddingTable<T>>,
    rng: &mut Rng,
) -> Result<(Vec<TokenTriple>, SamplingStats)> {
    let sampler = Sampler::new(corpus, mode, table, m)?;
    let mut stats = SamplingStats::default();
    let mut out = Vec::with_capacity(corpus.len() * m);
    for (i, (x, y)) in corpus.pairs.iter().enumerate() {
        for _ in 0..m {
            match sampler.draw(i, &[], rng) {
                Some((y_neg, fallback)) => {
                    stats.emitted += 1;
                    stats.hard_fallbacks += usize::from(fallback);
                    out.push(TokenTriple {
                        x: x.clone(),
                        y_pos: y.clone(),
                        y_neg,
                    });
                }
                None if mode == NegativeMode::Shuffle => {
                    stats.shuffle_skipped += 1;
                    break;
                }
                None => {
                    return Err(Error::Input(format!(
                        "no distinct negative found for pair {}",
                        i + 1
                    )))
                }
            }
        }
    }
    Ok((out, stats))
}

/// A query with `m + 1` distinct candidate responses, one of them true.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankingInstance {
    pub x: Sentence,
    pub candidates: Vec<Sentence>,
    pub answer: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedInstance<T> {
    pub x: EncodedSentence<T>,
    pub candidates: Vec<EncodedSentence<T>>,
    pub answer: usize,
}

/// One instance per positive pair with `m` distinct negatives, candidates
/// in shuffled order.
pub fn make_eval_instances<T: Scalar>(
    corpus: &PairCorpus,
    m: usize,
    mode: NegativeMode,
    table: Option<&EmbeddingTable<T>>,
    rng: &mut Rng,
) -> Result<(Vec<RankingInstance>, SamplingStats)> {
    let sampler = Sampler::new(corpus, mode, table, m)?;
    if mode != NegativeMode::Shuffle {
        let distinct: HashSet<&Sentence> = corpus.pairs.iter().map(|(_, y)| y).collect();
        if distinct.len() < m + 1 {
            return Err(Error::Input(format!(
                "{} distinct responses cannot fill {} candidates",
                distinct.len(),
                m + 1
            )));
        }
    }
    let mut stats = SamplingStats::default();
    let mut out = Vec::with_capacity(corpus.len());
    'pairs: for (i, (x, y)) in corpus.pairs.iter().enumerate() {
        let mut negatives: Vec<Sentence> = Vec::with_capacity(m);
        let mut fallbacks = 0;
        while negatives.len() < m {
            let taken: Vec<&Sentence> = negatives.iter().collect();
            match sampler.draw(i, &taken, rng) {
                Some((neg, fallback)) => {
                    fallbacks += usize::from(fallback);
                    negatives.push(neg);
                }
                None if mode == NegativeMode::Shuffle => {
                    stats.shuffle_skipped += 1;
                    continue 'pairs;
                }
                None => {
                    return Err(Error::Input(format!(
                        "no distinct negatives found for pair {}",
                        i + 1
                    )))
                }
            }
        }
        stats.emitted += m;
        stats.hard_fallbacks += fallbacks;
        let mut candidates = negatives;
        candidates.push(y.clone());
        let mut order: Vec<usize> = (0..=m).collect();
        rng.shuffle(&mut order);
        let answer = order
            .iter()
            .position(|&k| k == m)
            .expect("true candidate present");
        let candidates = order.into_iter().map(|k| candidates[k].clone()).collect();
        out.push(RankingInstance {
            x: x.clone(),
            candidates,
            answer,
        });
    }
    Ok((out, stats))
}

pub fn encode_triples<T: Scalar>(
    triples: &[TokenTriple],
    table: &EmbeddingTable<T>,
    (l_max_x, l_max_y): (usize, usize),
) -> Result<Vec<Triple<T>>> {
    triples
        .iter()
        .map(|t| {
            Ok(Triple {
                x: encode_sentence(&t.x, table, l_max_x)?,
                y_pos: encode_sentence(&t.y_pos, table, l_max_y)?,
                y_neg: encode_sentence(&t.y_neg, table, l_max_y)?,
            })
        })
        .collect()
}

pub fn encode_instances<T: Scalar>(
    instances: &[RankingInstance],
    table: &EmbeddingTable<T>,
    (l_max_x, l_max_y): (usize, usize),
) -> Result<Vec<EncodedInstance<T>>> {
    instances
        .iter()
        .map(|inst| {
            Ok(EncodedInstance {
                x: encode_sentence(&inst.x, table, l_max_x)?,
                candidates: inst
                    .candidates
                    .iter()
                    .map(|y| encode_sentence(y, table, l_max_y))
                    .collect::<Result<Vec<_>>>()?,
                answer: inst.answer,
            })
        })
        .collect()
}

/// Parameters of the synthetic topical matching task.
///
/// Each topic owns `lexicon` query words `q<t>_<a>` and as many paired
/// response words `r<t>_<a>`; the remaining vocabulary is filler `f<k>`.
/// A pair picks a topic and a few of its word indices in random order; x
/// carries the query words and y the paired response words in that same
/// order, each at random positions among filler. The true y is recognizable
/// by topical co-occurrence, and its word order is right only relative to x,
/// so a shuffled copy of y is detectably wrong while looking, on its own,
/// exactly like a genuine response.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_pairs: usize,
    pub vocab_size: usize,
    /// Inclusive sentence length range.
    pub len_range: (usize, usize),
    pub n_topics: usize,
    pub lexicon: usize,
    /// Inclusive range of topical words per sentence.
    pub topical: (usize, usize),
}

impl SynthConfig {
    pub fn new(
        n_pairs: usize,
        vocab_size: usize,
        len_range: (usize, usize),
        n_topics: usize,
    ) -> Self {
        Self {
            n_pairs,
            vocab_size,
            len_range,
            n_topics,
            lexicon: 6,
            topical: (3, 4),
        }
    }

    pub fn filler(&self) -> usize {
        self.vocab_size
            .saturating_sub(2 * self.n_topics * self.lexicon)
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.len_range;
        let (tlo, thi) = self.topical;
        let mut problems = Vec::new();
        if self.n_topics < 2 {
            problems.push(format!("need at least 2 topics, got {}", self.n_topics));
        }
        if tlo < 2 || tlo > thi {
            problems.push(format!(
                "topical word range {tlo}..={thi} must start at 2 or more"
            ));
        }
        if self.lexicon < thi {
            problems.push(format!(
                "lexicon of {} cannot supply {thi} distinct topical words",
                self.lexicon
            ));
        }
        if lo < thi || lo > hi {
            problems.push(format!(
                "length range {lo}..={hi} must be ordered and hold {thi} topical words"
            ));
        }
        let needs_filler = usize::from(hi > tlo);
        if 2 * self.n_topics * self.lexicon + needs_filler > self.vocab_size {
            problems.push(format!(
                "vocabulary of {} is too small for {} topics x {} paired words plus filler",
                self.vocab_size, self.n_topics, self.lexicon
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

pub fn query_word(topic: usize, a: usize) -> String {
    format!("q{topic}_{a}")
}

pub fn response_word(topic: usize, a: usize) -> String {
    format!("r{topic}_{a}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub corpus: PairCorpus,
    /// Topic of each pair.
    pub topics: Vec<usize>,
    /// Whole vocabulary, sorted.
    pub tokens: Vec<String>,
}

fn place(words: Vec<String>, len: usize, filler: usize, rng: &mut Rng) -> Sentence {
    let mut slots: Vec<usize> = (0..len).collect();
    rng.shuffle(&mut slots);
    let mut slots = slots[..words.len()].to_vec();
    slots.sort_unstable();
    let mut out: Vec<String> = (0..len)
        .map(|_| format!("f{}", rng.below(filler.max(1))))
        .collect();
    for (s, w) in slots.into_iter().zip(words) {
        out[s] = w;
    }
    out
}

/// Draws `n_pairs` distinct pairs; duplicates are redrawn.
pub fn gen_synthetic_corpus(cfg: &SynthConfig, rng: &mut Rng) -> Result<SynthCorpus> {
    cfg.validate()?;
    let mut pairs = Vec::with_capacity(cfg.n_pairs);
    let mut topics = Vec::with_capacity(cfg.n_pairs);
    let mut seen = HashSet::new();
    let mut draws = 0;
    while pairs.len() < cfg.n_pairs {
        draws += 1;
        if draws > MAX_DRAWS * cfg.n_pairs.max(1) {
            return Err(Error::Config(format!(
                "only {} distinct pairs found after {draws} draws; widen the vocabulary or length range",
                pairs.len()
            )));
        }
        let topic = rng.below(cfg.n_topics);
        let c = rng.between(cfg.topical.0, cfg.topical.1);
        let mut idx: Vec<usize> = (0..cfg.lexicon).collect();
        rng.shuffle(&mut idx);
        idx.truncate(c);
        let lx = rng.between(cfg.len_range.0, cfg.len_range.1);
        let ly = rng.between(cfg.len_range.0, cfg.len_range.1);
        let x = place(
            idx.iter().map(|&a| query_word(topic, a)).collect(),
            lx,
            cfg.filler(),
            rng,
        );
        let y = place(
            idx.iter().map(|&a| response_word(topic, a)).collect(),
            ly,
            cfg.filler(),
            rng,
        );
        if seen.insert((x.clone(), y.clone())) {
            pairs.push((x, y));
            topics.push(topic);
        }
    }
    let mut tokens: Vec<String> = (0..cfg.n_topics)
        .flat_map(|t| (0..cfg.lexicon).flat_map(move |a| [query_word(t, a), response_word(t, a)]))
        .chain((0..cfg.filler()).map(|k| format!("f{k}")))
        .collect();
    tokens.sort_unstable();
    let provenance = format!(
        "synthetic topical task: pairs={} vocab={} topics={} lexicon={} len={}..={} topical={}..={} seed={}",
        cfg.n_pairs,
        cfg.vocab_size,
        cfg.n_topics,
        cfg.lexicon,
        cfg.len_range.0,
        cfg.len_range.1,
        cfg.topical.0,
        cfg.topical.1,
        rng.seed()
    );
    Ok(SynthCorpus {
        corpus: PairCorpus { pairs, provenance },
        topics,
        tokens,
    })
}
