//! Vocabulary, word vectors, and conversion of token sequences into padded
//! sentence matrices.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const UNK: &str = "<unk>";
pub const UNK_ID: usize = 0;

/// Token <-> index map. Index 0 is always `<unk>`.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    index: HashMap<String, usize>,
    tokens: Vec<String>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocabulary {
    pub fn new() -> Self {
        let mut index = HashMap::new();
        index.insert(UNK.to_string(), UNK_ID);
        Self {
            index,
            tokens: vec![UNK.to_string()],
        }
    }

    /// Adds `token`, returning its index, or `None` if it was already present.
    pub fn insert(&mut self, token: &str) -> Option<usize> {
        if self.index.contains_key(token) {
            return None;
        }
        let id = self.tokens.len();
        self.index.insert(token.to_string(), id);
        self.tokens.push(token.to_string());
        Some(id)
    }

    /// Index of `token`, falling back to `<unk>`.
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Word vectors indexed by a [`Vocabulary`]; `vectors` is `[V × dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable<T> {
    vocab: Vocabulary,
    dim: usize,
    vectors: Tensor<T>,
}

impl<T: Scalar> EmbeddingTable<T> {
    pub fn new(vocab: Vocabulary, vectors: Tensor<T>) -> Result<Self> {
        if vectors.rank() != 2 || vectors.shape()[0] != vocab.len() {
            return Err(Error::Dimension(format!(
                "embedding matrix {:?} does not match vocabulary of {} entries",
                vectors.shape(),
                vocab.len()
            )));
        }
        let dim = vectors.shape()[1];
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        if let Some(i) = (0..vocab.len()).find(|&i| vectors.row(i).iter().all(|v| v.is_zero())) {
            return Err(Error::Input(format!(
                "embedding for {:?} is all-zero and would be gated off as padding",
                vocab.token(i)
            )));
        }
        Ok(Self {
            vocab,
            dim,
            vectors,
        })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vectors(&self) -> &Tensor<T> {
        &self.vectors
    }

    pub fn vectors_mut(&mut self) -> &mut Tensor<T> {
        &mut self.vectors
    }

    pub fn vector(&self, id: usize) -> &[T] {
        self.vectors.row(id)
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Write in word2vec text format, `<unk>` first, so that [`load_embeddings`]
    /// restores the table exactly.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{} {}", self.len(), self.dim)?;
        for (id, tok) in self.vocab.tokens().iter().enumerate() {
            write!(out, "{tok}")?;
            for v in self.vector(id) {
                write!(out, " {}", v.to_f64_lossy())?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Parse word2vec text: a `"V D"` header, then `V` lines `token v_1 … v_D`.
///
/// The `<unk>` row is the mean of all loaded vectors, unless the file itself
/// carries a `<unk>` line, in which case that vector is used as-is.
pub fn load_embeddings<T: Scalar, R: BufRead>(source: R) -> Result<EmbeddingTable<T>> {
    let mut lines = source.lines();
    let header = match lines.next() {
        Some(l) => l?,
        None => {
            return Err(Error::Parse {
                line: 1,
                msg: "missing header".into(),
            })
        }
    };
    let fields: Vec<&str> = header.split_whitespace().collect();
    let parse_count = |s: &str| s.parse::<usize>().ok().filter(|&n| n > 0);
    let (count, dim) = match fields.as_slice() {
        [v, d] => match (parse_count(v), parse_count(d)) {
            (Some(v), Some(d)) => (v, d),
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    msg: format!("malformed header {header:?}"),
                })
            }
        },
        _ => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("malformed header {header:?}"),
            })
        }
    };

    let mut vocab = Vocabulary::new();
    let mut rows: Vec<f64> = vec![0.0; dim];
    let mut explicit_unk: Option<Vec<f64>> = None;
    let mut mean = vec![0.0f64; dim];
    let mut loaded = 0usize;
    for k in 0..count {
        let lineno = k + 2;
        let line = match lines.next() {
            Some(l) => l?,
            None => {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("expected {count} vectors, found {k}"),
                })
            }
        };
        let mut parts = line.split_whitespace();
        let token = parts.next().ok_or_else(|| Error::Parse {
            line: lineno,
            msg: "empty line".into(),
        })?;
        let values = parts
            .map(|p| p.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::Parse {
                line: lineno,
                msg: format!("bad number: {e}"),
            })?;
        if values.len() != dim {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected {dim} values, found {}", values.len()),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse {
                line: lineno,
                msg: "non-finite value".into(),
            });
        }
        if values.iter().all(|v| *v == 0.0) {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("all-zero vector for {token:?}"),
            });
        }
        if token == UNK {
            if explicit_unk.is_some() {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("duplicate token {token:?}"),
                });
            }
            explicit_unk = Some(values);
            continue;
        }
        if vocab.insert(token).is_none() {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("duplicate token {token:?}"),
            });
        }
        for (m, v) in mean.iter_mut().zip(&values) {
            *m += v;
        }
        rows.extend(values);
        loaded += 1;
    }

    let unk = match explicit_unk {
        Some(v) => v,
        None => {
            if loaded == 0 {
                return Err(Error::Parse {
                    line: 2,
                    msg: "no vectors to average for <unk>".into(),
                });
            }
            mean.iter().map(|m| m / loaded as f64).collect()
        }
    };
    rows[..dim].copy_from_slice(&unk);
    let vectors = Tensor::from_vec(
        &[vocab.len(), dim],
        rows.into_iter().map(T::from_f64_lossy).collect(),
    )?;
    EmbeddingTable::new(vocab, vectors)
}

/// Split on runs of whitespace. No other normalization.
pub fn tokenize(line: &str) -> Vec<String> {
    line.split_whitespace().map(str::to_string).collect()
}

/// A sentence as a padded `[L_max × D]` matrix plus its true length.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSentence<T> {
    pub ids: Vec<usize>,
    pub length: usize,
    pub truncated: bool,
    pub x: Tensor<T>,
}

impl<T: Scalar> EncodedSentence<T> {
    pub fn l_max(&self) -> usize {
        self.x.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.x.shape()[1]
    }

    pub fn cast<U: Scalar>(&self) -> EncodedSentence<U> {
        EncodedSentence {
            ids: self.ids.clone(),
            length: self.length,
            truncated: self.truncated,
            x: self.x.cast(),
        }
    }

    /// Rebuild the matrix from `ids` against (possibly updated) vectors.
    pub fn refresh(&mut self, table: &EmbeddingTable<T>) {
        for (i, &id) in self.ids.iter().enumerate() {
            self.x.row_mut(i).copy_from_slice(table.vector(id));
        }
    }
}

pub fn encode_sentence<T: Scalar, S: AsRef<str>>(
    tokens: &[S],
    table: &EmbeddingTable<T>,
    l_max: usize,
) -> Result<EncodedSentence<T>> {
    let ids: Vec<usize> = tokens
        .iter()
        .map(|t| table.vocab().id(t.as_ref()))
        .collect();
    encode_ids(&ids, table, l_max)
}

pub fn encode_ids<T: Scalar>(
    ids: &[usize],
    table: &EmbeddingTable<T>,
    l_max: usize,
) -> Result<EncodedSentence<T>> {
    if ids.is_empty() {
        return Err(Error::Input("cannot encode an empty sentence".into()));
    }
    if l_max == 0 {
        return Err(Error::Config(
            "maximum sentence length must be positive".into(),
        ));
    }
    let truncated = ids.len() > l_max;
    let ids: Vec<usize> = ids.iter().take(l_max).copied().collect();
    if let Some(&bad) = ids.iter().find(|&&id| id >= table.len()) {
        return Err(Error::Input(format!(
            "word index {bad} outside vocabulary of {}",
            table.len()
        )));
    }
    let mut x = Tensor::zeros(&[l_max, table.dim()]);
    for (i, &id) in ids.iter().enumerate() {
        x.row_mut(i).copy_from_slice(table.vector(id));
    }
    Ok(EncodedSentence {
        length: ids.len(),
        ids,
        truncated,
        x,
    })
}

/// Random table over `tokens` (sorted, deduplicated) plus `<unk>`, each
/// vector uniform in `[-1, 1]^dim` and never all-zero.
pub fn random_embeddings<T: Scalar, S: AsRef<str>>(
    tokens: &[S],
    dim: usize,
    rng: &mut Rng,
) -> Result<EmbeddingTable<T>> {
    if dim == 0 {
        return Err(Error::Config("embedding dimension must be positive".into()));
    }
    let mut sorted: Vec<&str> = tokens
        .iter()
        .map(AsRef::as_ref)
        .filter(|t| *t != UNK)
        .collect();
    sorted.sort_unstable();
    sorted.dedup();
    let mut vocab = Vocabulary::new();
    for t in sorted {
        vocab.insert(t);
    }
    let mut data = Vec::with_capacity(vocab.len() * dim);
    for _ in 0..vocab.len() {
        loop {
            let v: Vec<T> = (0..dim)
                .map(|_| T::from_f64_lossy(rng.uniform_range(-1.0, 1.0)))
                .collect();
            if v.iter().any(|x| !x.is_zero()) {
                data.extend(v);
                break;
            }
        }
    }
    let rows = vocab.len();
    EmbeddingTable::new(vocab, Tensor::from_vec(&[rows, dim], data)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_BY_THREE: &str = "2 3\ncat 1 2 3\ndog -1 0 0.5\n";

    #[test]
    fn load_counts_rows_and_mean_unk() {
        let t: EmbeddingTable<f64> = load_embeddings(TWO_BY_THREE.as_bytes()).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.dim(), 3);
        let cat = t.vector(t.vocab().id("cat"));
        let dog = t.vector(t.vocab().id("dog"));
        for d in 0..3 {
            assert_eq!(t.vector(UNK_ID)[d], (cat[d] + dog[d]) / 2.0);
        }
    }

    #[test]
    fn load_rejects_wrong_arity_with_line() {
        let err = load_embeddings::<f64, _>("2 3\ncat 1 2 3\ndog 1 2\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn load_rejects_duplicates_and_bad_header() {
        let err = load_embeddings::<f64, _>("2 1\na 1\na 2\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
        let err = load_embeddings::<f64, _>("two 1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn text_round_trip_is_exact() {
        let mut rng = Rng::new(4);
        let t: EmbeddingTable<f64> = random_embeddings(&["a", "b", "c"], 5, &mut rng).unwrap();
        let mut buf = Vec::new();
        t.write_text(&mut buf).unwrap();
        let back: EmbeddingTable<f64> = load_embeddings(buf.as_slice()).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn tokenize_cases() {
        assert_eq!(tokenize("the cat sat"), vec!["the", "cat", "sat"]);
        assert_eq!(tokenize("  a  b "), vec!["a", "b"]);
        assert!(tokenize("").is_empty());
    }

    #[test]
    fn encode_pads_maps_oov_and_truncates() {
        let t: EmbeddingTable<f64> = load_embeddings(TWO_BY_THREE.as_bytes()).unwrap();
        let s = encode_sentence(&["cat", "dog", "cat"], &t, 6).unwrap();
        assert_eq!(s.length, 3);
        assert!(!s.truncated);
        for i in 3..6 {
            assert!(s.x.row(i).iter().all(|v| *v == 0.0));
        }
        let s = encode_sentence(&["zebra"], &t, 2).unwrap();
        assert_eq!(s.x.row(0), t.vector(UNK_ID));
        let s = encode_sentence(&["cat"; 8], &t, 6).unwrap();
        assert_eq!(s.length, 6);
        assert!(s.truncated);
        let empty: [&str; 0] = [];
        assert!(matches!(
            encode_sentence(&empty, &t, 6),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn random_table_shape_and_determinism() {
        let toks: Vec<String> = (0..10).map(|i| format!("w{i}")).collect();
        let a: EmbeddingTable<f64> = random_embeddings(&toks, 4, &mut Rng::new(1)).unwrap();
        assert_eq!(a.len(), 11);
        assert!((0..a.len()).all(|i| a.vector(i).iter().any(|v| *v != 0.0)));
        let b: EmbeddingTable<f64> = random_embeddings(&toks, 4, &mut Rng::new(1)).unwrap();
        assert_eq!(a, b);
    }
}
