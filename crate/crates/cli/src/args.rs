//! Command-line surface and the `key=value` config file that can supply
//! defaults for any flag.

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use arcmatch::{Activation, ModelKind, NegativeMode};
use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

use crate::error::{io_err, CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "arcmatch",
    version,
    about = "Convolutional sentence matching (ARC-I / ARC-II) and baselines"
)]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalOpts {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,

    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,

    /// Reduce per-example gradients in a fixed order.
    #[arg(
        long,
        global = true,
        default_value_t = true,
        action = ArgAction::Set,
        num_args = 0..=1,
        default_missing_value = "true",
        value_name = "BOOL"
    )]
    pub deterministic: bool,

    /// File of `key=value` lines used as flag defaults.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

impl Default for GlobalOpts {
    fn default() -> Self {
        Self {
            seed: 1,
            threads: None,
            deterministic: true,
            config: None,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the synthetic topical matching task as train/val/test pair files.
    GenSynth(GenSynthArgs),
    /// Train a model on triples and write the best checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint by P@1 on ranking instances or accuracy/F1 on labeled pairs.
    Eval(EvalArgs),
    /// Print one score per sentence pair.
    Score(ScoreArgs),
    /// Compare analytic and finite-difference gradients on small random models.
    Gradcheck(GradcheckArgs),
}

/// Split proportions such as `80/10/10`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Split(pub [usize; 3]);

impl Split {
    /// Sizes `(train, val, test)` for `n` items; rounding leftovers go to train.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let total: usize = self.0.iter().sum();
        let val = n * self.0[1] / total;
        let test = n * self.0[2] / total;
        (n - val - test, val, test)
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<usize> = s
            .split('/')
            .map(|p| {
                p.trim()
                    .parse()
                    .map_err(|_| format!("bad split part {p:?}"))
            })
            .collect::<Result<_, _>>()?;
        match parts.as_slice() {
            [a, b, c] if *a > 0 && a + b + c > 0 => Ok(Split([*a, *b, *c])),
            [_, _, _] => Err("the train share must be positive".into()),
            _ => Err(format!("expected TRAIN/VAL/TEST, got {s:?}")),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.0[0], self.0[1], self.0[2])
    }
}

#[derive(Debug, Clone, Args)]
pub struct GenSynthArgs {
    /// Output directory for train.tsv, val.tsv, test.tsv and manifest.txt.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,

    #[arg(long, default_value_t = 1000)]
    pub pairs: usize,

    #[arg(long, default_value = "80/10/10")]
    pub split: Split,

    /// Total vocabulary: paired topic words plus filler.
    #[arg(long, default_value_t = 70)]
    pub vocab: usize,

    #[arg(long, default_value_t = 4)]
    pub topics: usize,

    /// Query (and response) words per topic.
    #[arg(long, default_value_t = 8)]
    pub lexicon: usize,

    #[arg(long, default_value_t = 3)]
    pub min_len: usize,

    #[arg(long, default_value_t = 5)]
    pub max_len: usize,

    /// Fewest topic words per sentence.
    #[arg(long, default_value_t = 2)]
    pub topical_min: usize,

    /// Most topic words per sentence.
    #[arg(long, default_value_t = 3)]
    pub topical_max: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Random,
    Hard,
    Shuffle,
}

impl From<Mode> for NegativeMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Random => NegativeMode::Random,
            Mode::Hard => NegativeMode::Hard,
            Mode::Shuffle => NegativeMode::Shuffle,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Act {
    Relu,
    Sigmoid,
}

impl From<Act> for Activation {
    fn from(a: Act) -> Self {
        match a {
            Act::Relu => Activation::Relu,
            Act::Sigmoid => Activation::Sigmoid,
        }
    }
}

fn parse_kind(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|e: arcmatch::Error| e.to_string())
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// arc1, arc2, wordembed, senmlp or senna.
    #[arg(long, value_parser = parse_kind)]
    pub model: ModelKind,

    /// Positive pairs (x TAB y); negatives are sampled per `--negative-mode`.
    #[arg(
        long,
        value_name = "FILE",
        conflicts_with = "triples",
        required_unless_present = "triples"
    )]
    pub train: Option<PathBuf>,

    /// Ready-made triples (x TAB y+ TAB y-).
    #[arg(long, value_name = "FILE")]
    pub triples: Option<PathBuf>,

    /// Validation pairs for early stopping.
    #[arg(long, value_name = "FILE")]
    pub val: Option<PathBuf>,

    /// Pretrained vectors in word2vec text format.
    #[arg(long, value_name = "FILE", conflicts_with = "random_embeddings")]
    pub embeddings: Option<PathBuf>,

    /// Draw vectors uniformly in [-1, 1] for every token in the data.
    #[arg(long)]
    pub random_embeddings: bool,

    /// Dimension of random embeddings.
    #[arg(long, default_value_t = 50)]
    pub dim: usize,

    /// Checkpoint path; `<out>.vectors` and `<out>.history` are written beside it.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,

    /// Negatives sampled per positive pair.
    #[arg(long, default_value_t = 5)]
    pub negatives: usize,

    #[arg(long, value_enum, default_value_t = Mode::Random)]
    pub negative_mode: Mode,

    /// Negatives per validation ranking instance.
    #[arg(long, default_value_t = 4)]
    pub val_negatives: usize,

    /// `default` or a list such as `3x16,3x16` (window x features).
    #[arg(long, default_value = "default")]
    pub layers: String,

    /// Window of the default layers.
    #[arg(long, default_value_t = 3)]
    pub window: usize,

    /// Feature maps of the default layers.
    #[arg(long, default_value_t = 16)]
    pub features: usize,

    /// MLP hidden widths, e.g. `64` or `64,32`.
    #[arg(long, default_value = "32")]
    pub hidden: String,

    #[arg(long, value_enum, default_value_t = Act::Relu)]
    pub activation: Act,

    /// Padded sentence length; defaults to the longest sentence in the data.
    #[arg(long)]
    pub l_max: Option<usize>,

    /// Share one encoder between both sentences (ARC-I, SENNA).
    #[arg(long)]
    pub tie_weights: bool,

    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,

    #[arg(long, default_value_t = 128)]
    pub batch: usize,

    #[arg(long, default_value_t = 20)]
    pub epochs: usize,

    #[arg(long, default_value_t = 3)]
    pub patience: usize,

    #[arg(long, default_value_t = 0.0)]
    pub dropout: f64,

    /// Validate every N batches; 0 validates once per epoch.
    #[arg(long, default_value_t = 0)]
    pub eval_every: usize,

    /// Update the embedding rows along with the model.
    #[arg(long)]
    pub finetune_embeddings: bool,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,

    /// Pair file for ranking, or labeled pairs (x TAB y TAB 0|1) with `--classify`.
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,

    /// Vectors to encode with; defaults to `<checkpoint>.vectors`.
    #[arg(long, value_name = "FILE")]
    pub embeddings: Option<PathBuf>,

    /// Negatives per ranking instance.
    #[arg(long, default_value_t = 4, conflicts_with = "classify")]
    pub negatives: usize,

    #[arg(long, value_enum, default_value_t = Mode::Random, conflicts_with = "classify")]
    pub negative_mode: Mode,

    /// Binary classification of labeled pairs instead of ranking.
    #[arg(long)]
    pub classify: bool,

    /// Score threshold for `--classify`; chosen on the data when absent.
    #[arg(long, requires = "classify")]
    pub threshold: Option<f64>,

    /// Print `key=value` lines instead of a table.
    #[arg(long)]
    pub kv: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ScoreArgs {
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,

    #[arg(long, value_name = "FILE")]
    pub embeddings: Option<PathBuf>,

    /// First sentence (whitespace-tokenized).
    #[arg(long, requires = "y", conflicts_with = "pairs")]
    pub x: Option<String>,

    /// Second sentence.
    #[arg(long, requires = "x")]
    pub y: Option<String>,

    /// TSV of pairs to score, one per line.
    #[arg(long, value_name = "FILE", required_unless_present = "x")]
    pub pairs: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GradcheckArgs {
    /// A model kind or `all`.
    #[arg(long, default_value = "all")]
    pub model: String,

    /// Consecutive seeds to check, starting at `--seed`.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,

    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,

    #[arg(long, value_enum, default_value_t = Act::Relu)]
    pub activation: Act,

    /// Largest acceptable relative error.
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,

    /// Negate the bias gradients of the positive pass (test hook).
    #[arg(long, hide = true)]
    pub inject_bias_fault: bool,
}

impl GradcheckArgs {
    pub fn kinds(&self) -> CliResult<Vec<ModelKind>> {
        if self.model == "all" {
            Ok(ModelKind::ALL.to_vec())
        } else {
            Ok(vec![parse_kind(&self.model).map_err(CliError::Usage)?])
        }
    }
}

/// Global options that take a value, for locating the subcommand token.
const VALUED_GLOBALS: [&str; 3] = ["--seed", "--threads", "--config"];

fn config_path(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        let a = a.to_string_lossy();
        if a == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

/// Flags equivalent to a config file. `key = value` lines, `#` comments;
/// `key=true` becomes a bare `--key`, `key=false` is dropped.
pub fn config_flags(text: &str, path: &Path) -> CliResult<Vec<OsString>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CliError::Usage(format!(
                "{}:{}: expected key=value, got {line:?}",
                path.display(),
                n + 1
            ))
        })?;
        let key = k.trim().replace('_', "-");
        if key == "config" {
            return Err(CliError::Usage(format!(
                "{}:{}: config files cannot nest",
                path.display(),
                n + 1
            )));
        }
        match v.trim() {
            "true" if key != "deterministic" => out.push(format!("--{key}").into()),
            "false" if key != "deterministic" => {}
            v => out.push(format!("--{key}={v}").into()),
        }
    }
    Ok(out)
}

/// Parse `args`, splicing config-file flags in right after the subcommand
/// name so that explicit flags, coming later, override them.
pub fn parse(args: Vec<OsString>) -> CliResult<Cli> {
    let mut args = args;
    if let Some(path) = config_path(&args) {
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        let flags = config_flags(&text, &path)?;
        let mut i = 1;
        while i < args.len() {
            let a = args[i].to_string_lossy();
            if VALUED_GLOBALS.contains(&a.as_ref()) {
                i += 2;
            } else if a.starts_with('-') {
                i += 1;
            } else {
                break;
            }
        }
        let at = (i + 1).min(args.len());
        args.splice(at..at, flags);
    }
    Ok(Cli::try_parse_from(args)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn split_sizes() {
        let s: Split = "80/10/10".parse().unwrap();
        assert_eq!(s.sizes(1000), (800, 100, 100));
        assert_eq!(s.sizes(7), (7, 0, 0));
        assert!("80/10".parse::<Split>().is_err());
        assert!("0/50/50".parse::<Split>().is_err());
    }

    #[test]
    fn config_lines_become_flags() {
        let f = config_flags(
            "# c\nlr = 0.1\nfinetune_embeddings=true\ntie-weights=false\n\n",
            Path::new("c"),
        )
        .unwrap();
        assert_eq!(f, os(&["--lr=0.1", "--finetune-embeddings"]));
        assert!(config_flags("lr 0.1", Path::new("c")).is_err());
    }

    #[test]
    fn deterministic_flag_forms() {
        let base = ["arcmatch", "gradcheck"];
        let parse_with = |extra: &[&str]| {
            let mut v = base.to_vec();
            v.extend_from_slice(extra);
            parse(os(&v)).unwrap().global.deterministic
        };
        assert!(parse_with(&[]));
        assert!(parse_with(&["--deterministic"]));
        assert!(!parse_with(&["--deterministic=false"]));
    }

    #[test]
    fn later_flags_override_earlier() {
        let cli = parse(os(&[
            "arcmatch",
            "--seed",
            "3",
            "gradcheck",
            "--eps=1e-3",
            "--eps",
            "1e-6",
        ]))
        .unwrap();
        assert_eq!(cli.global.seed, 3);
        let Command::Gradcheck(g) = cli.command else {
            panic!("wrong subcommand")
        };
        assert_eq!(g.eps, 1e-6);
    }
}
