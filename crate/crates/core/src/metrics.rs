//! Ranking and classification metrics.

use std::fmt;

use rayon::prelude::*;

use crate::data::EncodedInstance;
use crate::error::{Error, Result};
use crate::model::MatchModel;
use crate::scalar::Scalar;
use crate::training::Triple;

/// Summary of a set of score margins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginStats {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    /// Fraction of margins at least 1, i.e. triples with zero hinge loss.
    pub frac_satisfied: f64,
}

impl MarginStats {
    pub fn from_margins(margins: &[f64]) -> Self {
        if margins.is_empty() {
            return Self {
                count: 0,
                mean: 0.0,
                median: 0.0,
                frac_satisfied: 0.0,
            };
        }
        let n = margins.len();
        let mut sorted = margins.to_vec();
        sorted.sort_by(f64::total_cmp);
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        Self {
            count: n,
            mean: margins.iter().sum::<f64>() / n as f64,
            median,
            frac_satisfied: margins.iter().filter(|&&m| m >= 1.0).count() as f64 / n as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub metric: String,
    pub value: f64,
    pub count: usize,
    /// Secondary metrics, e.g. F1 next to accuracy.
    pub extra: Vec<(String, f64)>,
    /// For ranking: true-candidate score minus the best competitor per instance.
    pub margins: Option<MarginStats>,
}

impl EvalReport {
    /// Machine-readable `key=value` lines.
    pub fn to_kv(&self) -> String {
        let mut out = format!(
            "metric={}\nvalue={:.6}\ncount={}\n",
            self.metric, self.value, self.count
        );
        for (k, v) in &self.extra {
            out.push_str(&format!("{k}={v:.6}\n"));
        }
        if let Some(m) = &self.margins {
            out.push_str(&format!(
                "margin_mean={:.6}\nmargin_median={:.6}\nmargin_frac_ge_1={:.6}\n",
                m.mean, m.median, m.frac_satisfied
            ));
        }
        out
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut rows = vec![
            (self.metric.clone(), format!("{:.4}", self.value)),
            ("count".into(), self.count.to_string()),
        ];
        rows.extend(
            self.extra
                .iter()
                .map(|(k, v)| (k.clone(), format!("{v:.4}"))),
        );
        if let Some(m) = &self.margins {
            rows.push(("margin mean".into(), format!("{:.4}", m.mean)));
            rows.push(("margin median".into(), format!("{:.4}", m.median)));
            rows.push(("margin >= 1".into(), format!("{:.4}", m.frac_satisfied)));
        }
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        for (k, v) in rows {
            writeln!(f, "{k:<width$}  {v:>10}")?;
        }
        Ok(())
    }
}

fn check_ranking(scores: &[Vec<f64>], answers: &[usize]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::Input("no ranking instances".into()));
    }
    if scores.len() != answers.len() {
        return Err(Error::Input(format!(
            "{} score lists for {} answers",
            scores.len(),
            answers.len()
        )));
    }
    for (i, (s, &a)) in scores.iter().zip(answers).enumerate() {
        if a >= s.len() {
            return Err(Error::Input(format!(
                "instance {i}: answer {a} out of {} candidates",
                s.len()
            )));
        }
    }
    Ok(())
}

/// P@1 where an instance counts only if the true candidate is the strict maximum.
pub fn p_at_1_from_scores(scores: &[Vec<f64>], answers: &[usize]) -> Result<EvalReport> {
    check_ranking(scores, answers)?;
    let mut hits = 0;
    let mut margins = Vec::with_capacity(scores.len());
    for (s, &a) in scores.iter().zip(answers) {
        let best_other = s
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != a)
            .map(|(_, &v)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        if s[a] > best_other {
            hits += 1;
        }
        margins.push(s[a] - best_other);
    }
    Ok(EvalReport {
        metric: "p_at_1".into(),
        value: hits as f64 / scores.len() as f64,
        count: scores.len(),
        extra: Vec::new(),
        margins: Some(MarginStats::from_margins(&margins)),
    })
}

/// Expected P@1 when ties for the top score are broken uniformly at random:
/// an instance whose true candidate shares the maximum with `k - 1` others
/// contributes `1/k`.
pub fn p_at_1_tie_averaged_from_scores(
    scores: &[Vec<f64>],
    answers: &[usize],
) -> Result<EvalReport> {
    check_ranking(scores, answers)?;
    let mut total = 0.0;
    for (s, &a) in scores.iter().zip(answers) {
        let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if s[a] == max {
            total += 1.0 / s.iter().filter(|&&v| v == max).count() as f64;
        }
    }
    Ok(EvalReport {
        metric: "p_at_1_tie_averaged".into(),
        value: total / scores.len() as f64,
        count: scores.len(),
        extra: Vec::new(),
        margins: None,
    })
}

/// Score every candidate of every instance, in instance order.
pub fn score_instances<T: Scalar, M: MatchModel<T>>(
    model: &M,
    instances: &[EncodedInstance<T>],
) -> Result<Vec<Vec<f64>>> {
    instances
        .par_iter()
        .map(|inst| {
            inst.candidates
                .iter()
                .map(|y| model.score(&inst.x, y).map(|s| s.to_f64_lossy()))
                .collect::<Result<Vec<f64>>>()
        })
        .collect()
}

pub fn p_at_1<T: Scalar, M: MatchModel<T>>(
    model: &M,
    instances: &[EncodedInstance<T>],
) -> Result<EvalReport> {
    let answers: Vec<usize> = instances.iter().map(|i| i.answer).collect();
    p_at_1_from_scores(&score_instances(model, instances)?, &answers)
}

pub fn p_at_1_tie_averaged<T: Scalar, M: MatchModel<T>>(
    model: &M,
    instances: &[EncodedInstance<T>],
) -> Result<EvalReport> {
    let answers: Vec<usize> = instances.iter().map(|i| i.answer).collect();
    p_at_1_tie_averaged_from_scores(&score_instances(model, instances)?, &answers)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn new(scores: &[f64], labels: &[bool], threshold: f64) -> Self {
        let mut c = Confusion {
            tp: 0,
            fp: 0,
            tn: 0,
            fn_: 0,
        };
        for (&s, &l) in scores.iter().zip(labels) {
            match (s >= threshold, l) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / (self.tp + self.tn + self.fp + self.fn_) as f64
    }

    /// F1 of the match class; 0 when nothing is predicted positive.
    pub fn f1(&self) -> f64 {
        if self.tp == 0 {
            return 0.0;
        }
        let p = self.tp as f64 / (self.tp + self.fp) as f64;
        let r = self.tp as f64 / (self.tp + self.fn_) as f64;
        2.0 * p * r / (p + r)
    }
}

/// Accuracy and F1 when predicting a match iff `score >= threshold`.
pub fn classify_from_scores(scores: &[f64], labels: &[bool], threshold: f64) -> Result<EvalReport> {
    if scores.is_empty() {
        return Err(Error::Input("no labeled pairs".into()));
    }
    if scores.len() != labels.len() {
        return Err(Error::Input(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let c = Confusion::new(scores, labels, threshold);
    Ok(EvalReport {
        metric: "accuracy".into(),
        value: c.accuracy(),
        count: scores.len(),
        extra: vec![("f1".into(), c.f1()), ("threshold".into(), threshold)],
        margins: None,
    })
}

/// Threshold maximizing accuracy on a dev split, searched over score
/// quantiles (at most 101 candidates). Ties keep the lowest threshold.
pub fn select_threshold(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.is_empty() || scores.len() != labels.len() {
        return Err(Error::Input(
            "threshold selection needs matching, nonempty scores and labels".into(),
        ));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut grid: Vec<f64> = (0..=100).map(|q| sorted[(q * (n - 1)) / 100]).collect();
    grid.push(f64::INFINITY);
    grid.dedup();
    let mut best = (f64::NEG_INFINITY, grid[0]);
    for t in grid {
        let acc = Confusion::new(scores, labels, t).accuracy();
        if acc > best.0 {
            best = (acc, t);
        }
    }
    Ok(best.1)
}

pub fn classify_eval<T: Scalar, M: MatchModel<T>>(
    model: &M,
    pairs: &[(
        crate::embedding::EncodedSentence<T>,
        crate::embedding::EncodedSentence<T>,
        bool,
    )],
    threshold: f64,
) -> Result<EvalReport> {
    let scores = pairs
        .par_iter()
        .map(|(x, y, _)| model.score(x, y).map(|s| s.to_f64_lossy()))
        .collect::<Result<Vec<f64>>>()?;
    let labels: Vec<bool> = pairs.iter().map(|p| p.2).collect();
    classify_from_scores(&scores, &labels, threshold)
}

/// Distribution of `s(x, y+) - s(x, y-)` over triples.
pub fn margin_stats<T: Scalar, M: MatchModel<T>>(
    model: &M,
    triples: &[Triple<T>],
) -> Result<MarginStats> {
    let margins = triples
        .par_iter()
        .map(|t| {
            Ok(model.score(&t.x, &t.y_pos)?.to_f64_lossy()
                - model.score(&t.x, &t.y_neg)?.to_f64_lossy())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(MarginStats::from_margins(&margins))
}
