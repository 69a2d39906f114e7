//! The synthetic task carries topical signal that a bag of words can read
//! and order signal that it cannot.

use std::collections::HashSet;

use arcmatch::data::{
    gen_synthetic_corpus, make_eval_instances, sample_negatives, RankingInstance,
};
use arcmatch::metrics::p_at_1_from_scores;
use arcmatch::{NegativeMode, Rng, SynthConfig};

fn config(n_pairs: usize) -> SynthConfig {
    let mut cfg = SynthConfig::new(n_pairs, 70, (3, 5), 4);
    cfg.lexicon = 8;
    cfg.topical = (2, 3);
    cfg
}

/// Number of query words in `x` whose paired response word occurs in `y`.
fn overlap(x: &[String], y: &[String]) -> f64 {
    let wanted: HashSet<String> = x
        .iter()
        .filter_map(|w| w.strip_prefix('q'))
        .map(|rest| format!("r{rest}"))
        .collect();
    let present: HashSet<&String> = y.iter().collect();
    wanted.iter().filter(|w| present.contains(w)).count() as f64
}

fn bow_p_at_1(instances: &[RankingInstance]) -> f64 {
    let scores: Vec<Vec<f64>> = instances
        .iter()
        .map(|i| i.candidates.iter().map(|c| overlap(&i.x, c)).collect())
        .collect();
    let answers: Vec<usize> = instances.iter().map(|i| i.answer).collect();
    p_at_1_from_scores(&scores, &answers).unwrap().value
}

#[test]
fn bag_of_words_separates_random_but_not_shuffled_negatives() {
    for seed in 1..=3 {
        let syn = gen_synthetic_corpus(&config(1000), &mut Rng::new(seed)).unwrap();
        let mut rng = Rng::new(seed + 10);
        let (random, _) =
            make_eval_instances::<f64>(&syn.corpus, 4, NegativeMode::Random, None, &mut rng)
                .unwrap();
        let (shuffled, stats) =
            make_eval_instances::<f64>(&syn.corpus, 4, NegativeMode::Shuffle, None, &mut rng)
                .unwrap();
        let (r, s) = (bow_p_at_1(&random), bow_p_at_1(&shuffled));
        assert!(r > 0.9, "seed {seed}: random-negative P@1 {r}");
        assert!(s <= 0.25, "seed {seed}: shuffle-negative P@1 {s}");
        assert!(stats.shuffle_skipped < 10);
    }
}

#[test]
fn pairs_share_one_topic_and_shuffles_keep_the_words() {
    let syn = gen_synthetic_corpus(&config(300), &mut Rng::new(5)).unwrap();
    let topic_of = |w: &String| w[1..].split('_').next().unwrap().parse::<usize>().unwrap();
    for ((x, y), &t) in syn.corpus.pairs.iter().zip(&syn.topics) {
        let qs: Vec<&String> = x.iter().filter(|w| w.starts_with('q')).collect();
        let rs: Vec<&String> = y.iter().filter(|w| w.starts_with('r')).collect();
        assert!(qs.len() >= 2 && qs.len() == rs.len());
        assert!(qs.iter().chain(&rs).all(|w| topic_of(w) == t));
        let paired: Vec<String> = qs.iter().map(|w| format!("r{}", &w[1..])).collect();
        assert_eq!(
            paired,
            rs.iter().map(|w| w.to_string()).collect::<Vec<_>>(),
            "response order follows the query"
        );
    }
    let (triples, _) = sample_negatives::<f64>(
        &syn.corpus,
        3,
        NegativeMode::Shuffle,
        None,
        &mut Rng::new(6),
    )
    .unwrap();
    for t in &triples {
        let (mut a, mut b) = (t.y_pos.clone(), t.y_neg.clone());
        a.sort();
        b.sort();
        assert_eq!(a, b);
        assert_ne!(t.y_pos, t.y_neg);
    }
}

#[test]
fn cross_topic_pairs_share_no_topical_words() {
    let syn = gen_synthetic_corpus(&config(200), &mut Rng::new(7)).unwrap();
    for (i, (x, _)) in syn.corpus.pairs.iter().enumerate() {
        for (j, (_, y)) in syn.corpus.pairs.iter().enumerate() {
            if syn.topics[i] != syn.topics[j] {
                assert_eq!(overlap(x, y), 0.0);
            }
        }
    }
}
