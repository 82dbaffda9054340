// SPDX-License-Identifier: MIT OR Apache-2.0

mod common;

use attnmark::{evaluate_corpus, match_m, sentence_report, Corpus, ScoreVector, Split};
use common::{brute_force_match, worked_pair_corpus, TestRng, S1_PRED, S2_PRED};
use num_rational::Ratio;
use proptest::prelude::*;

fn worked_pair_predictions() -> Vec<ScoreVector> {
    vec![
        ScoreVector::new("S1", S1_PRED.to_vec()),
        ScoreVector::new("S2", S2_PRED.to_vec()),
    ]
}

#[test]
fn worked_pair_sentence_scores() {
    let corpus = worked_pair_corpus();
    let preds = worked_pair_predictions();
    let expected = [
        ([0.0, 0.0, 0.6667, 0.5], 0.2917),
        ([1.0, 0.5, 0.3333, 0.5], 0.5833),
    ];
    for (p, (matches, r)) in preds.iter().zip(expected) {
        let report = sentence_report(corpus.get(&p.sentence_id).unwrap(), p).unwrap();
        for (got, want) in report.matches.iter().zip(matches) {
            assert!((got - want).abs() < 5e-5, "{got} vs {want}");
        }
        assert!((report.ranking_score - r).abs() < 5e-5);
    }
}

#[test]
fn worked_pair_corpus_match3_is_mean() {
    let report = evaluate_corpus(&worked_pair_corpus(), &worked_pair_predictions()).unwrap();
    assert_eq!(report.sentences, 2);
    assert!((report.matches[2] - 0.5).abs() < 1e-12);
}

#[test]
fn single_sentence_corpus_equals_sentence_report() {
    let full = worked_pair_corpus();
    let one = Corpus::new(Split::Dev, vec![full.get("S2").unwrap().clone()]).unwrap();
    let p = ScoreVector::new("S2", S2_PRED.to_vec());
    let corpus_report = evaluate_corpus(&one, std::slice::from_ref(&p)).unwrap();
    let sentence = sentence_report(one.get("S2").unwrap(), &p).unwrap();
    assert_eq!(corpus_report.matches, sentence.matches);
    assert_eq!(corpus_report.ranking_score, sentence.ranking_score);
}

#[test]
fn engine_matches_brute_force() {
    let mut rng = TestRng::new(21);
    for _ in 0..1000 {
        let n = rng.range(1, 10);
        let gold: Vec<Ratio<u32>> = (0..n).map(|_| Ratio::new(rng.below(10) as u32, 9)).collect();
        let levels = rng.range(2, 12);
        let predicted: Vec<f64> = (0..n).map(|_| rng.below(levels) as f64 / levels as f64).collect();
        for m in 1..=4 {
            let engine = match_m(&gold, &predicted, m).unwrap();
            let oracle = brute_force_match(&gold, &predicted, m);
            assert_eq!(engine.to_bits(), oracle.to_bits(), "gold {gold:?} pred {predicted:?} m {m}");
        }
    }
}

proptest! {
    #[test]
    fn match_is_bounded(
        gold in prop::collection::vec(0u32..10, 1..12),
        pred_seed in any::<u64>(),
        m in 1usize..6,
    ) {
        let mut rng = TestRng::new(pred_seed);
        let g: Vec<Ratio<u32>> = gold.iter().map(|&c| Ratio::new(c, 9)).collect();
        let p: Vec<f64> = (0..g.len()).map(|_| rng.unit()).collect();
        let v = match_m(&g, &p, m).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
    }

    #[test]
    fn increasing_transform_keeps_scores(
        gold in prop::collection::vec(0u32..10, 1..12),
        pred in prop::collection::vec(-5.0f64..5.0, 12),
        a in 0.1f64..10.0,
        b in -3.0f64..3.0,
    ) {
        let g: Vec<Ratio<u32>> = gold.iter().map(|&c| Ratio::new(c, 9)).collect();
        let p = &pred[..g.len()];
        let t: Vec<f64> = p.iter().map(|v| (a * v + b).exp()).collect();
        // Skip transforms that collapse distinct values through rounding.
        let distinct = |xs: &[f64]| {
            let mut v = xs.to_vec();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v.len()
        };
        prop_assume!(distinct(p) == distinct(&t));
        for m in 1..=4 {
            prop_assert_eq!(match_m(&g, p, m).unwrap(), match_m(&g, &t, m).unwrap());
        }
    }

    #[test]
    fn corpus_report_ignores_sentence_order(seed in any::<u64>(), rotate in 0usize..5) {
        let (_, corpus) = common::synthetic_pair(seed, 5, 1, 1, false);
        let mut rng = TestRng::new(seed ^ 1);
        let preds: Vec<ScoreVector> = corpus
            .sentences()
            .iter()
            .map(|s| ScoreVector::new(s.id(), (0..s.len()).map(|_| rng.unit()).collect()))
            .collect();
        let mut sentences = corpus.sentences().to_vec();
        sentences.rotate_left(rotate);
        let shuffled = Corpus::new(Split::Dev, sentences).unwrap();
        let mut rev = preds.clone();
        rev.reverse();
        prop_assert_eq!(
            evaluate_corpus(&corpus, &preds).unwrap(),
            evaluate_corpus(&shuffled, &rev).unwrap()
        );
    }
}

#[test]
fn argmax_invariance_thousand_trials() {
    let mut rng = TestRng::new(22);
    let transforms: [fn(f64) -> f64; 4] = [
        |x| x * 3.0 + 1.0,
        |x| x.powi(3),
        |x| (x * 2.0).exp(),
        |x| x.atan(),
    ];
    for trial in 0..1000 {
        let n = rng.range(1, 10);
        let gold: Vec<Ratio<u32>> = (0..n).map(|_| Ratio::new(rng.below(10) as u32, 9)).collect();
        let p: Vec<f64> = (0..n).map(|_| rng.unit() * 2.0 - 1.0).collect();
        let f = transforms[trial % transforms.len()];
        let t: Vec<f64> = p.iter().map(|&v| f(v)).collect();
        for m in 1..=4 {
            assert_eq!(match_m(&gold, &p, m).unwrap(), match_m(&gold, &t, m).unwrap());
        }
    }
}
