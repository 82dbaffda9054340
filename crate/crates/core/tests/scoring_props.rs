// SPDX-License-Identifier: MIT OR Apache-2.0

mod common;

use attnmark::scoring::words2target_groups;
use attnmark::{
    score_with_config, special2target, word_level_map, words2target, AggregationMode,
    AttentionRecord, AttentionTensor, Configuration, Error, GroupRole, Method, SpecialKind,
    TokenRole,
};
use common::{random_record, RecordShape, TestRng};

fn shape(rng: &mut TestRng, cls: bool, sep: bool) -> RecordShape {
    RecordShape {
        words: rng.range(1, 8),
        max_pieces: 3,
        cls,
        sep,
        layers: 2,
        heads: 2,
    }
}

#[test]
fn clark_rows_stay_stochastic() {
    let mut rng = TestRng::new(11);
    for i in 0..200 {
        let s = shape(&mut rng, i % 2 == 0, i % 3 == 0);
        let record = random_record(&mut rng, "r", &s);
        let map = word_level_map(&record, 2, 1, AggregationMode::Clark).unwrap();
        for k in 0..map.size() {
            let sum: f64 = map.row(k).iter().sum();
            assert!((sum - 1.0).abs() <= 1e-4, "row {k} sums to {sum}");
            assert!(map.row(k).iter().all(|v| *v >= 0.0));
        }
    }
}

#[test]
fn single_token_words_agree_across_modes() {
    let mut rng = TestRng::new(12);
    for _ in 0..50 {
        let mut s = shape(&mut rng, true, true);
        s.max_pieces = 1;
        let record = random_record(&mut rng, "r", &s);
        let a = word_level_map(&record, 1, 2, AggregationMode::Clark).unwrap();
        let b = word_level_map(&record, 1, 2, AggregationMode::MeanMean).unwrap();
        assert_eq!(a, b);
        let slice = record.tensor().slice(0, 1);
        let t = record.num_tokens();
        for r in 0..t {
            for c in 0..t {
                assert_eq!(a.get(r, c), f64::from(slice[r * t + c]));
            }
        }
    }
}

#[test]
fn words2target_group_scores_sum_to_one() {
    let mut rng = TestRng::new(13);
    for i in 0..200 {
        let s = shape(&mut rng, i % 2 == 1, true);
        let record = random_record(&mut rng, "r", &s);
        let map = word_level_map(&record, 1, 1, AggregationMode::Clark).unwrap();
        let total: f64 = words2target_groups(&map).iter().sum();
        assert!((total - 1.0).abs() <= 1e-4);
        let words: f64 = words2target(&map).iter().sum();
        assert!(words <= 1.0 + 1e-4);
    }
}

#[test]
fn special_row_splits_into_words_and_specials() {
    let mut rng = TestRng::new(14);
    for _ in 0..100 {
        let s = shape(&mut rng, true, true);
        let record = random_record(&mut rng, "r", &s);
        let map = word_level_map(&record, 2, 2, AggregationMode::Clark).unwrap();
        for kind in [SpecialKind::Cls, SpecialKind::Sep] {
            let words: f64 = special2target(&map, kind).unwrap().iter().sum();
            let row = map.row(map.special_group(kind).unwrap());
            let specials: f64 = map
                .roles()
                .iter()
                .zip(row)
                .filter(|(r, _)| matches!(r, GroupRole::Special(_)))
                .map(|(_, v)| v)
                .sum();
            assert!((words + specials - 1.0).abs() <= 1e-4);
        }
    }
}

#[test]
fn uniform_map_scores_one_over_groups() {
    for (n, cls, sep) in [(3usize, true, true), (4, false, false), (1, true, false)] {
        let mut roles = Vec::new();
        if cls {
            roles.push(TokenRole::Special);
        }
        roles.extend((0..n).map(TokenRole::Word));
        if sep {
            roles.push(TokenRole::Special);
        }
        let t = roles.len();
        let v = 1.0 / t as f32;
        let tensor = AttentionTensor::new(1, 1, t, vec![v; t * t]).unwrap();
        let record = AttentionRecord::new(
            "u",
            roles,
            cls.then_some(0),
            sep.then_some(t - 1),
            tensor,
        )
        .unwrap();
        let map = word_level_map(&record, 1, 1, AggregationMode::Clark).unwrap();
        let expected = f64::from(v);
        assert!(words2target(&map).iter().all(|s| *s == expected));
        if cls {
            assert!(special2target(&map, SpecialKind::Cls)
                .unwrap()
                .iter()
                .all(|s| *s == expected));
        }
    }
}

#[test]
fn config_bounds_and_determinism() {
    let mut rng = TestRng::new(15);
    let s = RecordShape {
        words: 4,
        max_pieces: 2,
        cls: true,
        sep: true,
        layers: 12,
        heads: 12,
    };
    let record = random_record(&mut rng, "r", &s);
    let ok = Configuration::new("bert-base-uncased", 10, 8, Method::Words2Target);
    let a = score_with_config(&record, &ok).unwrap();
    let b = score_with_config(&record, &ok).unwrap();
    assert_eq!(a.values.len(), 4);
    assert_eq!(
        a.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        b.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
    let bad = Configuration::new("bert-base-uncased", 13, 1, Method::Words2Target);
    assert!(matches!(
        score_with_config(&record, &bad),
        Err(Error::OutOfRange { what: "layer", value: 13, max: 12 })
    ));
}

#[test]
fn layer1_head1_single_tokens_match_raw_slice() {
    let mut rng = TestRng::new(16);
    let mut s = shape(&mut rng, false, false);
    s.max_pieces = 1;
    let record = random_record(&mut rng, "r", &s);
    let t = record.num_tokens();
    let slice = record.tensor().slice(0, 0);
    let expected: Vec<f64> = (0..t)
        .map(|c| (0..t).map(|r| f64::from(slice[r * t + c])).sum::<f64>() / t as f64)
        .collect();
    let got = score_with_config(&record, &Configuration::new("m", 1, 1, Method::Words2Target))
        .unwrap();
    assert_eq!(got.values, expected);
}

#[test]
fn scores_ignore_sentence_id() {
    let mut rng = TestRng::new(17);
    let s = shape(&mut rng, true, true);
        let record = random_record(&mut rng, "a", &s);
    let renamed = record.renamed("b");
    for method in Method::ALL {
        let c = Configuration::new("m", 2, 1, method);
        assert_eq!(
            score_with_config(&record, &c).unwrap().values,
            score_with_config(&renamed, &c).unwrap().values
        );
    }
}
