// SPDX-License-Identifier: MIT OR Apache-2.0

mod common;

use attnmark::{
    ensemble, grid_search, layerwise_report, select_best, AttentionArchive, Configuration, Corpus,
    EnsembleMember, Error, Method, Normalization, SearchOptions, SearchResult, Sentence, Split,
};
use common::synthetic_pair;
use proptest::prelude::*;

fn csv(result: &SearchResult) -> Vec<u8> {
    let mut buf = Vec::new();
    result.write_csv(&mut buf).unwrap();
    buf
}

#[test]
fn cardinality_with_and_without_specials() {
    let (archive, corpus) = synthetic_pair(31, 6, 12, 12, true);
    let result = grid_search(&archive, &corpus, &SearchOptions::default()).unwrap();
    assert_eq!(result.len(), 432);

    let (archive, corpus) = synthetic_pair(32, 6, 12, 12, false);
    let result = grid_search(&archive, &corpus, &SearchOptions::default()).unwrap();
    assert_eq!(result.len(), 144);
    assert!(result.entries.iter().all(|(c, _)| c.method == Method::Words2Target));

    let (archive, corpus) = synthetic_pair(33, 3, 1, 1, true);
    assert_eq!(grid_search(&archive, &corpus, &SearchOptions::default()).unwrap().len(), 3);
}

#[test]
fn parallel_and_serial_are_byte_identical() {
    let (archive, corpus) = synthetic_pair(34, 20, 6, 8, true);
    let serial = grid_search(&archive, &corpus, &SearchOptions { threads: Some(1), ..Default::default() }).unwrap();
    let parallel = grid_search(&archive, &corpus, &SearchOptions { threads: Some(8), ..Default::default() }).unwrap();
    assert_eq!(csv(&serial), csv(&parallel));
    let again = grid_search(&archive, &corpus, &SearchOptions { threads: Some(8), ..Default::default() }).unwrap();
    assert_eq!(csv(&parallel), csv(&again));
}

#[test]
fn sorted_best_first() {
    let (archive, corpus) = synthetic_pair(35, 10, 3, 3, true);
    let result = grid_search(&archive, &corpus, &SearchOptions::default()).unwrap();
    for pair in result.entries.windows(2) {
        assert!(pair[0].1.ranking_score >= pair[1].1.ranking_score);
    }
    assert_eq!(select_best(&result).unwrap(), &result.entries[0].0);
}

#[test]
fn unlabeled_corpus_rejected() {
    let (archive, corpus) = synthetic_pair(36, 3, 1, 1, true);
    let unlabeled: Vec<Sentence> = corpus
        .sentences()
        .iter()
        .map(|s| Sentence::new(s.id(), s.surfaces().map(String::from).collect::<Vec<_>>()).unwrap())
        .collect();
    let unlabeled = Corpus::new(Split::Dev, unlabeled).unwrap();
    assert!(matches!(
        grid_search(&archive, &unlabeled, &SearchOptions::default()),
        Err(Error::Unlabeled)
    ));
}

#[test]
fn archive_corpus_mismatch_rejected() {
    let (archive, _) = synthetic_pair(37, 4, 1, 1, true);
    let (_, other) = synthetic_pair(38, 4, 1, 1, true);
    // Same ids, different word counts in general.
    let differs = archive
        .records()
        .iter()
        .any(|r| other.get(r.sentence_id()).unwrap().len() != r.num_words());
    assert!(differs);
    assert!(matches!(
        grid_search(&archive, &other, &SearchOptions::default()),
        Err(Error::Mismatch { .. })
    ));
    let (_, fewer) = synthetic_pair(37, 3, 1, 1, true);
    assert!(grid_search(&archive, &fewer, &SearchOptions::default()).is_err());
}

fn members<'a>(archive: &'a AttentionArchive, configs: &[(usize, usize, Method)]) -> Vec<EnsembleMember<'a>> {
    configs
        .iter()
        .map(|&(l, h, m)| EnsembleMember {
            archive,
            config: Configuration::new(archive.model_id(), l, h, m),
        })
        .collect()
}

#[test]
fn ensemble_of_copies_is_identity() {
    let (archive, corpus) = synthetic_pair(39, 8, 2, 2, true);
    let single = members(&archive, &[(2, 1, Method::Cls2Target)]);
    let copies = members(&archive, &[(2, 1, Method::Cls2Target); 3]);
    for norm in [Normalization::Raw, Normalization::PerSentenceSum1] {
        let a = ensemble(&single, norm, &corpus).unwrap();
        let b = ensemble(&copies, norm, &corpus).unwrap();
        for (x, y) in a.iter().zip(&b) {
            for (u, v) in x.values.iter().zip(&y.values) {
                assert!((u - v).abs() < 1e-15);
            }
        }
    }
}

#[test]
fn ensemble_averages_members() {
    let (archive, corpus) = synthetic_pair(40, 5, 2, 2, true);
    let pair = members(&archive, &[(1, 1, Method::Words2Target), (2, 2, Method::Sep2Target)]);
    let mixed = ensemble(&pair, Normalization::Raw, &corpus).unwrap();
    for (sentence, sv) in corpus.sentences().iter().zip(&mixed) {
        let r = archive.get(sentence.id()).unwrap();
        let a = attnmark::score_with_config(r, &pair[0].config).unwrap().values;
        let b = attnmark::score_with_config(r, &pair[1].config).unwrap().values;
        for t in 0..sentence.len() {
            assert!((sv.values[t] - (a[t] + b[t]) / 2.0).abs() < 1e-15);
        }
    }
    let normed = ensemble(&pair, Normalization::PerSentenceSum1, &corpus).unwrap();
    for sv in normed {
        assert!((sv.values.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn ensemble_member_without_record_fails() {
    let (archive, corpus) = synthetic_pair(41, 3, 1, 1, true);
    let (small, _) = synthetic_pair(41, 2, 1, 1, true);
    let mut m = members(&archive, &[(1, 1, Method::Words2Target)]);
    m.extend(members(&small, &[(1, 1, Method::Words2Target)]));
    assert!(matches!(ensemble(&m, Normalization::Raw, &corpus), Err(Error::Mismatch { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn layerwise_floor_monotone(seed in any::<u64>(), lo in 0.0f64..1.0, gap in 0.0f64..0.5) {
        let (archive, corpus) = synthetic_pair(seed, 6, 3, 2, true);
        let result = grid_search(&archive, &corpus, &SearchOptions::default()).unwrap();
        let wide = layerwise_report(&result, lo);
        let narrow = layerwise_report(&result, lo + gap);
        for p in &narrow {
            prop_assert!(wide.contains(p));
        }
    }

    #[test]
    fn select_best_survives_monotone_transform(seed in any::<u64>()) {
        let (archive, corpus) = synthetic_pair(seed, 6, 3, 2, true);
        let result = grid_search(&archive, &corpus, &SearchOptions::default()).unwrap();
        let transformed = SearchResult::from_entries(
            result
                .entries
                .iter()
                .cloned()
                .map(|(c, mut r)| {
                    r.ranking_score = r.ranking_score * 4.0 + 8.0;
                    (c, r)
                })
                .collect(),
        );
        prop_assert_eq!(select_best(&result).unwrap(), select_best(&transformed).unwrap());
    }
}
