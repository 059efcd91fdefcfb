mod support;

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::toy1;
use verse_core::corpus::{CoocScope, CooccurrenceTable, FrequencyTable};
use verse_core::keywords::{
    expand_by_cooccurrence, expand_by_frequency, filter_keywords, KeywordConfig, KeywordSet, Origin,
    TagCandidate, TagClass,
};
use verse_core::TokenId;

fn cfg(n: usize, f_min: u64) -> KeywordConfig {
    KeywordConfig {
        n,
        f_min,
        ..Default::default()
    }
}

#[test]
fn first_frequency_draw_follows_corpus_frequency() {
    let (c, v) = toy1();
    let freq = FrequencyTable::build(&c, &v);
    let mut counts = vec![0usize; v.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let draws = 50_000;
    for _ in 0..draws {
        let set = expand_by_frequency(KeywordSet::default(), &v, &freq, &cfg(1, 1), &mut rng).unwrap();
        counts[set.keywords()[0].tokens[0] as usize] += 1;
    }
    let total = c.token_count() as f64;
    for id in v.surface_ids() {
        let expected = c.lines().flatten().filter(|&&t| t == id).count() as f64 / total;
        let observed = counts[id as usize] as f64 / draws as f64;
        assert!((observed - expected).abs() < 0.03, "{:?}: {observed} vs {expected}", v.token(id));
    }
}

/// Tokens sharing at least one poem with any of `anchors`.
fn cooc_pool(c: &verse_core::corpus::Corpus, anchors: &[TokenId]) -> BTreeSet<TokenId> {
    let mut pool = BTreeSet::new();
    for poem in c.poems() {
        let toks: BTreeSet<TokenId> = poem.iter().flatten().copied().collect();
        if anchors.iter().any(|a| toks.contains(a)) {
            pool.extend(toks.iter().filter(|t| !anchors.contains(t)));
        }
    }
    pool
}

#[test]
fn cooccurrence_expansion_stays_in_pool() {
    let (c, v) = toy1();
    let freq = FrequencyTable::build(&c, &v);
    let cooc = CooccurrenceTable::build(&c, CoocScope::Poem);
    let city = v.id("city").unwrap();
    let pool = cooc_pool(&c, &[city]);
    let words: BTreeSet<&str> = pool.iter().map(|&t| v.token(t).unwrap()).collect();
    let expected: BTreeSet<&str> = [
        "the", "sleeps", "busy", "streets", "go", "quiet", "moon", "over", "a", "child", "smiles",
    ]
    .into();
    assert_eq!(words, expected);

    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..2000 {
        let base = KeywordSet::from_words(&["city"], &v).unwrap();
        let set = expand_by_cooccurrence(base, &v, &cooc, &freq, &cfg(4, 1), &mut rng).unwrap();
        assert_eq!(set.len(), 4);
        for k in &set.keywords()[1..] {
            assert_eq!(k.origin, Origin::ExpandedCooc);
            assert!(pool.contains(&k.tokens[0]));
        }
    }

    let child = v.id("child").unwrap();
    let small = cooc_pool(&c, &[child]);
    for _ in 0..500 {
        let base = KeywordSet::from_words(&["child"], &v).unwrap();
        let set = expand_by_cooccurrence(base, &v, &cooc, &freq, &cfg(9, 1), &mut rng).unwrap();
        assert_eq!(set.len(), 9);
        let mut seen = BTreeSet::new();
        for k in set.keywords() {
            assert!(seen.insert(k.tokens.clone()));
            if !small.contains(&k.tokens[0]) && k.origin != Origin::Extracted {
                assert_eq!(k.origin, Origin::ExpandedFreq);
            }
        }
        let cooc_count = set.keywords().iter().filter(|k| k.origin == Origin::ExpandedCooc).count();
        assert_eq!(cooc_count, small.len());
    }
}

#[test]
fn expansion_is_seed_deterministic() {
    let (c, v) = toy1();
    let freq = FrequencyTable::build(&c, &v);
    let cooc = CooccurrenceTable::build(&c, CoocScope::Poem);
    let run = |s| {
        let base = KeywordSet::from_words(&["city"], &v).unwrap();
        expand_by_cooccurrence(base, &v, &cooc, &freq, &cfg(4, 1), &mut ChaCha8Rng::seed_from_u64(s))
            .unwrap()
    };
    assert_eq!(run(5), run(5));
}

fn candidates() -> impl Strategy<Value = Vec<TagCandidate>> {
    let words = ["city", "busy", "street", "moon", "child", "the", "quiet", "river"];
    prop::collection::vec(
        (0..words.len(), any::<bool>(), 0.0f64..=1.0).prop_map(move |(w, noun, conf)| TagCandidate {
            word: words[w].to_string(),
            class: if noun { TagClass::Noun } else { TagClass::Adjective },
            confidence: conf,
        }),
        0..8,
    )
}

proptest! {
    #[test]
    fn filtering_is_monotone(cands in candidates(), tau in 0.0f64..1.0, dt in 0.0f64..0.5, f in 0u64..3, df in 0u64..3) {
        let (c, v) = toy1();
        let freq = FrequencyTable::build(&c, &v);
        let loose = KeywordConfig { tau, f_min: f, noun_quota: 8, adjective_quota: 8, ..Default::default() };
        let strict = KeywordConfig { tau: (tau + dt).min(1.0), f_min: f + df, ..loose };
        let a: Vec<String> = filter_keywords(&cands, &v, &freq, &loose).into_iter().map(|k| k.word).collect();
        let b: Vec<String> = filter_keywords(&cands, &v, &freq, &strict).into_iter().map(|k| k.word).collect();
        prop_assert!(b.iter().all(|w| a.contains(w)));
    }

    #[test]
    fn expanded_keywords_are_frequent_and_distinct(seed in any::<u64>(), f_min in 1u64..3, n in 1usize..6) {
        let (c, v) = toy1();
        let freq = FrequencyTable::build(&c, &v);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if let Ok(set) = expand_by_frequency(KeywordSet::default(), &v, &freq, &cfg(n, f_min), &mut rng) {
            prop_assert_eq!(set.len(), n);
            let distinct: BTreeSet<_> = set.keywords().iter().map(|k| k.tokens.clone()).collect();
            prop_assert_eq!(distinct.len(), n);
            prop_assert!(set.keywords().iter().all(|k| freq.count(k.tokens[0]) >= f_min));
        }
    }
}
