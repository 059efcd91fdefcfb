mod support;

use num_rational::Ratio;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::{ngram_oracle, random_corpus, toy1};
use verse_core::corpus::{Corpus, START};
use verse_core::langmodel::{train_ngram, ConditionalLanguageModel, Direction};
use verse_core::TokenId;

/// Correctly rounded for the small integers involved.
fn to_f64(r: Ratio<i64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

const ALPHAS: [(i64, i64); 4] = [(0, 1), (1, 100), (1, 2), (1, 1)];

fn oriented_lines(corpus: &Corpus, dir: Direction) -> Vec<Vec<TokenId>> {
    corpus
        .lines()
        .map(|l| match dir {
            Direction::Forward => l.clone(),
            Direction::Backward => l.iter().rev().copied().collect(),
        })
        .collect()
}

/// Prefixes worth querying: every START-anchored prefix of every line, every
/// mid-line window, and a few random token strings.
fn prefixes<R: Rng>(lines: &[Vec<TokenId>], vocab: usize, rng: &mut R) -> Vec<Vec<TokenId>> {
    let mut out = vec![vec![], vec![START]];
    for l in lines.iter().take(20) {
        for k in 0..=l.len() {
            let mut p = vec![START];
            p.extend_from_slice(&l[..k]);
            out.push(p);
            if k > 0 {
                out.push(l[k - 1..k.min(l.len())].to_vec());
                out.push(l[..k].to_vec());
            }
        }
    }
    for _ in 0..10 {
        let len = rng.gen_range(1..4);
        out.push((0..len).map(|_| rng.gen_range(3..vocab as TokenId)).collect());
    }
    out
}

fn check_corpus(corpus: &Corpus, vocab: usize, rng: &mut ChaCha8Rng) {
    for order in 1..=4 {
        for (num, den) in ALPHAS {
            for dir in [Direction::Forward, Direction::Backward] {
                let model = train_ngram(corpus, vocab, order, dir, num as f64 / den as f64).unwrap();
                let lines = oriented_lines(corpus, dir);
                for p in prefixes(&lines, vocab, rng) {
                    let dist = model.next_dist(&p, None).unwrap();
                    let oracle = ngram_oracle(&lines, order, Ratio::new(num, den), vocab, &p);
                    for (next, &exact) in oracle.iter().enumerate() {
                        let got = dist.probs()[next];
                        if num == 0 {
                            assert_eq!(got, to_f64(exact), "order {order} {dir} {p:?} -> {next}");
                        } else {
                            assert!(
                                (got - to_f64(exact)).abs() <= 1e-12,
                                "order {order} alpha {num}/{den} {dir} {p:?} -> {next}: {got} vs {exact}"
                            );
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn toy1_matches_counting_oracle() {
    let (c, v) = toy1();
    check_corpus(&c, v.len(), &mut ChaCha8Rng::seed_from_u64(0));
}

#[test]
fn random_corpora_match_counting_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..25 {
        let (c, v) = random_corpus(&mut rng, 500);
        assert!(c.token_count() <= 500);
        check_corpus(&c, v, &mut rng);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distributions_are_normalised(seed in any::<u64>(), order in 1usize..5, alpha in 0.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (c, v) = random_corpus(&mut rng, 200);
        let m = train_ngram(&c, v, order, Direction::Forward, alpha).unwrap();
        let lines = oriented_lines(&c, Direction::Forward);
        for p in prefixes(&lines, v, &mut rng) {
            let d = m.next_dist(&p, None).unwrap();
            let sum: f64 = d.probs().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            prop_assert_eq!(d.prob(START), 0.0);
            prop_assert!(d.probs().iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
    }
}
