//! Test-side oracles and fixtures, written independently of the library
//! internals.
#![allow(dead_code)]

use std::path::PathBuf;

use num_rational::Ratio;
use rand::Rng;
use verse_core::corpus::{ingest_str, Corpus, IngestOptions, Mode, Vocabulary, END, START};
use verse_core::TokenId;

pub const TOY1: &str =
    "the city sleeps\nbusy streets go quiet\n\nthe moon over the city\na child smiles\n";

pub fn toy1() -> (Corpus, Vocabulary) {
    ingest_str(TOY1, "toy1", Mode::Word, IngestOptions::default()).unwrap()
}

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn ingest_fixture(name: &str) -> (Corpus, Vocabulary) {
    let text = std::fs::read_to_string(fixture(name)).unwrap();
    ingest_str(&text, name, Mode::Word, IngestOptions::default()).unwrap()
}

/// Random word-mode corpus of at most `max_tokens` tokens over a small
/// vocabulary, returned with its vocabulary size.
pub fn random_corpus<R: Rng>(rng: &mut R, max_tokens: usize) -> (Corpus, usize) {
    let words = rng.gen_range(2..12usize);
    let mut poems = Vec::new();
    let mut budget = rng.gen_range(1..=max_tokens);
    while budget > 0 {
        let mut poem = Vec::new();
        for _ in 0..rng.gen_range(1..5) {
            let len = rng.gen_range(1..=8usize).min(budget);
            if len == 0 {
                break;
            }
            budget -= len;
            poem.push((0..len).map(|_| 3 + rng.gen_range(0..words) as TokenId).collect());
        }
        if poem.is_empty() {
            break;
        }
        poems.push(poem);
    }
    (Corpus::from_poems(poems, Mode::Word).unwrap(), 3 + words)
}

/// Lines in the reading order of a model, wrapped with `order - 1` STARTs
/// and a closing END.
pub fn padded_lines(lines: &[Vec<TokenId>], order: usize) -> Vec<Vec<TokenId>> {
    lines
        .iter()
        .map(|l| {
            let mut p = vec![START; order - 1];
            p.extend_from_slice(l);
            p.push(END);
            p
        })
        .collect()
}

/// Occurrences of `ctx` followed by each token, by scanning every window.
fn scan(padded: &[Vec<TokenId>], order: usize, ctx: &[TokenId], vocab: usize) -> Vec<i64> {
    let mut c = vec![0i64; vocab];
    for p in padded {
        for pos in order - 1..p.len() {
            if pos >= ctx.len() && &p[pos - ctx.len()..pos] == ctx {
                c[p[pos] as usize] += 1;
            }
        }
    }
    c
}

/// Exact add-alpha distribution after `prefix`, backing off to the longest
/// suffix that occurs as a context. START gets zero mass.
pub fn ngram_oracle(
    lines: &[Vec<TokenId>],
    order: usize,
    alpha: Ratio<i64>,
    vocab: usize,
    prefix: &[TokenId],
) -> Vec<Ratio<i64>> {
    let padded = padded_lines(lines, order);
    let mut full: Vec<TokenId> = Vec::new();
    if prefix.first() == Some(&START) {
        full.extend(std::iter::repeat_n(START, order - 1));
        full.extend_from_slice(&prefix[1..]);
    } else {
        full.extend_from_slice(prefix);
    }
    let longest = full.len().min(order - 1);
    for k in (0..=longest).rev() {
        let ctx = &full[full.len() - k..];
        let counts = scan(&padded, order, ctx, vocab);
        let total: i64 = counts.iter().sum();
        if total > 0 {
            let denom = Ratio::from_integer(total) + alpha * (vocab as i64 - 1);
            return counts
                .iter()
                .enumerate()
                .map(|(t, &c)| {
                    if t == START as usize {
                        Ratio::from_integer(0)
                    } else {
                        (Ratio::from_integer(c) + alpha) / denom
                    }
                })
                .collect();
        }
    }
    unreachable!("the empty context always occurs")
}

/// Greedy bidirectional decoder over raw bigram counts of `lines`:
/// forward picks the most frequent successor of the last token, backward
/// the most frequent predecessor of the first; ties go to the lowest id in
/// each model's own id space, where the line boundary is id 1.
pub fn greedy_bigram_oracle(
    lines: &[Vec<TokenId>],
    vocab: usize,
    seed: TokenId,
    max_len: usize,
) -> Vec<TokenId> {
    let padded = padded_lines(lines, 2);
    let count = |a: TokenId, b: TokenId| {
        padded
            .iter()
            .flat_map(|p| p.windows(2))
            .filter(|w| w[0] == a && w[1] == b)
            .count()
    };
    let candidates = || (1..vocab as TokenId).filter(|&t| t != 2);
    let best = |score: &dyn Fn(TokenId) -> usize| {
        candidates().fold(END, |best, t| if score(t) > score(best) { t } else { best })
    };
    let succ = |a: TokenId| best(&|b| count(a, b));
    // backward id space: the line start is END (1)
    let pred = |b: TokenId| best(&|a| count(if a == END { START } else { a }, b));
    let mut seq = vec![seed];
    let (mut has_start, mut has_end) = (false, false);
    while !(has_start && has_end) {
        if !has_end {
            if seq.len() >= max_len {
                has_end = true;
            } else {
                match succ(*seq.last().unwrap()) {
                    END => has_end = true,
                    w => seq.push(w),
                }
            }
        }
        if !has_start {
            if seq.len() >= max_len {
                has_start = true;
            } else {
                match pred(seq[0]) {
                    END => has_start = true,
                    w => seq.insert(0, w),
                }
            }
        }
    }
    seq
}

/// Total-variation distance between two probability vectors.
pub fn tv(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}
