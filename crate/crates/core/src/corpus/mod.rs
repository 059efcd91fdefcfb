//! Poem corpora, vocabularies and the count statistics derived from them.
//!
//! Corpus file layout: UTF-8, one poem line per text line, poems separated by
//! exactly one blank line. Trailing blank lines at end of file are ignored.

mod pos;
pub(crate) mod stats;
mod vocab;

use std::collections::HashMap;
use std::fs;
use std::path::Path;

pub use pos::{ingest_pos_corpus, PosCorpus};
pub use stats::{CoocScope, CooccurrenceTable, FrequencyTable};
pub use vocab::{is_reserved, Mode, Vocabulary, END, RESERVED, START, UNK};

use crate::{Error, Result, TokenId};

/// Splits a line into surface tokens.
///
/// Word mode splits on whitespace runs; char mode yields one token per
/// unicode scalar value, skipping whitespace.
pub fn tokenize(text: &str, mode: Mode) -> Vec<String> {
    match mode {
        Mode::Word => text.split_whitespace().map(str::to_string).collect(),
        Mode::Char => text
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(String::from)
            .collect(),
    }
}

pub type Line = Vec<TokenId>;
pub type Poem = Vec<Line>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    poems: Vec<Poem>,
    mode: Mode,
}

#[derive(Debug, Clone, Copy)]
pub struct IngestOptions {
    /// Tokens seen fewer times than this are mapped to UNK. 1 disables it.
    pub min_count: u64,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions { min_count: 1 }
    }
}

impl Corpus {
    /// Builds a corpus directly from id sequences.
    pub fn from_poems(poems: Vec<Poem>, mode: Mode) -> Result<Self> {
        if poems.is_empty() {
            return Err(Error::contract("corpus has no poems"));
        }
        for (p, poem) in poems.iter().enumerate() {
            if poem.is_empty() {
                return Err(Error::contract(format!("poem {p} has no lines")));
            }
            for line in poem {
                if line.is_empty() {
                    return Err(Error::contract(format!("poem {p} has an empty line")));
                }
                if line.iter().any(|&t| t == START || t == END) {
                    return Err(Error::contract(format!("poem {p} contains a sentinel")));
                }
            }
        }
        Ok(Corpus { poems, mode })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn poems(&self) -> &[Poem] {
        &self.poems
    }

    pub fn lines(&self) -> impl Iterator<Item = &Line> {
        self.poems.iter().flatten()
    }

    pub fn poem_count(&self) -> usize {
        self.poems.len()
    }

    pub fn line_count(&self) -> usize {
        self.poems.iter().map(Vec::len).sum()
    }

    pub fn token_count(&self) -> usize {
        self.lines().map(Vec::len).sum()
    }

    /// Same structure with every line's token order reversed.
    pub fn reversed(&self) -> Corpus {
        Corpus {
            poems: self
                .poems
                .iter()
                .map(|p| {
                    p.iter()
                        .map(|l| l.iter().rev().copied().collect())
                        .collect()
                })
                .collect(),
            mode: self.mode,
        }
    }

    /// Serializes back to the corpus file format.
    pub fn to_text(&self, vocab: &Vocabulary) -> String {
        self.poems
            .iter()
            .map(|poem| {
                poem.iter()
                    .map(|line| vocab.render(line) + "\n")
                    .collect::<String>()
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Keeps only the listed poems, in the given order.
    pub fn subset(&self, poem_indices: &[usize]) -> Result<Corpus> {
        Corpus::from_poems(
            poem_indices.iter().map(|&i| self.poems[i].clone()).collect(),
            self.mode,
        )
    }
}

/// Reverses every line of `corpus`.
pub fn reverse(corpus: &Corpus) -> Corpus {
    corpus.reversed()
}

/// Surface tokens of one poem line along with its 1-based file line number.
pub(crate) type RawLine = (usize, Vec<String>);

pub(crate) fn parse_blocks(
    text: &str,
    source: &str,
    mode: Mode,
    line_offset: usize,
) -> Result<Vec<Vec<RawLine>>> {
    let mut poems: Vec<Vec<RawLine>> = Vec::new();
    let mut current: Vec<RawLine> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1 + line_offset;
        if raw.trim().is_empty() {
            if current.is_empty() {
                // blank at file start or a second consecutive blank line
                return Err(Error::ingest(source, lineno, "empty poem block"));
            }
            poems.push(std::mem::take(&mut current));
            continue;
        }
        let tokens = tokenize(raw, mode);
        if let Some(bad) = tokens.iter().find(|t| RESERVED.contains(&t.as_str())) {
            return Err(Error::ingest(
                source,
                lineno,
                format!("reserved token {bad:?} in corpus"),
            ));
        }
        current.push((lineno, tokens));
    }
    if !current.is_empty() {
        poems.push(current);
    }
    if poems.is_empty() {
        return Err(Error::ingest(source, 1 + line_offset, "corpus has zero lines"));
    }
    Ok(poems)
}

/// Parses corpus text, building a fresh vocabulary.
pub fn ingest_str(
    text: &str,
    source: &str,
    mode: Mode,
    options: IngestOptions,
) -> Result<(Corpus, Vocabulary)> {
    let blocks = parse_blocks(text, source, mode, 0)?;

    let mut counts: HashMap<&str, u64> = HashMap::new();
    for (_, tokens) in blocks.iter().flatten() {
        for t in tokens {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut vocab = Vocabulary::new(mode);
    for (_, tokens) in blocks.iter().flatten() {
        for t in tokens {
            if counts[t.as_str()] >= options.min_count {
                vocab.insert(t);
            }
        }
    }
    let corpus = encode_blocks(&blocks, &vocab, mode)?;
    Ok((corpus, vocab))
}

/// Parses corpus text against an existing vocabulary; unseen tokens become UNK.
pub fn ingest_str_with_vocab(text: &str, source: &str, vocab: &Vocabulary) -> Result<Corpus> {
    let blocks = parse_blocks(text, source, vocab.mode(), 0)?;
    encode_blocks(&blocks, vocab, vocab.mode())
}

fn encode_blocks(blocks: &[Vec<RawLine>], vocab: &Vocabulary, mode: Mode) -> Result<Corpus> {
    let poems = blocks
        .iter()
        .map(|poem| {
            poem.iter()
                .map(|(_, tokens)| tokens.iter().map(|t| vocab.id_or_unk(t)).collect())
                .collect()
        })
        .collect();
    Corpus::from_poems(poems, mode)
}

fn read_utf8(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    String::from_utf8(bytes).map_err(|e| {
        let upto = &e.as_bytes()[..e.utf8_error().valid_up_to()];
        let line = upto.iter().filter(|&&b| b == b'\n').count() + 1;
        Error::ingest(&path.display().to_string(), line, "invalid UTF-8")
    })
}

/// Reads and parses a corpus file.
pub fn ingest_corpus(
    path: &Path,
    mode: Mode,
    options: IngestOptions,
) -> Result<(Corpus, Vocabulary)> {
    let text = read_utf8(path)?;
    ingest_str(&text, &path.display().to_string(), mode, options)
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    read_utf8(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const TOY1: &str =
        "the city sleeps\nbusy streets go quiet\n\nthe moon over the city\na child smiles\n";

    #[test]
    fn tokenize_examples() {
        assert_eq!(
            tokenize("busy streets go quiet", Mode::Word),
            ["busy", "streets", "go", "quiet"]
        );
        assert_eq!(tokenize("ab c", Mode::Char), ["a", "b", "c"]);
        assert!(tokenize("", Mode::Word).is_empty());
        assert!(tokenize("", Mode::Char).is_empty());
        assert_eq!(tokenize("  月光\t照 ", Mode::Char), ["月", "光", "照"]);
    }

    #[test]
    fn toy1_structure() {
        let (c, v) = ingest_str(TOY1, "toy1", Mode::Word, IngestOptions::default()).unwrap();
        assert_eq!(c.poem_count(), 2);
        assert_eq!(c.line_count(), 4);
        assert_eq!(c.token_count(), 15);
        // the city sleeps busy streets go quiet moon over a child smiles
        assert_eq!(v.len() - RESERVED.len(), 12);
    }

    #[test]
    fn single_token_corpus() {
        let (c, v) = ingest_str("a\n", "one", Mode::Word, IngestOptions::default()).unwrap();
        assert_eq!(v.len(), 4);
        assert_eq!(c.line_count(), 1);
    }

    #[test]
    fn malformed_blocks_name_the_line() {
        let err = ingest_str("a b\n\n\nc d\n", "bad", Mode::Word, IngestOptions::default())
            .unwrap_err();
        match err {
            Error::Ingest { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let err = ingest_str("\na\n", "bad", Mode::Word, IngestOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Ingest { line: 1, .. }));
        let err = ingest_str("", "bad", Mode::Word, IngestOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Ingest { line: 1, .. }));
        let err = ingest_str("  \n", "bad", Mode::Word, IngestOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Ingest { line: 1, .. }));
    }

    #[test]
    fn reserved_surface_tokens_are_rejected() {
        let err =
            ingest_str("a <eos> b\n", "bad", Mode::Word, IngestOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Ingest { line: 1, .. }));
    }

    #[test]
    fn trailing_blank_lines_are_tolerated() {
        let (c, _) = ingest_str("a b\n\n", "t", Mode::Word, IngestOptions::default()).unwrap();
        assert_eq!(c.line_count(), 1);
    }

    #[test]
    fn min_count_maps_rare_tokens_to_unk() {
        let (c, v) = ingest_str(TOY1, "toy1", Mode::Word, IngestOptions { min_count: 2 }).unwrap();
        assert_eq!(v.len(), 5); // the, city
        assert_eq!(c.poems()[1][1], vec![UNK, UNK, UNK]);
    }

    #[test]
    fn reverse_is_an_involution() {
        let (c, _) = ingest_str(TOY1, "toy1", Mode::Word, IngestOptions::default()).unwrap();
        let r = reverse(&c);
        assert_eq!(r.poems()[0][0], c.poems()[0][0].iter().rev().copied().collect::<Vec<_>>());
        assert_eq!(reverse(&r), c);
    }

    #[test]
    fn text_round_trip_char_mode() {
        let text = "床前明月光\n疑是地上霜\n\n举头望明月\n";
        let (c, v) = ingest_str(text, "c", Mode::Char, IngestOptions::default()).unwrap();
        assert_eq!(c.to_text(&v), text);
        let (again, v2) = ingest_str(&c.to_text(&v), "c", Mode::Char, IngestOptions::default())
            .unwrap();
        assert_eq!(again, c);
        assert_eq!(v2, v);
    }
}
