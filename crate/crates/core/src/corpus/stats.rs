use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{is_reserved, Corpus, Vocabulary};
use crate::{Error, Result, TokenId};

const STATS_MAGIC: &str = "VERSE-STATS";
const STATS_VERSION: u32 = 1;

/// Header line shared by the text statistics tables.
pub(crate) fn table_header(kind: &str, extra: &str) -> String {
    if extra.is_empty() {
        format!("{STATS_MAGIC} {STATS_VERSION} {kind}\n")
    } else {
        format!("{STATS_MAGIC} {STATS_VERSION} {kind} {extra}\n")
    }
}

/// Validates a table header and returns the body lines plus any header extras.
pub(crate) fn parse_table<'a>(
    text: &'a str,
    kind: &str,
) -> Result<(Vec<&'a str>, impl Iterator<Item = &'a str> + 'a)> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::format("empty table"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() < 3 || fields[0] != STATS_MAGIC {
        return Err(Error::format("bad statistics header"));
    }
    if fields[1].parse::<u32>().ok() != Some(STATS_VERSION) {
        return Err(Error::format(format!("statistics version {}", fields[1])));
    }
    if fields[2] != kind {
        return Err(Error::format(format!(
            "table kind {:?}, expected {kind:?}",
            fields[2]
        )));
    }
    Ok((fields[3..].to_vec(), lines))
}

pub(crate) fn parse_num<T: std::str::FromStr>(field: Option<&str>, row: usize) -> Result<T> {
    field
        .and_then(|f| f.parse().ok())
        .ok_or_else(|| Error::format(format!("bad field in table row {row}")))
}

/// Occurrence count per vocabulary id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencyTable {
    counts: Vec<u64>,
    total: u64,
}

impl FrequencyTable {
    pub fn build(corpus: &Corpus, vocab: &Vocabulary) -> Self {
        let mut counts = vec![0u64; vocab.len()];
        for line in corpus.lines() {
            for &t in line {
                counts[t as usize] += 1;
            }
        }
        let total = counts.iter().sum();
        FrequencyTable { counts, total }
    }

    pub fn count(&self, id: TokenId) -> u64 {
        self.counts.get(id as usize).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut out = table_header("frequency", &self.counts.len().to_string());
        for (id, c) in self.counts.iter().enumerate() {
            if *c > 0 {
                out.push_str(&format!("{id}\t{c}\n"));
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let (extra, rows) = parse_table(text, "frequency")?;
        let size: usize = parse_num(extra.first().copied(), 0)?;
        let mut counts = vec![0u64; size];
        for (i, row) in rows.enumerate() {
            let mut f = row.split('\t');
            let id: usize = parse_num(f.next(), i + 1)?;
            let c: u64 = parse_num(f.next(), i + 1)?;
            *counts
                .get_mut(id)
                .ok_or_else(|| Error::format(format!("id {id} out of range")))? = c;
        }
        let total = counts.iter().sum();
        Ok(FrequencyTable { counts, total })
    }
}

/// Window within which two tokens count as co-occurring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoocScope {
    #[default]
    Poem,
    Line,
}

/// Number of poems (or lines) in which two distinct tokens both occur.
/// Reserved ids are never counted. Keys are stored with the smaller id first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CooccurrenceTable {
    counts: BTreeMap<(TokenId, TokenId), u64>,
    scope: CoocScope,
}

impl CooccurrenceTable {
    pub fn build(corpus: &Corpus, scope: CoocScope) -> Self {
        let windows: Vec<BTreeSet<TokenId>> = match scope {
            CoocScope::Poem => corpus
                .poems()
                .iter()
                .map(|p| p.iter().flatten().copied().collect())
                .collect(),
            CoocScope::Line => corpus
                .lines()
                .map(|l| l.iter().copied().collect())
                .collect(),
        };
        let mut counts = BTreeMap::new();
        for window in windows {
            let ids: Vec<TokenId> = window.into_iter().filter(|&t| !is_reserved(t)).collect();
            for (i, &a) in ids.iter().enumerate() {
                for &b in &ids[i + 1..] {
                    *counts.entry((a, b)).or_insert(0) += 1;
                }
            }
        }
        CooccurrenceTable { counts, scope }
    }

    pub fn scope(&self) -> CoocScope {
        self.scope
    }

    pub fn count(&self, a: TokenId, b: TokenId) -> u64 {
        if a == b {
            return 0;
        }
        let key = if a < b { (a, b) } else { (b, a) };
        self.counts.get(&key).copied().unwrap_or(0)
    }

    /// Stored pairs with their counts, smaller id first.
    pub fn pairs(&self) -> impl Iterator<Item = ((TokenId, TokenId), u64)> + '_ {
        self.counts.iter().map(|(&k, &v)| (k, v))
    }

    /// Tokens with a positive count alongside `id`.
    pub fn partners(&self, id: TokenId) -> impl Iterator<Item = (TokenId, u64)> + '_ {
        self.counts.iter().filter_map(move |(&(a, b), &c)| {
            if a == id {
                Some((b, c))
            } else if b == id {
                Some((a, c))
            } else {
                None
            }
        })
    }

    pub fn to_text(&self) -> String {
        let scope = match self.scope {
            CoocScope::Poem => "poem",
            CoocScope::Line => "line",
        };
        let mut out = table_header("cooccurrence", scope);
        for (&(a, b), c) in &self.counts {
            out.push_str(&format!("{a}\t{b}\t{c}\n"));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let (extra, rows) = parse_table(text, "cooccurrence")?;
        let scope = match extra.first().copied() {
            Some("poem") => CoocScope::Poem,
            Some("line") => CoocScope::Line,
            _ => return Err(Error::format("missing co-occurrence scope")),
        };
        let mut counts = BTreeMap::new();
        for (i, row) in rows.enumerate() {
            let mut f = row.split('\t');
            let a: TokenId = parse_num(f.next(), i + 1)?;
            let b: TokenId = parse_num(f.next(), i + 1)?;
            let c: u64 = parse_num(f.next(), i + 1)?;
            if a >= b {
                return Err(Error::format(format!("unordered pair in row {}", i + 1)));
            }
            counts.insert((a, b), c);
        }
        Ok(CooccurrenceTable { counts, scope })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ingest_str, IngestOptions, Mode};

    const TOY1: &str =
        "the city sleeps\nbusy streets go quiet\n\nthe moon over the city\na child smiles\n";

    fn toy() -> (Corpus, Vocabulary) {
        ingest_str(TOY1, "toy1", Mode::Word, IngestOptions::default()).unwrap()
    }

    #[test]
    fn toy1_frequencies() {
        let (c, v) = toy();
        let f = FrequencyTable::build(&c, &v);
        assert_eq!(f.count(v.id("the").unwrap()), 3);
        assert_eq!(f.count(v.id("city").unwrap()), 2);
        assert_eq!(f.total(), c.token_count() as u64);
    }

    #[test]
    fn small_line_frequencies() {
        let (c, v) = ingest_str("a a b\n", "t", Mode::Word, IngestOptions::default()).unwrap();
        let f = FrequencyTable::build(&c, &v);
        assert_eq!(f.count(v.id("a").unwrap()), 2);
        assert_eq!(f.count(v.id("b").unwrap()), 1);
        assert_eq!(f.total(), 3);
    }

    #[test]
    fn toy1_cooccurrence() {
        let (c, v) = toy();
        let t = CooccurrenceTable::build(&c, CoocScope::Poem);
        let city = v.id("city").unwrap();
        let child = v.id("child").unwrap();
        assert_eq!(t.count(city, child), 1);
        assert_eq!(t.count(child, city), 1);
        assert_eq!(t.count(city, city), 0);
        let the = v.id("the").unwrap();
        assert_eq!(t.count(the, city), 2);
        assert!(t.pairs().all(|((a, b), _)| a < b));

        let by_line = CooccurrenceTable::build(&c, CoocScope::Line);
        assert_eq!(by_line.count(city, child), 0);
        assert_eq!(by_line.count(the, city), 2);
    }

    #[test]
    fn tables_round_trip() {
        let (c, v) = toy();
        let f = FrequencyTable::build(&c, &v);
        assert_eq!(FrequencyTable::from_text(&f.to_text()).unwrap(), f);
        let t = CooccurrenceTable::build(&c, CoocScope::Poem);
        assert_eq!(CooccurrenceTable::from_text(&t.to_text()).unwrap(), t);
        assert!(FrequencyTable::from_text(&t.to_text()).is_err());
    }
}
