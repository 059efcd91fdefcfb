//! Seed keywords: tag-file candidates, filtering and expansion to N seeds.
//!
//! Tag file layout: `#` lines are comments (`# image: <id>` names the source
//! image), every other non-blank line is `word class confidence` separated by
//! tabs or spaces, with class `noun` or `adjective` and confidence in [0, 1].

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{is_reserved, tokenize, CooccurrenceTable, FrequencyTable, Vocabulary};
use crate::{Error, Result, TokenId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TagClass {
    Noun,
    Adjective,
}

impl fmt::Display for TagClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TagClass::Noun => "noun",
            TagClass::Adjective => "adjective",
        })
    }
}

impl FromStr for TagClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "noun" => Ok(TagClass::Noun),
            "adjective" | "adj" => Ok(TagClass::Adjective),
            other => Err(format!("unknown tag class {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagCandidate {
    pub word: String,
    pub class: TagClass,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TagFile {
    pub image: Option<String>,
    /// Nouns then adjectives, each by descending confidence.
    pub candidates: Vec<TagCandidate>,
}

pub fn parse_tags(text: &str, source: &str) -> Result<TagFile> {
    let mut file = TagFile::default();
    let mut record = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(id) = comment.trim().strip_prefix("image:") {
                file.image = Some(id.trim().to_string());
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        record += 1;
        let err = |msg: String| Error::ingest(source, i + 1, format!("record {record}: {msg}"));
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [word, class, conf] = fields[..] else {
            return Err(err(format!("expected 3 fields, found {}", fields.len())));
        };
        let class: TagClass = class.parse().map_err(err)?;
        let confidence: f64 = conf
            .parse()
            .map_err(|_| err(format!("bad confidence {conf:?}")))?;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(err(format!("confidence {confidence} outside [0, 1]")));
        }
        file.candidates.push(TagCandidate {
            word: word.to_string(),
            class,
            confidence,
        });
    }
    file.candidates.sort_by(|a, b| {
        a.class
            .cmp(&b.class)
            .then(b.confidence.total_cmp(&a.confidence))
    });
    Ok(file)
}

pub fn load_tags(path: &Path) -> Result<Vec<TagCandidate>> {
    let text = crate::corpus::read_text(path)?;
    Ok(parse_tags(&text, &path.display().to_string())?.candidates)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Only filtered keywords; remaining lines are forward continuations.
    None,
    Frequency,
    #[default]
    Cooccurrence,
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(Strategy::None),
            "frequency" => Ok(Strategy::Frequency),
            "cooccurrence" => Ok(Strategy::Cooccurrence),
            other => Err(format!("unknown expansion strategy {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KeywordConfig {
    /// Minimum tag confidence, inclusive.
    pub tau: f64,
    /// Minimum corpus count, inclusive.
    pub f_min: u64,
    pub n: usize,
    pub strategy: Strategy,
    pub noun_quota: usize,
    pub adjective_quota: usize,
}

impl Default for KeywordConfig {
    fn default() -> Self {
        KeywordConfig {
            tau: 0.5,
            f_min: 5,
            n: 4,
            strategy: Strategy::Cooccurrence,
            noun_quota: 2,
            adjective_quota: 2,
        }
    }
}

impl KeywordConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::Config(format!("tau {} outside [0, 1]", self.tau)));
        }
        if self.n == 0 {
            return Err(Error::Config("keyword count n must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Origin {
    Extracted,
    ExpandedFreq,
    ExpandedCooc,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Origin::Extracted => "extracted",
            Origin::ExpandedFreq => "expanded-freq",
            Origin::ExpandedCooc => "expanded-cooc",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keyword {
    pub word: String,
    /// One id in word mode; the character ids in char mode.
    pub tokens: Vec<TokenId>,
    pub origin: Origin,
    pub class: Option<TagClass>,
    pub confidence: Option<f64>,
}

/// Ordered seeds, one per line, without duplicates.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct KeywordSet {
    keywords: Vec<Keyword>,
}

impl KeywordSet {
    pub fn new(keywords: Vec<Keyword>) -> Result<Self> {
        for (i, k) in keywords.iter().enumerate() {
            if k.tokens.is_empty() || k.tokens.iter().any(|&t| is_reserved(t)) {
                return Err(Error::contract(format!("keyword {:?} has no surface tokens", k.word)));
            }
            if keywords[..i].iter().any(|o| o.tokens == k.tokens) {
                return Err(Error::contract(format!("duplicate keyword {:?}", k.word)));
            }
        }
        Ok(KeywordSet { keywords })
    }

    /// Extracted keywords for the given words, in order.
    pub fn from_words(words: &[&str], vocab: &Vocabulary) -> Result<Self> {
        let keywords = words
            .iter()
            .map(|w| {
                Ok(Keyword {
                    word: w.to_string(),
                    tokens: keyword_tokens(w, vocab)
                        .ok_or_else(|| Error::contract(format!("{w:?} is not in the vocabulary")))?,
                    origin: Origin::Extracted,
                    class: None,
                    confidence: None,
                })
            })
            .collect::<Result<_>>()?;
        Self::new(keywords)
    }

    pub fn from_candidates(candidates: &[TagCandidate], vocab: &Vocabulary) -> Result<Self> {
        let keywords = candidates
            .iter()
            .map(|c| {
                Ok(Keyword {
                    word: c.word.clone(),
                    tokens: keyword_tokens(&c.word, vocab).ok_or_else(|| {
                        Error::contract(format!("{:?} is not in the vocabulary", c.word))
                    })?,
                    origin: Origin::Extracted,
                    class: Some(c.class),
                    confidence: Some(c.confidence),
                })
            })
            .collect::<Result<_>>()?;
        Self::new(keywords)
    }

    pub fn keywords(&self) -> &[Keyword] {
        &self.keywords
    }

    pub fn len(&self) -> usize {
        self.keywords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keywords.is_empty()
    }

    pub fn words(&self) -> Vec<&str> {
        self.keywords.iter().map(|k| k.word.as_str()).collect()
    }

    fn contains_token(&self, id: TokenId) -> bool {
        self.keywords.iter().any(|k| k.tokens == [id])
    }
}

/// Token ids of a keyword, `None` if any piece is outside the vocabulary.
pub fn keyword_tokens(word: &str, vocab: &Vocabulary) -> Option<Vec<TokenId>> {
    let pieces = tokenize(word, vocab.mode());
    if pieces.is_empty() {
        return None;
    }
    pieces
        .iter()
        .map(|p| vocab.id(p).filter(|&id| !is_reserved(id)))
        .collect()
}

/// Corpus count of a keyword; for multi-token keywords the rarest piece.
pub fn keyword_count(tokens: &[TokenId], freq: &FrequencyTable) -> u64 {
    tokens.iter().map(|&t| freq.count(t)).min().unwrap_or(0)
}

/// Applies per-class quotas to the most confident candidates, then keeps
/// those with confidence `>= tau`, corpus count `>= f_min` and a vocabulary
/// entry. Output is ordered by descending confidence.
pub fn filter_keywords(
    candidates: &[TagCandidate],
    vocab: &Vocabulary,
    freq: &FrequencyTable,
    config: &KeywordConfig,
) -> Vec<TagCandidate> {
    let mut ranked = candidates.to_vec();
    ranked.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
    let (mut nouns, mut adjectives) = (0, 0);
    let mut kept = Vec::new();
    for c in ranked {
        let quota = match c.class {
            TagClass::Noun => &mut nouns,
            TagClass::Adjective => &mut adjectives,
        };
        let limit = match c.class {
            TagClass::Noun => config.noun_quota,
            TagClass::Adjective => config.adjective_quota,
        };
        if *quota >= limit {
            continue;
        }
        *quota += 1;
        let frequent = keyword_tokens(&c.word, vocab)
            .is_some_and(|t| keyword_count(&t, freq) >= config.f_min.max(1));
        if c.confidence >= config.tau && frequent && !kept.iter().any(|k: &TagCandidate| k.word == c.word)
        {
            kept.push(c);
        }
    }
    kept
}

/// Draws `k` distinct entries from `pool` with probability proportional to
/// their weights, one draw at a time.
fn sample_weighted<R: Rng + ?Sized>(
    mut pool: Vec<(TokenId, u64)>,
    k: usize,
    rng: &mut R,
) -> Vec<TokenId> {
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let total: u64 = pool.iter().map(|p| p.1).sum();
        if total == 0 {
            break;
        }
        let mut u = rng.gen_range(0..total);
        let idx = pool
            .iter()
            .position(|&(_, w)| {
                if u < w {
                    true
                } else {
                    u -= w;
                    false
                }
            })
            .expect("draw below total weight");
        out.push(pool.remove(idx).0);
    }
    out
}

fn expansion_keyword(id: TokenId, vocab: &Vocabulary, origin: Origin) -> Keyword {
    Keyword {
        word: vocab.token(id).unwrap_or_default().to_string(),
        tokens: vec![id],
        origin,
        class: None,
        confidence: None,
    }
}

fn frequency_pool(chosen: &KeywordSet, freq: &FrequencyTable, f_min: u64) -> Vec<(TokenId, u64)> {
    (0..freq.len() as TokenId)
        .filter(|&id| !is_reserved(id) && !chosen.contains_token(id))
        .map(|id| (id, freq.count(id)))
        .filter(|&(_, c)| c >= f_min.max(1))
        .collect()
}

/// Fills `filtered` up to `config.n` keywords sampled by corpus frequency.
pub fn expand_by_frequency<R: Rng + ?Sized>(
    filtered: KeywordSet,
    vocab: &Vocabulary,
    freq: &FrequencyTable,
    config: &KeywordConfig,
    rng: &mut R,
) -> Result<KeywordSet> {
    let deficit = config.n.saturating_sub(filtered.len());
    if deficit == 0 {
        return Ok(filtered);
    }
    let pool = frequency_pool(&filtered, freq, config.f_min);
    if pool.len() < deficit {
        return Err(Error::Expansion(format!(
            "need {deficit} more keywords but only {} tokens have count >= {}",
            pool.len(),
            config.f_min.max(1)
        )));
    }
    let mut set = filtered;
    for id in sample_weighted(pool, deficit, rng) {
        set.keywords.push(expansion_keyword(id, vocab, Origin::ExpandedFreq));
    }
    Ok(set)
}

/// Fills `filtered` up to `config.n` keywords sampled by summed
/// co-occurrence with the filtered keywords, falling back to frequency
/// sampling when that pool runs out.
pub fn expand_by_cooccurrence<R: Rng + ?Sized>(
    filtered: KeywordSet,
    vocab: &Vocabulary,
    cooc: &CooccurrenceTable,
    freq: &FrequencyTable,
    config: &KeywordConfig,
    rng: &mut R,
) -> Result<KeywordSet> {
    let deficit = config.n.saturating_sub(filtered.len());
    if deficit == 0 {
        return Ok(filtered);
    }
    let anchors: Vec<TokenId> = filtered
        .keywords
        .iter()
        .flat_map(|k| k.tokens.iter().copied())
        .collect();
    let pool: Vec<(TokenId, u64)> = frequency_pool(&filtered, freq, config.f_min)
        .into_iter()
        .map(|(id, _)| (id, anchors.iter().map(|&a| cooc.count(a, id)).sum()))
        .filter(|&(_, w)| w > 0)
        .collect();
    let mut set = filtered;
    for id in sample_weighted(pool, deficit, rng) {
        set.keywords.push(expansion_keyword(id, vocab, Origin::ExpandedCooc));
    }
    expand_by_frequency(set, vocab, freq, config, rng)
}

/// Corpus statistics the keyword stage reads.
#[derive(Debug, Clone, Copy)]
pub struct CorpusStats<'a> {
    pub vocab: &'a Vocabulary,
    pub freq: &'a FrequencyTable,
    pub cooc: &'a CooccurrenceTable,
}

/// Filter then expand per `config.strategy`.
pub fn assemble_from_candidates<R: Rng + ?Sized>(
    candidates: &[TagCandidate],
    stats: CorpusStats<'_>,
    config: &KeywordConfig,
    rng: &mut R,
) -> Result<KeywordSet> {
    config.validate()?;
    let mut filtered = filter_keywords(candidates, stats.vocab, stats.freq, config);
    filtered.truncate(config.n);
    let set = KeywordSet::from_candidates(&filtered, stats.vocab)?;
    match config.strategy {
        Strategy::None => Ok(set),
        Strategy::Frequency => expand_by_frequency(set, stats.vocab, stats.freq, config, rng),
        Strategy::Cooccurrence => {
            expand_by_cooccurrence(set, stats.vocab, stats.cooc, stats.freq, config, rng)
        }
    }
}

/// Load, filter and expand the tag file at `tag_path`.
pub fn assemble_keywords<R: Rng + ?Sized>(
    tag_path: &Path,
    stats: CorpusStats<'_>,
    config: &KeywordConfig,
    rng: &mut R,
) -> Result<KeywordSet> {
    let candidates = load_tags(tag_path)?;
    assemble_from_candidates(&candidates, stats, config, rng)
}
