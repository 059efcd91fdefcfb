use std::path::Path;

use super::{parse_blocks, read_text, Corpus, Mode, Poem, Vocabulary};
use crate::{Error, Result};

/// Header that opens every POS file and names the token file it pairs with.
pub const POS_HEADER: &str = "#aligns";

/// POS tag sequences aligned one-to-one with a token corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PosCorpus {
    tags: Corpus,
    tag_vocab: Vocabulary,
    aligns_with: String,
}

impl PosCorpus {
    pub fn tags(&self) -> &Corpus {
        &self.tags
    }

    pub fn tag_vocab(&self) -> &Vocabulary {
        &self.tag_vocab
    }

    /// File name recorded in the header.
    pub fn aligns_with(&self) -> &str {
        &self.aligns_with
    }

    /// Parses POS text and checks it lines up with `tokens` poem by poem and
    /// line by line.
    pub fn parse(text: &str, source: &str, tokens: &Corpus) -> Result<Self> {
        let (header, body) = text.split_once('\n').unwrap_or((text, ""));
        let aligns_with = header
            .strip_prefix(POS_HEADER)
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| {
                Error::ingest(source, 1, format!("expected `{POS_HEADER} <token file>` header"))
            })?
            .to_string();

        let blocks = parse_blocks(body, source, Mode::Word, 1)?;
        if blocks.len() != tokens.poem_count() {
            return Err(Error::ingest(
                source,
                1,
                format!(
                    "{} poems but token corpus has {}",
                    blocks.len(),
                    tokens.poem_count()
                ),
            ));
        }
        let mut tag_vocab = Vocabulary::new(Mode::Word);
        let mut poems: Vec<Poem> = Vec::with_capacity(blocks.len());
        for (block, token_poem) in blocks.iter().zip(tokens.poems()) {
            if block.len() != token_poem.len() {
                let lineno = block.first().map_or(1, |(n, _)| *n);
                return Err(Error::ingest(
                    source,
                    lineno,
                    format!(
                        "poem has {} tag lines but {} token lines",
                        block.len(),
                        token_poem.len()
                    ),
                ));
            }
            let mut poem = Vec::with_capacity(block.len());
            for ((lineno, tags), token_line) in block.iter().zip(token_poem) {
                if tags.len() != token_line.len() {
                    return Err(Error::ingest(
                        source,
                        *lineno,
                        format!("{} tags for {} tokens", tags.len(), token_line.len()),
                    ));
                }
                poem.push(tags.iter().map(|t| tag_vocab.insert(t)).collect());
            }
            poems.push(poem);
        }
        Ok(PosCorpus {
            tags: Corpus::from_poems(poems, Mode::Word)?,
            tag_vocab,
            aligns_with,
        })
    }
}

/// Reads a POS file and aligns it with `tokens`.
pub fn ingest_pos_corpus(path: &Path, tokens: &Corpus) -> Result<PosCorpus> {
    let text = read_text(path)?;
    PosCorpus::parse(&text, &path.display().to_string(), tokens)
}
