use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, TokenId};

pub const START: TokenId = 0;
pub const END: TokenId = 1;
pub const UNK: TokenId = 2;

/// Surface forms of the reserved sentinels. Corpus files may not contain them.
pub const RESERVED: [&str; 3] = ["<sos>", "<eos>", "<unk>"];

const VOCAB_MAGIC: &str = "VERSE-VOCAB";
const VOCAB_VERSION: u32 = 1;

/// Whether the generation unit is a character or a whitespace-delimited word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Char,
    #[default]
    Word,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Char => "char",
            Mode::Word => "word",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "char" => Ok(Mode::Char),
            "word" => Ok(Mode::Word),
            other => Err(Error::Config(format!("unknown mode {other:?}"))),
        }
    }
}

pub fn is_reserved(id: TokenId) -> bool {
    id <= UNK
}

/// Bijective token/id map. Ids 0..=2 are the reserved sentinels; the rest
/// follow first appearance in the corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    mode: Mode,
}

impl Vocabulary {
    pub fn new(mode: Mode) -> Self {
        let mut v = Vocabulary {
            tokens: Vec::new(),
            index: HashMap::new(),
            mode,
        };
        for r in RESERVED {
            v.push(r.to_string());
        }
        v
    }

    fn push(&mut self, token: String) -> TokenId {
        let id = self.tokens.len() as TokenId;
        self.index.insert(token.clone(), id);
        self.tokens.push(token);
        id
    }

    /// Adds `token` if absent and returns its id.
    pub fn insert(&mut self, token: &str) -> TokenId {
        match self.index.get(token) {
            Some(&id) => id,
            None => self.push(token.to_string()),
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn id_or_unk(&self, token: &str) -> TokenId {
        self.id(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Ids of every non-reserved entry.
    pub fn surface_ids(&self) -> impl Iterator<Item = TokenId> {
        (UNK + 1)..self.tokens.len() as TokenId
    }

    /// Renders a token line the way the corpus format would.
    pub fn render(&self, ids: &[TokenId]) -> String {
        let sep = match self.mode {
            Mode::Word => " ",
            Mode::Char => "",
        };
        ids.iter()
            .map(|&id| self.token(id).unwrap_or(RESERVED[UNK as usize]))
            .collect::<Vec<_>>()
            .join(sep)
    }

    /// Tokenizes `text` in this vocabulary's mode, mapping unseen tokens to UNK.
    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        super::tokenize(text, self.mode)
            .iter()
            .map(|t| self.id_or_unk(t))
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{VOCAB_MAGIC} {VOCAB_VERSION} {}\n", self.mode);
        for t in &self.tokens[RESERVED.len()..] {
            out.push_str(t);
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::format("empty vocabulary file"))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        match fields.as_slice() {
            [VOCAB_MAGIC, version, mode] => {
                if version.parse::<u32>().ok() != Some(VOCAB_VERSION) {
                    return Err(Error::format(format!("vocabulary version {version}")));
                }
                let mut v = Vocabulary::new(mode.parse()?);
                for (i, line) in lines.enumerate() {
                    if line.is_empty() || v.id(line).is_some() {
                        return Err(Error::format(format!(
                            "vocabulary entry {} is empty or duplicated",
                            i + 1
                        )));
                    }
                    v.push(line.to_string());
                }
                Ok(v)
            }
            _ => Err(Error::format("bad vocabulary header")),
        }
    }
}
