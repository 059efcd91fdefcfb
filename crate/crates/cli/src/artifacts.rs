//! File names inside the model directory and typed loaders.

use std::fs;
use std::path::{Path, PathBuf};

use verse_core::corpus::{CooccurrenceTable, FrequencyTable, Vocabulary};
use verse_core::fluency::{FluencyThresholds, PosTagLexicon, SkipGramTable};
use verse_core::langmodel::{NGramModel, PoemStateModel, RecurrentModel, SentenceEncoder};
use verse_core::write_atomic;

use crate::error::CliError;

pub const VOCAB: &str = "vocab.txt";
pub const FREQ: &str = "freq.tbl";
pub const COOC: &str = "cooc.tbl";
pub const SKIPGRAM: &str = "skipgram.tbl";
pub const NGRAM_FORWARD: &str = "ngram-forward.bin";
pub const NGRAM_BACKWARD: &str = "ngram-backward.bin";
pub const LSTM_FORWARD: &str = "lstm-forward.bin";
pub const LSTM_BACKWARD: &str = "lstm-backward.bin";
pub const ENCODER: &str = "encoder.bin";
pub const POEM_STATE: &str = "poem-state.bin";
pub const POS_VOCAB: &str = "pos-vocab.txt";
pub const POS_LEXICON: &str = "pos-lexicon.tbl";
pub const POS_LM: &str = "pos-lm.bin";
pub const THRESHOLDS: &str = "thresholds.json";
pub const PROVENANCE: &str = "provenance.json";

pub struct ModelDir {
    root: PathBuf,
}

impl ModelDir {
    pub fn new(root: &Path) -> Self {
        ModelDir {
            root: root.to_path_buf(),
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn exists(&self, name: &str) -> bool {
        self.path(name).is_file()
    }

    pub fn create(&self) -> Result<(), CliError> {
        fs::create_dir_all(&self.root)
            .map_err(|e| CliError::Artifact(format!("{}: {e}", self.root.display())))
    }

    pub fn write(&self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.path(name);
        write_atomic(&path, bytes).map_err(CliError::artifact_of(&path))
    }

    fn read_text(&self, name: &str) -> Result<String, CliError> {
        let path = self.path(name);
        fs::read_to_string(&path).map_err(|e| {
            CliError::Artifact(format!("{}: {e} (run the command that produces it first)", path.display()))
        })
    }

    fn parse<T>(&self, name: &str, f: impl FnOnce(&str) -> verse_core::Result<T>) -> Result<T, CliError> {
        let text = self.read_text(name)?;
        let path = self.path(name);
        f(&text).map_err(CliError::artifact_of(&path))
    }

    fn load<T>(&self, name: &str, f: impl FnOnce(&Path) -> verse_core::Result<T>) -> Result<T, CliError> {
        let path = self.path(name);
        if !path.is_file() {
            return Err(CliError::Artifact(format!(
                "{}: not found (run `verse train` first)",
                path.display()
            )));
        }
        f(&path).map_err(CliError::artifact_of(&path))
    }

    pub fn vocab(&self) -> Result<Vocabulary, CliError> {
        self.parse(VOCAB, Vocabulary::from_text)
    }

    pub fn freq(&self) -> Result<FrequencyTable, CliError> {
        self.parse(FREQ, FrequencyTable::from_text)
    }

    pub fn cooc(&self) -> Result<CooccurrenceTable, CliError> {
        self.parse(COOC, CooccurrenceTable::from_text)
    }

    pub fn skipgram(&self) -> Result<SkipGramTable, CliError> {
        self.parse(SKIPGRAM, SkipGramTable::from_text)
    }

    pub fn pos_lexicon(&self) -> Result<PosTagLexicon, CliError> {
        self.parse(POS_LEXICON, PosTagLexicon::from_text)
    }

    pub fn ngram(&self, name: &str) -> Result<NGramModel, CliError> {
        self.load(name, NGramModel::load)
    }

    pub fn recurrent(&self, name: &str) -> Result<RecurrentModel, CliError> {
        self.load(name, RecurrentModel::load)
    }

    pub fn encoder(&self) -> Result<SentenceEncoder, CliError> {
        self.load(ENCODER, SentenceEncoder::load)
    }

    pub fn poem_state(&self) -> Result<PoemStateModel, CliError> {
        self.load(POEM_STATE, PoemStateModel::load)
    }

    pub fn thresholds(&self) -> Result<FluencyThresholds, CliError> {
        let text = self.read_text(THRESHOLDS)?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Artifact(format!("{}: {e}", self.path(THRESHOLDS).display())))
    }
}
