use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use verse_core::corpus::{
    ingest_corpus, ingest_pos_corpus, ingest_str_with_vocab, CooccurrenceTable, Corpus,
    FrequencyTable, IngestOptions, Vocabulary,
};
use verse_core::fluency::{
    build_skipgram, calibrate, train_pos_lm, Check, FluencyEvaluator, FluencyThresholds,
    PosScorer,
};
use verse_core::generator::{generate_poems, poem_rng, PoemModels, PoemRecord};
use verse_core::keywords::{assemble_from_candidates, load_tags, CorpusStats, KeywordSet};
use verse_core::langmodel::{
    sequence_logprob, train_ngram, train_recurrent, Conditioning, ConditionalLanguageModel,
    Direction, TrainConfig,
};
use verse_core::par::Exec;

use crate::artifacts::*;
use crate::config::{EngineConfig, Family};
use crate::error::CliError;

/// Keyword sets draw from streams above the ones used for line generation.
pub const KEYWORD_STREAM: u64 = 1 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Which {
    Ngram,
    Recurrent,
    Pos,
    All,
}

fn out<T: std::fmt::Display>(line: T) -> Result<(), CliError> {
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "{line}").map_err(|e| CliError::Artifact(format!("stdout: {e}")))
}

fn require_file(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Ingest(format!("{}: {what} not found", path.display())))
    }
}

pub fn ingest(config: &EngineConfig) -> Result<(), CliError> {
    let path = &config.paths.corpus;
    require_file(path, "corpus")?;
    let (corpus, vocab) = ingest_corpus(path, config.mode, IngestOptions::default())
        .map_err(CliError::ingest_of(path))?;
    let freq = FrequencyTable::build(&corpus, &vocab);
    let cooc = CooccurrenceTable::build(&corpus, config.cooccurrence_scope);
    let skip = build_skipgram(&corpus, config.fluency.k_max)?;

    let dir = ModelDir::new(&config.paths.model_dir);
    dir.create()?;
    dir.write(VOCAB, vocab.to_text().as_bytes())?;
    dir.write(FREQ, freq.to_text().as_bytes())?;
    dir.write(COOC, cooc.to_text().as_bytes())?;
    dir.write(SKIPGRAM, skip.to_text().as_bytes())?;
    out(format!(
        "{} poems, {} lines, {} tokens, vocabulary {}",
        corpus.poem_count(),
        corpus.line_count(),
        corpus.token_count(),
        vocab.len()
    ))
}

/// Re-reads the corpus against the ingested vocabulary.
fn load_corpus(config: &EngineConfig, vocab: &Vocabulary) -> Result<Corpus, CliError> {
    if vocab.mode() != config.mode {
        return Err(CliError::Config(format!(
            "artifacts were ingested in {} mode but the config asks for {}",
            vocab.mode(),
            config.mode
        )));
    }
    let path = &config.paths.corpus;
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Ingest(format!("{}: {e}", path.display())))?;
    Ok(ingest_str_with_vocab(&text, &path.display().to_string(), vocab)?)
}

fn perplexity(model: &dyn ConditionalLanguageModel, corpus: &Corpus) -> Result<f64, CliError> {
    let mut nll = 0.0;
    let mut tokens = 0usize;
    for line in corpus.lines().filter(|l| !l.is_empty()) {
        nll -= sequence_logprob(model, line, None)?.value();
        tokens += line.len() + 1;
    }
    Ok((nll / tokens.max(1) as f64).exp())
}

pub fn train(config: &EngineConfig, which: Which) -> Result<(), CliError> {
    let dir = ModelDir::new(&config.paths.model_dir);
    let vocab = dir.vocab()?;
    let corpus = load_corpus(config, &vocab)?;
    let tc = config.train_config();
    let run = |w: Which| which == w || which == Which::All;

    if run(Which::Ngram) {
        train_ngrams(config, &dir, &corpus, vocab.len())?;
    }
    if run(Which::Recurrent) {
        train_lstms(config, &dir, &corpus, vocab.len(), &tc)?;
    }
    if which == Which::Pos || (which == Which::All && config.paths.pos_corpus.is_some()) {
        train_pos(config, &dir, &corpus, vocab.len(), &tc)?;
    }
    if config.fluency.calibrate {
        calibrate_thresholds(config, &dir, &corpus)?;
    }
    Ok(())
}

fn train_ngrams(
    config: &EngineConfig,
    dir: &ModelDir,
    corpus: &Corpus,
    vocab_size: usize,
) -> Result<(), CliError> {
    let ng = &config.ngram;
    for (direction, name) in [
        (Direction::Forward, NGRAM_FORWARD),
        (Direction::Backward, NGRAM_BACKWARD),
    ] {
        let model = train_ngram(corpus, vocab_size, ng.order, direction, ng.alpha)?;
        let oriented = direction.orient(corpus);
        let ppl = perplexity(&model, &oriented)?;
        dir.write(name, &model.to_bytes())?;
        out(format!(
            "ngram {}: order {}, training perplexity {ppl:.6}",
            direction.as_str(),
            ng.order
        ))?;
    }
    Ok(())
}

fn train_lstms(
    config: &EngineConfig,
    dir: &ModelDir,
    corpus: &Corpus,
    vocab_size: usize,
    tc: &TrainConfig,
) -> Result<(), CliError> {
    if config.train.preset.as_deref() == Some("paper-scale") || *tc == TrainConfig::paper_scale() {
        log::warn!(
            "the paper-scale preset trains {} layers of {} units; expect many hours on a CPU",
            tc.layers,
            tc.hidden
        );
    }
    let conditioning = config.generation.conditioning;
    let trained = train_recurrent(
        corpus,
        vocab_size,
        tc,
        &[Direction::Forward, Direction::Backward],
        conditioning,
    )?;
    let set = &trained.models;
    if let Some(m) = &set.forward {
        dir.write(LSTM_FORWARD, &m.to_bytes())?;
    }
    if let Some(m) = &set.backward {
        dir.write(LSTM_BACKWARD, &m.to_bytes())?;
    }
    if let Some(e) = &set.encoder {
        dir.write(ENCODER, &e.to_bytes())?;
    }
    if let Some(p) = &set.poem_state {
        dir.write(POEM_STATE, &p.to_bytes())?;
    }
    if let Some(loss) = trained.final_loss() {
        out(format!(
            "recurrent ({:?}): {} epochs, final loss {:.6}, perplexity {:.6}",
            conditioning,
            trained.history.len(),
            loss.mean_nll,
            loss.perplexity()
        ))?;
    }
    Ok(())
}

fn train_pos(
    config: &EngineConfig,
    dir: &ModelDir,
    corpus: &Corpus,
    vocab_size: usize,
    tc: &TrainConfig,
) -> Result<(), CliError> {
    let path = config
        .paths
        .pos_corpus
        .as_ref()
        .ok_or_else(|| CliError::Config("paths.pos_corpus is not set".into()))?;
    require_file(path, "POS corpus")?;
    let pos = ingest_pos_corpus(path, corpus).map_err(CliError::ingest_of(path))?;
    let lexicon = verse_core::fluency::PosTagLexicon::build(corpus, &pos, vocab_size)?;
    let lm = train_pos_lm(&pos, tc)?;
    let ppl = perplexity(&lm, pos.tags())?;
    dir.write(POS_VOCAB, pos.tag_vocab().to_text().as_bytes())?;
    dir.write(POS_LEXICON, lexicon.to_text().as_bytes())?;
    dir.write(POS_LM, &lm.to_bytes())?;
    out(format!(
        "pos: {} tags, training perplexity {ppl:.6}",
        pos.tag_vocab().len()
    ))
}

/// Scorers for the configured checks, loaded from the model directory.
fn load_scorers(config: &EngineConfig, dir: &ModelDir) -> Result<FluencyEvaluator, CliError> {
    let checks = &config.fluency.checks;
    let ngram = if checks.contains(&Check::Ngram) {
        Some(dir.ngram(NGRAM_FORWARD)?)
    } else {
        None
    };
    let skipgram = if checks.contains(&Check::Skipgram) {
        Some(dir.skipgram()?)
    } else {
        None
    };
    let pos = if checks.contains(&Check::Pos) {
        Some(PosScorer {
            lm: dir.recurrent(POS_LM)?,
            lexicon: dir.pos_lexicon()?,
        })
    } else {
        None
    };
    let mut eval = FluencyEvaluator::new(ngram, skipgram, pos);
    eval.skip_alpha = config.fluency.skip_alpha;
    Ok(eval)
}

fn mask(thresholds: FluencyThresholds, checks: &[Check]) -> FluencyThresholds {
    FluencyThresholds {
        ngram: thresholds.ngram.filter(|_| checks.contains(&Check::Ngram)),
        skipgram: thresholds.skipgram.filter(|_| checks.contains(&Check::Skipgram)),
        pos: thresholds.pos.filter(|_| checks.contains(&Check::Pos)),
    }
}

fn calibrate_thresholds(
    config: &EngineConfig,
    dir: &ModelDir,
    corpus: &Corpus,
) -> Result<(), CliError> {
    let scorers = match load_scorers(config, dir) {
        Ok(s) => s,
        Err(e) => {
            log::info!("skipping calibration: {e}");
            return Ok(());
        }
    };
    let lines: Vec<_> = corpus.lines().filter(|l| !l.is_empty()).cloned().collect();
    let th = calibrate(&scorers, &lines, config.fluency.percentile, Exec::default())?;
    let th = mask(th, &config.fluency.checks);
    let json = serde_json::to_string_pretty(&th).expect("thresholds serialize");
    dir.write(THRESHOLDS, format!("{json}\n").as_bytes())?;
    out(format!("thresholds: {}", describe(&th)))
}

fn describe(th: &FluencyThresholds) -> String {
    let mut parts = Vec::new();
    for (name, v) in [("ngram", th.ngram), ("skipgram", th.skipgram), ("pos", th.pos)] {
        if let Some(v) = v {
            parts.push(format!("{name}={v:.6}"));
        }
    }
    parts.join(" ")
}

fn judge(config: &EngineConfig, dir: &ModelDir) -> Result<FluencyEvaluator, CliError> {
    let thresholds = if config.fluency.calibrate {
        dir.thresholds()?
    } else {
        config.fluency.thresholds
    };
    let thresholds = mask(thresholds, &config.fluency.checks);
    Ok(load_scorers(config, dir)?.with_thresholds(thresholds))
}

struct Stats {
    vocab: Vocabulary,
    freq: FrequencyTable,
    cooc: CooccurrenceTable,
}

impl Stats {
    fn load(config: &EngineConfig, dir: &ModelDir) -> Result<Self, CliError> {
        let vocab = dir.vocab()?;
        if vocab.mode() != config.mode {
            return Err(CliError::Config(format!(
                "artifacts were ingested in {} mode but the config asks for {}",
                vocab.mode(),
                config.mode
            )));
        }
        Ok(Stats {
            vocab,
            freq: dir.freq()?,
            cooc: dir.cooc()?,
        })
    }

    fn corpus_stats(&self) -> CorpusStats<'_> {
        CorpusStats {
            vocab: &self.vocab,
            freq: &self.freq,
            cooc: &self.cooc,
        }
    }
}

fn keyword_sets(
    config: &EngineConfig,
    stats: &Stats,
    count: usize,
) -> Result<Vec<KeywordSet>, CliError> {
    let path = config
        .paths
        .tags
        .as_ref()
        .ok_or_else(|| CliError::Config("paths.tags is not set".into()))?;
    require_file(path, "tag file")?;
    let candidates = load_tags(path).map_err(CliError::ingest_of(path))?;
    (0..count)
        .map(|i| {
            let mut rng = poem_rng(config.seed, KEYWORD_STREAM + i as u64);
            assemble_from_candidates(&candidates, stats.corpus_stats(), &config.keywords, &mut rng)
                .map_err(|e| CliError::Generate(format!("keyword assembly: {e}")))
        })
        .collect()
}

pub fn expand(config: &EngineConfig) -> Result<(), CliError> {
    let dir = ModelDir::new(&config.paths.model_dir);
    let stats = Stats::load(config, &dir)?;
    let set = keyword_sets(config, &stats, 1)?.remove(0);
    for k in set.keywords() {
        out(format!("{}\t{}", k.word, k.origin))?;
    }
    Ok(())
}

pub fn generate(config: &EngineConfig, poems: usize, out_path: Option<&Path>) -> Result<(), CliError> {
    let dir = ModelDir::new(&config.paths.model_dir);
    let stats = Stats::load(config, &dir)?;
    let sets = keyword_sets(config, &stats, poems)?;
    let judge = judge(config, &dir)?;
    let gen = config.generation_config();

    let results = match config.family {
        Family::Ngram => {
            let fwd = dir.ngram(NGRAM_FORWARD)?;
            let bwd = dir.ngram(NGRAM_BACKWARD)?;
            let models = PoemModels {
                forward: &fwd,
                backward: &bwd,
                encoder: None,
                poem_state: None,
            };
            generate_poems(models, &sets, &judge, &gen, Exec::default())
        }
        Family::Recurrent => {
            let fwd = dir.recurrent(LSTM_FORWARD)?;
            let bwd = dir.recurrent(LSTM_BACKWARD)?;
            let encoder = match gen.conditioning {
                Conditioning::None => None,
                _ => Some(dir.encoder()?),
            };
            let poem_state = match gen.conditioning {
                Conditioning::PoemState => Some(dir.poem_state()?),
                _ => None,
            };
            let models = PoemModels {
                forward: &fwd,
                backward: &bwd,
                encoder: encoder.as_ref(),
                poem_state: poem_state.as_ref(),
            };
            generate_poems(models, &sets, &judge, &gen, Exec::default())
        }
    };

    let mut records: Vec<PoemRecord> = Vec::with_capacity(results.len());
    let mut text = String::new();
    for (i, r) in results.into_iter().enumerate() {
        let poem = r.map_err(|e| CliError::Generate(e.to_string()))?;
        if i > 0 {
            text.push('\n');
        }
        text.push_str(&poem.render(&stats.vocab));
        records.push(poem.record(&stats.vocab));
    }
    let out_path: PathBuf = out_path.map_or_else(|| dir.path(PROVENANCE), Path::to_path_buf);
    let json = serde_json::to_string_pretty(&records).expect("records serialize");
    if let Some(parent) = out_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .map_err(|e| CliError::Artifact(format!("{}: {e}", parent.display())))?;
    }
    verse_core::write_atomic(&out_path, format!("{json}\n").as_bytes())
        .map_err(CliError::artifact_of(&out_path))?;
    print!("{text}");
    Ok(())
}

pub fn score(config: &EngineConfig, input: &Path) -> Result<(), CliError> {
    let dir = ModelDir::new(&config.paths.model_dir);
    let vocab = dir.vocab()?;
    let judge = judge(config, &dir)?;
    let text = fs::read_to_string(input)
        .map_err(|e| CliError::Ingest(format!("{}: {e}", input.display())))?;
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let encoded: Vec<Vec<_>> = lines.iter().map(|l| vocab.encode(l)).collect();
    let reports = judge.evaluate_batch(&encoded, Exec::default());
    for (line, report) in lines.iter().zip(reports) {
        let report = report?;
        let mut fields = vec![if report.passed { "pass" } else { "fail" }.to_string()];
        for (name, r) in [
            ("ngram", report.ngram),
            ("skipgram", report.skipgram),
            ("pos", report.pos),
        ] {
            if let Some(r) = r {
                match r.score {
                    Some(s) => fields.push(format!("{name}={s:.6}")),
                    None => fields.push(format!("{name}=n/a")),
                }
            }
        }
        fields.push(line.trim().to_string());
        out(fields.join("\t"))?;
    }
    Ok(())
}
