//! Line and poem generation.
//!
//! A seeded line grows outward from its keyword: the forward model appends,
//! the backward model prepends, alternating until both have emitted their
//! end sentinel. Each step samples among the `top_n` most probable tokens;
//! `top_n = 1` is greedy decoding. Lines are capped at `max_len` tokens,
//! after which the missing sentinels are forced.

use std::collections::{BTreeMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{is_reserved, Vocabulary, END, START, UNK};
use crate::fluency::{Check, FluencyReport, LineJudge};
use crate::keywords::{KeywordSet, Origin};
use crate::langmodel::{
    Conditioning, ConditionalLanguageModel, Direction, NextTokenDistribution, PoemStateModel,
    SentenceEncoder,
};
use crate::par::Exec;
use crate::{Error, Result, TokenId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    /// Longest line in tokens.
    pub max_len: usize,
    pub top_n: usize,
    /// Attempts per line before the best rejected candidate is kept.
    pub max_attempts: usize,
    pub seed: u64,
    /// Lines per poem.
    pub lines: usize,
    pub conditioning: Conditioning,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            max_len: 20,
            top_n: 5,
            max_attempts: 10,
            seed: 1,
            lines: 4,
            conditioning: Conditioning::None,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_len == 0 || self.top_n == 0 || self.max_attempts == 0 || self.lines == 0 {
            return Err(Error::Config(
                "max_len, top_n, max_attempts and lines must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Short hash of the serialized config.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(&Sha256::digest(&json)[..8])
    }
}

/// Samples from the `n` most probable tokens, renormalized. Ties at the
/// cut-off go to lower ids; `n = 1` returns the argmax without touching
/// `rng`.
pub fn sample_top_n<R: Rng + ?Sized>(dist: &NextTokenDistribution, n: usize, rng: &mut R) -> TokenId {
    if n <= 1 {
        return dist.argmax();
    }
    let p = dist.probs();
    let mut ids: Vec<usize> = (0..p.len()).collect();
    ids.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(a.cmp(&b)));
    ids.truncate(n);
    let total: f64 = ids.iter().map(|&i| p[i]).sum();
    let u = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    for &i in &ids {
        acc += p[i];
        if u < acc {
            return i as TokenId;
        }
    }
    *ids.iter().rev().find(|&&i| p[i] > 0.0).unwrap_or(&ids[0]) as TokenId
}

/// One step of a line's growth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceStep {
    Append(TokenId),
    Prepend(TokenId),
    End,
    Start,
    ForcedEnd,
    ForcedStart,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedLine {
    pub tokens: Vec<TokenId>,
    /// The seed keyword's tokens; `None` for forward continuations.
    pub seed: Option<Vec<TokenId>>,
    pub trace: Vec<TraceStep>,
    pub attempts: usize,
    pub report: Option<FluencyReport>,
    /// False when every attempt was rejected and the best one was kept.
    pub accepted: bool,
}

impl GeneratedLine {
    fn new(tokens: Vec<TokenId>, seed: Option<Vec<TokenId>>, trace: Vec<TraceStep>) -> Self {
        GeneratedLine {
            tokens,
            seed,
            trace,
            attempts: 1,
            report: None,
            accepted: true,
        }
    }

    pub fn contains_seed(&self) -> bool {
        match &self.seed {
            Some(s) => contains_run(&self.tokens, s),
            None => true,
        }
    }
}

pub fn contains_run(haystack: &[TokenId], needle: &[TokenId]) -> bool {
    needle.is_empty() || haystack.windows(needle.len()).any(|w| w == needle)
}

/// Picks the next token with START and UNK removed; `None` when nothing
/// else has mass. `allow_end` false also removes END.
fn pick<R: Rng + ?Sized>(
    dist: &NextTokenDistribution,
    top_n: usize,
    allow_end: bool,
    rng: &mut R,
) -> Result<Option<TokenId>> {
    let mut p = dist.probs().to_vec();
    p[START as usize] = 0.0;
    if let Some(u) = p.get_mut(UNK as usize) {
        *u = 0.0;
    }
    if !allow_end {
        p[END as usize] = 0.0;
    }
    let total: f64 = p.iter().sum();
    if total <= 0.0 {
        return Ok(None);
    }
    p.iter_mut().for_each(|v| *v /= total);
    Ok(Some(sample_top_n(&NextTokenDistribution::new(p)?, top_n, rng)))
}

fn check_pair(fwd: &dyn ConditionalLanguageModel, bwd: &dyn ConditionalLanguageModel) -> Result<()> {
    if fwd.direction() != Direction::Forward || bwd.direction() != Direction::Backward {
        return Err(Error::contract("expected a forward and a backward model"));
    }
    if fwd.vocab_size() != bwd.vocab_size() {
        return Err(Error::contract("forward and backward vocabularies differ"));
    }
    if fwd.condition_width() != bwd.condition_width() {
        return Err(Error::contract("forward and backward condition widths differ"));
    }
    Ok(())
}

/// Grows a line around `seed` by alternating forward and backward steps.
pub fn recursive_generate<R: Rng + ?Sized>(
    fwd: &dyn ConditionalLanguageModel,
    bwd: &dyn ConditionalLanguageModel,
    seed: &[TokenId],
    config: &GenerationConfig,
    rng: &mut R,
    condition: Option<&[f64]>,
) -> Result<GeneratedLine> {
    check_pair(fwd, bwd)?;
    if seed.is_empty() {
        return Err(Error::contract("empty seed keyword"));
    }
    if let Some(&t) = seed
        .iter()
        .find(|&&t| is_reserved(t) || t as usize >= fwd.vocab_size())
    {
        return Err(Error::contract(format!("seed token {t} is not a vocabulary word")));
    }
    if seed.len() > config.max_len {
        return Err(Error::contract(format!(
            "seed of {} tokens exceeds max line length {}",
            seed.len(),
            config.max_len
        )));
    }
    let mut tokens: VecDeque<TokenId> = seed.iter().copied().collect();
    let mut trace = Vec::new();
    let (mut has_start, mut has_end) = (false, false);
    while !(has_start && has_end) {
        if !has_end {
            if tokens.len() >= config.max_len {
                has_end = true;
                trace.push(TraceStep::ForcedEnd);
            } else {
                let prefix: Vec<TokenId> = has_start
                    .then_some(START)
                    .into_iter()
                    .chain(tokens.iter().copied())
                    .collect();
                match pick(&fwd.next_dist(&prefix, condition)?, config.top_n, true, rng)? {
                    Some(END) | None => {
                        has_end = true;
                        trace.push(TraceStep::End);
                    }
                    Some(w) => {
                        tokens.push_back(w);
                        trace.push(TraceStep::Append(w));
                    }
                }
            }
        }
        if !has_start {
            if tokens.len() >= config.max_len {
                has_start = true;
                trace.push(TraceStep::ForcedStart);
            } else {
                let prefix: Vec<TokenId> = has_end
                    .then_some(START)
                    .into_iter()
                    .chain(tokens.iter().rev().copied())
                    .collect();
                match pick(&bwd.next_dist(&prefix, condition)?, config.top_n, true, rng)? {
                    Some(END) | None => {
                        has_start = true;
                        trace.push(TraceStep::Start);
                    }
                    Some(w) => {
                        tokens.push_front(w);
                        trace.push(TraceStep::Prepend(w));
                    }
                }
            }
        }
    }
    Ok(GeneratedLine::new(tokens.into(), Some(seed.to_vec()), trace))
}

fn require_width(fwd: &dyn ConditionalLanguageModel, width: usize) -> Result<()> {
    if fwd.condition_width() == 0 {
        return Err(Error::contract("conditioning needs condition-accepting models"));
    }
    if fwd.condition_width() != width {
        return Err(Error::contract(format!(
            "models take width {} conditions but the encoder yields {width}",
            fwd.condition_width()
        )));
    }
    Ok(())
}

/// [`recursive_generate`] conditioned on the encoding of `previous`.
#[allow(clippy::too_many_arguments)]
pub fn generate_with_preline<R: Rng + ?Sized>(
    fwd: &dyn ConditionalLanguageModel,
    bwd: &dyn ConditionalLanguageModel,
    encoder: &SentenceEncoder,
    seed: &[TokenId],
    previous: &[TokenId],
    config: &GenerationConfig,
    rng: &mut R,
) -> Result<GeneratedLine> {
    require_width(fwd, encoder.width())?;
    let cond = encoder.encode(previous)?;
    recursive_generate(fwd, bwd, seed, config, rng, Some(&cond))
}

/// Poem-state condition for the line following `history`.
pub fn hierarchical_condition(
    encoder: &SentenceEncoder,
    poem_model: &PoemStateModel,
    history: &[Vec<TokenId>],
) -> Result<Vec<f64>> {
    if history.is_empty() {
        return Ok(poem_model.initial_output());
    }
    let contents = history
        .iter()
        .map(|l| encoder.encode(l))
        .collect::<Result<Vec<_>>>()?;
    poem_model.advance(&contents)
}

/// [`recursive_generate`] conditioned on the poem state after `history`.
#[allow(clippy::too_many_arguments)]
pub fn generate_hierarchical<R: Rng + ?Sized>(
    fwd: &dyn ConditionalLanguageModel,
    bwd: &dyn ConditionalLanguageModel,
    encoder: &SentenceEncoder,
    poem_model: &PoemStateModel,
    seed: &[TokenId],
    history: &[Vec<TokenId>],
    config: &GenerationConfig,
    rng: &mut R,
) -> Result<GeneratedLine> {
    require_width(fwd, poem_model.width())?;
    let cond = hierarchical_condition(encoder, poem_model, history)?;
    recursive_generate(fwd, bwd, seed, config, rng, Some(&cond))
}

/// Forward-only line from START under a fixed condition.
pub fn continue_forward<R: Rng + ?Sized>(
    fwd: &dyn ConditionalLanguageModel,
    condition: Option<&[f64]>,
    config: &GenerationConfig,
    rng: &mut R,
) -> Result<GeneratedLine> {
    if fwd.direction() != Direction::Forward {
        return Err(Error::contract("continuation needs a forward model"));
    }
    let mut prefix = vec![START];
    let mut trace = Vec::new();
    loop {
        if prefix.len() > config.max_len {
            trace.push(TraceStep::ForcedEnd);
            break;
        }
        let allow_end = prefix.len() > 1;
        match pick(&fwd.next_dist(&prefix, condition)?, config.top_n, allow_end, rng)? {
            Some(END) => {
                trace.push(TraceStep::End);
                break;
            }
            Some(w) => {
                prefix.push(w);
                trace.push(TraceStep::Append(w));
            }
            None if allow_end => {
                trace.push(TraceStep::ForcedEnd);
                break;
            }
            None => return Err(Error::contract("model gives no mass to any surface token")),
        }
    }
    prefix.remove(0);
    Ok(GeneratedLine::new(prefix, None, trace))
}

/// Forward-only line conditioned on the encoding of `previous`.
pub fn generate_forward_continuation<R: Rng + ?Sized>(
    fwd: &dyn ConditionalLanguageModel,
    encoder: &SentenceEncoder,
    previous: &[TokenId],
    config: &GenerationConfig,
    rng: &mut R,
) -> Result<GeneratedLine> {
    require_width(fwd, encoder.width())?;
    let cond = encoder.encode(previous)?;
    continue_forward(fwd, Some(&cond), config, rng)
}

/// The models a poem is generated from.
#[derive(Clone, Copy)]
pub struct PoemModels<'a> {
    pub forward: &'a dyn ConditionalLanguageModel,
    pub backward: &'a dyn ConditionalLanguageModel,
    pub encoder: Option<&'a SentenceEncoder>,
    pub poem_state: Option<&'a PoemStateModel>,
}

impl PoemModels<'_> {
    fn condition(&self, mode: Conditioning, history: &[Vec<TokenId>]) -> Result<Option<Vec<f64>>> {
        let encoder = || {
            self.encoder
                .ok_or_else(|| Error::contract("conditioning needs a sentence encoder"))
        };
        match mode {
            Conditioning::None => Ok(None),
            Conditioning::PreviousLine => {
                let enc = encoder()?;
                require_width(self.forward, enc.width())?;
                Ok(Some(match history.last() {
                    Some(prev) => enc.encode(prev)?,
                    None => vec![0.0; enc.width()],
                }))
            }
            Conditioning::PoemState => {
                let enc = encoder()?;
                let ps = self
                    .poem_state
                    .ok_or_else(|| Error::contract("hierarchical mode needs a poem-state model"))?;
                require_width(self.forward, ps.width())?;
                hierarchical_condition(enc, ps, history).map(Some)
            }
        }
    }

    pub fn ids(&self) -> BTreeMap<String, String> {
        let mut ids = BTreeMap::new();
        ids.insert("forward".into(), self.forward.model_id());
        ids.insert("backward".into(), self.backward.model_id());
        if let Some(e) = self.encoder {
            ids.insert("encoder".into(), e.model_id());
        }
        if let Some(p) = self.poem_state {
            ids.insert("poem_state".into(), p.model_id());
        }
        ids
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoemProvenance {
    pub seed: u64,
    pub stream: u64,
    pub config_hash: String,
    pub model_ids: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Poem {
    pub lines: Vec<GeneratedLine>,
    pub keywords: KeywordSet,
    pub provenance: PoemProvenance,
}

/// Random stream for poem `index` under `seed`.
pub fn poem_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Generates `config.lines` lines, seeding line `j` with keyword `j` and
/// using forward continuation once the keywords run out. Rejected lines are
/// regenerated up to `config.max_attempts` times.
pub fn generate_poem(
    models: PoemModels<'_>,
    keywords: &KeywordSet,
    judge: &dyn LineJudge,
    config: &GenerationConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Poem> {
    config.validate()?;
    if keywords.is_empty() {
        return Err(Error::contract("empty keyword set"));
    }
    if keywords.len() > config.lines {
        return Err(Error::contract(format!(
            "{} keywords for a {}-line poem",
            keywords.len(),
            config.lines
        )));
    }
    check_pair(models.forward, models.backward)?;
    let provenance = PoemProvenance {
        seed: config.seed,
        stream: rng.get_stream(),
        config_hash: config.hash(),
        model_ids: models.ids(),
    };
    let mut lines: Vec<GeneratedLine> = Vec::with_capacity(config.lines);
    let mut history: Vec<Vec<TokenId>> = Vec::with_capacity(config.lines);
    for j in 0..config.lines {
        let cond = models.condition(config.conditioning, &history)?;
        let seed = keywords.keywords().get(j).map(|k| k.tokens.as_slice());
        let mut best: Option<(f64, GeneratedLine)> = None;
        let mut chosen = None;
        for attempt in 1..=config.max_attempts {
            let mut line = match seed {
                Some(s) => recursive_generate(
                    models.forward,
                    models.backward,
                    s,
                    config,
                    rng,
                    cond.as_deref(),
                )?,
                None => continue_forward(models.forward, cond.as_deref(), config, rng)?,
            };
            let report = judge.judge(&line.tokens)?;
            line.attempts = attempt;
            if report.passed {
                line.report = Some(report);
                chosen = Some(line);
                break;
            }
            let margin = report.margin();
            line.report = Some(report);
            line.accepted = false;
            if best.as_ref().is_none_or(|(m, _)| margin > *m) {
                best = Some((margin, line));
            }
        }
        let line = match chosen {
            Some(l) => l,
            None => {
                let (_, mut l) = best.expect("at least one attempt");
                l.attempts = config.max_attempts;
                l
            }
        };
        history.push(line.tokens.clone());
        lines.push(line);
    }
    Ok(Poem {
        lines,
        keywords: keywords.clone(),
        provenance,
    })
}

/// One poem per keyword set, poem `i` drawing from stream `i` of
/// `config.seed`. Results do not depend on `exec`.
pub fn generate_poems(
    models: PoemModels<'_>,
    keyword_sets: &[KeywordSet],
    judge: &dyn LineJudge,
    config: &GenerationConfig,
    exec: Exec,
) -> Vec<Result<Poem>> {
    exec.map_range(keyword_sets.len(), |i| {
        let mut rng = poem_rng(config.seed, i as u64);
        generate_poem(models, &keyword_sets[i], judge, config, &mut rng)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineRecord {
    pub text: String,
    pub keyword: Option<String>,
    pub keyword_origin: Option<Origin>,
    pub attempts: usize,
    pub accepted: bool,
    pub scores: BTreeMap<String, Option<f64>>,
    pub failed_checks: Vec<Check>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordRecord {
    pub word: String,
    pub origin: Origin,
}

/// Structured provenance of a poem, ready for serialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoemRecord {
    pub lines: Vec<LineRecord>,
    pub keywords: Vec<KeywordRecord>,
    #[serde(flatten)]
    pub provenance: PoemProvenance,
}

impl Poem {
    pub fn render(&self, vocab: &Vocabulary) -> String {
        let mut out = String::new();
        for l in &self.lines {
            out.push_str(&vocab.render(&l.tokens));
            out.push('\n');
        }
        out
    }

    pub fn record(&self, vocab: &Vocabulary) -> PoemRecord {
        let lines = self
            .lines
            .iter()
            .enumerate()
            .map(|(j, l)| {
                let kw = self.keywords.keywords().get(j);
                let mut scores = BTreeMap::new();
                if let Some(r) = &l.report {
                    for (name, c) in [("ngram", r.ngram), ("skipgram", r.skipgram), ("pos", r.pos)] {
                        if let Some(c) = c {
                            scores.insert(name.to_string(), c.score);
                        }
                    }
                }
                LineRecord {
                    text: vocab.render(&l.tokens),
                    keyword: kw.map(|k| k.word.clone()),
                    keyword_origin: kw.map(|k| k.origin),
                    attempts: l.attempts,
                    accepted: l.accepted,
                    scores,
                    failed_checks: l.report.as_ref().map(|r| r.failed_checks()).unwrap_or_default(),
                }
            })
            .collect();
        PoemRecord {
            lines,
            keywords: self
                .keywords
                .keywords()
                .iter()
                .map(|k| KeywordRecord {
                    word: k.word.clone(),
                    origin: k.origin,
                })
                .collect(),
            provenance: self.provenance.clone(),
        }
    }
}
