//! Accept/reject gate for candidate lines.
//!
//! Three independent checks, each compared against its own threshold:
//!
//! * n-gram: mean per-token log probability under a smoothed n-gram model,
//!   `sequence_logprob / (len + 1)`.
//! * skip-gram: mean pointwise association of in-line ordered pairs at gaps
//!   `1..=k_max`, see [`SkipGramTable::association`].
//! * POS: mean per-tag log probability of the line's tag sequence under an
//!   LSTM tag model, tags coming from a most-frequent-tag lexicon.
//!
//! A line passes when every enabled check passes. Thresholds are usually set
//! by [`calibrate`] from percentiles of genuine corpus lines.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::stats::{parse_num, parse_table, table_header};
use crate::corpus::{Corpus, PosCorpus, UNK};
use crate::langmodel::{
    sequence_logprob, train_recurrent, Conditioning, Direction, LogProb,
    NGramModel, RecurrentModel, TrainConfig,
};
use crate::par::Exec;
use crate::{math, Error, Result, TokenId};

pub const DEFAULT_K_MAX: usize = 3;
pub const DEFAULT_SKIP_ALPHA: f64 = 0.5;
pub const DEFAULT_PERCENTILE: f64 = 5.0;

/// Ordered pair counts `(w_i, w_{i+k})` for gaps `k = 1..=k_max` within a
/// line, plus the unigram counts needed to normalise them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkipGramTable {
    k_max: usize,
    pairs: BTreeMap<(TokenId, TokenId), Vec<u64>>,
    unigrams: BTreeMap<TokenId, u64>,
    total_tokens: u64,
    total_pairs: u64,
}

pub fn build_skipgram(corpus: &Corpus, k_max: usize) -> Result<SkipGramTable> {
    if k_max < 1 {
        return Err(Error::Config("skip-gram k_max must be at least 1".into()));
    }
    let mut t = SkipGramTable {
        k_max,
        pairs: BTreeMap::new(),
        unigrams: BTreeMap::new(),
        total_tokens: 0,
        total_pairs: 0,
    };
    for line in corpus.lines() {
        for (i, &a) in line.iter().enumerate() {
            *t.unigrams.entry(a).or_insert(0) += 1;
            t.total_tokens += 1;
            for gap in 1..=k_max {
                let Some(&b) = line.get(i + gap) else { break };
                t.pairs.entry((a, b)).or_insert_with(|| vec![0; k_max])[gap - 1] += 1;
                t.total_pairs += 1;
            }
        }
    }
    Ok(t)
}

impl SkipGramTable {
    pub fn k_max(&self) -> usize {
        self.k_max
    }

    /// Count of `b` appearing exactly `gap` positions after `a`.
    pub fn count(&self, a: TokenId, b: TokenId, gap: usize) -> u64 {
        if gap == 0 || gap > self.k_max {
            return 0;
        }
        self.pairs.get(&(a, b)).map_or(0, |c| c[gap - 1])
    }

    /// Count of `b` following `a` at any gap up to `k_max`.
    pub fn window_count(&self, a: TokenId, b: TokenId) -> u64 {
        self.pairs.get(&(a, b)).map_or(0, |c| c.iter().sum())
    }

    pub fn unigram(&self, a: TokenId) -> u64 {
        self.unigrams.get(&a).copied().unwrap_or(0)
    }

    /// Smoothed pointwise association of the ordered pair `(a, b)`:
    ///
    /// `ln((c(a,b) + alpha) * T / ((c(a) + alpha) * (c(b) + alpha)))`
    ///
    /// with `c(a,b)` the window count, `c(x)` unigram counts and
    /// `T = N^2 / P` (`N` corpus tokens, `P` counted pairs), which makes the
    /// unsmoothed value equal to `ln(p(a,b) / (p(a) p(b)))`.
    pub fn association(&self, a: TokenId, b: TokenId, alpha: f64) -> f64 {
        let n = self.total_tokens as f64;
        let norm = n * n / self.total_pairs.max(1) as f64;
        math::ln(
            (self.window_count(a, b) as f64 + alpha) * norm
                / ((self.unigram(a) as f64 + alpha) * (self.unigram(b) as f64 + alpha)),
        )
    }

    pub fn to_text(&self) -> String {
        let mut out = table_header("skipgram", &self.k_max.to_string());
        for (t, c) in &self.unigrams {
            out.push_str(&format!("u\t{t}\t{c}\n"));
        }
        for ((a, b), c) in &self.pairs {
            let gaps: Vec<String> = c.iter().map(u64::to_string).collect();
            out.push_str(&format!("p\t{a}\t{b}\t{}\n", gaps.join(",")));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let (extra, rows) = parse_table(text, "skipgram")?;
        let k_max: usize = parse_num(extra.first().copied(), 0)?;
        let mut t = SkipGramTable {
            k_max,
            pairs: BTreeMap::new(),
            unigrams: BTreeMap::new(),
            total_tokens: 0,
            total_pairs: 0,
        };
        for (i, row) in rows.enumerate() {
            let mut f = row.split('\t');
            match f.next() {
                Some("u") => {
                    let id: TokenId = parse_num(f.next(), i + 1)?;
                    let c: u64 = parse_num(f.next(), i + 1)?;
                    t.total_tokens += c;
                    t.unigrams.insert(id, c);
                }
                Some("p") => {
                    let a: TokenId = parse_num(f.next(), i + 1)?;
                    let b: TokenId = parse_num(f.next(), i + 1)?;
                    let gaps = f
                        .next()
                        .unwrap_or("")
                        .split(',')
                        .map(|g| parse_num(Some(g), i + 1))
                        .collect::<Result<Vec<u64>>>()?;
                    if gaps.len() != k_max {
                        return Err(Error::format(format!("row {} has wrong gap count", i + 1)));
                    }
                    t.total_pairs += gaps.iter().sum::<u64>();
                    t.pairs.insert((a, b), gaps);
                }
                _ => return Err(Error::format(format!("bad skip-gram row {}", i + 1))),
            }
        }
        Ok(t)
    }
}

/// Mean per-token log probability of `line` (END included) under a smoothed
/// n-gram model.
pub fn score_ngram(model: &NGramModel, line: &[TokenId]) -> Result<f64> {
    if model.alpha() <= 0.0 {
        return Err(Error::contract("n-gram fluency scoring needs a smoothed model"));
    }
    match sequence_logprob(model, line, None)? {
        LogProb::Finite(lp) => Ok(lp / (line.len() + 1) as f64),
        LogProb::Impossible { position } => Err(Error::contract(format!(
            "smoothed model gave zero probability at position {position}"
        ))),
    }
}

/// Mean pairwise association of `line`; `None` for lines shorter than two
/// tokens, which pass the check automatically.
pub fn score_skipgram(table: &SkipGramTable, line: &[TokenId], alpha: f64) -> Option<f64> {
    if line.len() < 2 {
        return None;
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 0..line.len() {
        for gap in 1..=table.k_max {
            let Some(&b) = line.get(i + gap) else { break };
            sum += table.association(line[i], b, alpha);
            n += 1;
        }
    }
    Some(sum / n as f64)
}

/// Most frequent POS tag of each token in the tagged corpus; ties go to the
/// lowest tag id and untagged tokens map to the UNK tag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PosTagLexicon {
    tags: Vec<TokenId>,
}

impl PosTagLexicon {
    pub fn build(tokens: &Corpus, pos: &PosCorpus, vocab_size: usize) -> Result<Self> {
        let mut counts: Vec<BTreeMap<TokenId, u64>> = vec![BTreeMap::new(); vocab_size];
        if tokens.line_count() != pos.tags().line_count() {
            return Err(Error::contract("POS corpus is not aligned with the token corpus"));
        }
        for (line, tags) in tokens.lines().zip(pos.tags().lines()) {
            if line.len() != tags.len() {
                return Err(Error::contract("POS line length differs from token line"));
            }
            for (&t, &g) in line.iter().zip(tags) {
                *counts[t as usize].entry(g).or_insert(0) += 1;
            }
        }
        let tags = counts
            .iter()
            .map(|c| {
                c.iter()
                    .fold(None, |best: Option<(TokenId, u64)>, (&g, &n)| match best {
                        Some((_, bn)) if bn >= n => best,
                        _ => Some((g, n)),
                    })
                    .map_or(UNK, |(g, _)| g)
            })
            .collect();
        Ok(PosTagLexicon { tags })
    }

    pub fn tag(&self, token: TokenId) -> TokenId {
        self.tags.get(token as usize).copied().unwrap_or(UNK)
    }

    pub fn tag_line(&self, line: &[TokenId]) -> Vec<TokenId> {
        line.iter().map(|&t| self.tag(t)).collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = table_header("pos-lexicon", &self.tags.len().to_string());
        for (t, g) in self.tags.iter().enumerate() {
            out.push_str(&format!("{t}\t{g}\n"));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let (extra, rows) = parse_table(text, "pos-lexicon")?;
        let size: usize = parse_num(extra.first().copied(), 0)?;
        let mut tags = vec![UNK; size];
        for (i, row) in rows.enumerate() {
            let mut f = row.split('\t');
            let t: usize = parse_num(f.next(), i + 1)?;
            let g: TokenId = parse_num(f.next(), i + 1)?;
            *tags
                .get_mut(t)
                .ok_or_else(|| Error::format(format!("token {t} out of range")))? = g;
        }
        Ok(PosTagLexicon { tags })
    }
}

/// Trains a forward LSTM language model over POS tag sequences.
pub fn train_pos_lm(pos: &PosCorpus, config: &TrainConfig) -> Result<RecurrentModel> {
    let trained = train_recurrent(
        pos.tags(),
        pos.tag_vocab().len(),
        config,
        &[Direction::Forward],
        Conditioning::None,
    )?;
    Ok(trained.models.forward.expect("forward model was requested"))
}

/// Mean per-tag log probability of `line`'s tag sequence.
pub fn score_pos(pos_lm: &RecurrentModel, lexicon: &PosTagLexicon, line: &[TokenId]) -> Result<f64> {
    let tags = lexicon.tag_line(line);
    Ok(sequence_logprob(pos_lm, &tags, None)?.value() / (line.len() + 1) as f64)
}

/// Minimum scores for each check; `None` disables the check.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FluencyThresholds {
    pub ngram: Option<f64>,
    pub skipgram: Option<f64>,
    pub pos: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Check {
    Ngram,
    Skipgram,
    Pos,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    /// `None` when the check does not apply (one-token line for skip-gram).
    pub score: Option<f64>,
    pub threshold: f64,
    pub passed: bool,
}

impl CheckResult {
    fn new(score: Option<f64>, threshold: f64) -> Self {
        CheckResult {
            score,
            threshold,
            passed: score.is_none_or(|s| s >= threshold),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluencyReport {
    pub ngram: Option<CheckResult>,
    pub skipgram: Option<CheckResult>,
    pub pos: Option<CheckResult>,
    pub passed: bool,
}

impl FluencyReport {
    pub fn from_checks(
        ngram: Option<CheckResult>,
        skipgram: Option<CheckResult>,
        pos: Option<CheckResult>,
    ) -> Self {
        let passed = [ngram, skipgram, pos].iter().flatten().all(|c| c.passed);
        FluencyReport {
            ngram,
            skipgram,
            pos,
            passed,
        }
    }

    /// Report for a line that was not evaluated by any scorer.
    pub fn verdict_only(passed: bool) -> Self {
        FluencyReport {
            ngram: None,
            skipgram: None,
            pos: None,
            passed,
        }
    }

    fn checks(&self) -> [(Check, Option<CheckResult>); 3] {
        [
            (Check::Ngram, self.ngram),
            (Check::Skipgram, self.skipgram),
            (Check::Pos, self.pos),
        ]
    }

    pub fn failed_checks(&self) -> Vec<Check> {
        self.checks()
            .into_iter()
            .filter_map(|(c, r)| r.filter(|r| !r.passed).map(|_| c))
            .collect()
    }

    /// Smallest `score - threshold` over applicable checks; used to rank
    /// rejected candidates.
    pub fn margin(&self) -> f64 {
        self.checks()
            .iter()
            .filter_map(|(_, r)| r.and_then(|r| r.score.map(|s| s - r.threshold)))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Anything that can accept or reject a candidate line.
pub trait LineJudge: Send + Sync {
    fn judge(&self, line: &[TokenId]) -> Result<FluencyReport>;
}

/// Judge that accepts every line.
pub struct AcceptAll;

impl LineJudge for AcceptAll {
    fn judge(&self, _line: &[TokenId]) -> Result<FluencyReport> {
        Ok(FluencyReport::verdict_only(true))
    }
}

/// Judge that rejects every line.
pub struct RejectAll;

impl LineJudge for RejectAll {
    fn judge(&self, _line: &[TokenId]) -> Result<FluencyReport> {
        Ok(FluencyReport::verdict_only(false))
    }
}

#[derive(Debug, Clone)]
pub struct PosScorer {
    pub lm: RecurrentModel,
    pub lexicon: PosTagLexicon,
}

/// Raw scores of one line from each available scorer.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LineScores {
    pub ngram: Option<f64>,
    /// Outer `None`: scorer unavailable. Inner `None`: line too short.
    pub skipgram: Option<Option<f64>>,
    pub pos: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct FluencyEvaluator {
    pub ngram: Option<NGramModel>,
    pub skipgram: Option<SkipGramTable>,
    pub pos: Option<PosScorer>,
    pub skip_alpha: f64,
    pub thresholds: FluencyThresholds,
}

impl FluencyEvaluator {
    pub fn new(
        ngram: Option<NGramModel>,
        skipgram: Option<SkipGramTable>,
        pos: Option<PosScorer>,
    ) -> Self {
        FluencyEvaluator {
            ngram,
            skipgram,
            pos,
            skip_alpha: DEFAULT_SKIP_ALPHA,
            thresholds: FluencyThresholds::default(),
        }
    }

    pub fn with_thresholds(mut self, thresholds: FluencyThresholds) -> Self {
        self.thresholds = thresholds;
        self
    }

    pub fn scores(&self, line: &[TokenId]) -> Result<LineScores> {
        if line.is_empty() {
            return Err(Error::contract("cannot score an empty line"));
        }
        Ok(LineScores {
            ngram: self
                .ngram
                .as_ref()
                .map(|m| score_ngram(m, line))
                .transpose()?,
            skipgram: self
                .skipgram
                .as_ref()
                .map(|t| score_skipgram(t, line, self.skip_alpha)),
            pos: self
                .pos
                .as_ref()
                .map(|p| score_pos(&p.lm, &p.lexicon, line))
                .transpose()?,
        })
    }

    /// Compares each enabled check against its threshold.
    pub fn evaluate(&self, line: &[TokenId]) -> Result<FluencyReport> {
        let th = self.thresholds;
        if th.ngram.is_none() && th.skipgram.is_none() && th.pos.is_none() {
            return Err(Error::contract("no fluency check is enabled"));
        }
        let missing = |name: &str| Error::contract(format!("{name} check enabled without a scorer"));
        if th.ngram.is_some() && self.ngram.is_none() {
            return Err(missing("n-gram"));
        }
        if th.skipgram.is_some() && self.skipgram.is_none() {
            return Err(missing("skip-gram"));
        }
        if th.pos.is_some() && self.pos.is_none() {
            return Err(missing("POS"));
        }
        let s = self.scores(line)?;
        Ok(FluencyReport::from_checks(
            th.ngram.map(|t| CheckResult::new(s.ngram, t)),
            th.skipgram.map(|t| CheckResult::new(s.skipgram.flatten(), t)),
            th.pos.map(|t| CheckResult::new(s.pos, t)),
        ))
    }

    pub fn evaluate_batch(&self, lines: &[Vec<TokenId>], exec: Exec) -> Vec<Result<FluencyReport>> {
        exec.map(lines, |l| self.evaluate(l))
    }
}

/// Free-function form of [`FluencyEvaluator::evaluate`].
pub fn evaluate(
    line: &[TokenId],
    scorers: &FluencyEvaluator,
    thresholds: FluencyThresholds,
) -> Result<FluencyReport> {
    FluencyEvaluator {
        thresholds,
        ..scorers.clone()
    }
    .evaluate(line)
}

impl LineJudge for FluencyEvaluator {
    fn judge(&self, line: &[TokenId]) -> Result<FluencyReport> {
        self.evaluate(line)
    }
}

/// Score at the given lower percentile (0-100): the value at sorted index
/// `floor(p/100 * n)`, so at least `(1 - p/100) * n` of `scores` lie at or
/// above it.
pub fn percentile(scores: &[f64], p: f64) -> Option<f64> {
    if scores.is_empty() {
        return None;
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = ((p / 100.0) * sorted.len() as f64).floor() as usize;
    Some(sorted[k.min(sorted.len() - 1)])
}

/// Thresholds at the `p`-th percentile of each available scorer over
/// `lines`. Scorers the evaluator lacks stay disabled.
pub fn calibrate(
    scorers: &FluencyEvaluator,
    lines: &[Vec<TokenId>],
    p: f64,
    exec: Exec,
) -> Result<FluencyThresholds> {
    if !(0.0..100.0).contains(&p) {
        return Err(Error::Config(format!("percentile {p} outside [0, 100)")));
    }
    let scores = exec
        .map(lines, |l| scorers.scores(l))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let ngram: Vec<f64> = scores.iter().filter_map(|s| s.ngram).collect();
    let skip: Vec<f64> = scores.iter().filter_map(|s| s.skipgram.flatten()).collect();
    let pos: Vec<f64> = scores.iter().filter_map(|s| s.pos).collect();
    Ok(FluencyThresholds {
        ngram: percentile(&ngram, p),
        skipgram: percentile(&skip, p),
        pos: percentile(&pos, p),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ingest_str, IngestOptions, Mode, Vocabulary};
    use crate::langmodel::{train_ngram, Direction};

    const TOY1: &str =
        "the city sleeps\nbusy streets go quiet\n\nthe moon over the city\na child smiles\n";

    fn toy() -> (Corpus, Vocabulary) {
        ingest_str(TOY1, "toy1", Mode::Word, IngestOptions::default()).unwrap()
    }

    #[test]
    fn skipgram_enumeration() {
        let c = Corpus::from_poems(vec![vec![vec![3, 4, 5]]], Mode::Word).unwrap();
        let t = build_skipgram(&c, 2).unwrap();
        assert_eq!(t.count(3, 4, 1), 1);
        assert_eq!(t.count(4, 5, 1), 1);
        assert_eq!(t.count(3, 5, 2), 1);
        assert_eq!(t.count(3, 5, 1), 0);
        assert_eq!(t.count(4, 3, 1), 0);
        assert!(build_skipgram(&c, 0).is_err());
    }

    #[test]
    fn toy1_skipgram_counts() {
        let (c, v) = toy();
        let t = build_skipgram(&c, 2).unwrap();
        let id = |w| v.id(w).unwrap();
        assert_eq!(t.count(id("the"), id("city"), 1), 2);
        assert_eq!(t.count(id("the"), id("city"), 2), 0);
        assert_eq!(t.count(id("the"), id("the"), 2), 0);
        assert_eq!(t.count(id("moon"), id("the"), 2), 1);
    }

    #[test]
    fn k1_table_is_bigram_successor_counts() {
        let (c, v) = toy();
        let t = build_skipgram(&c, 1).unwrap();
        let bigram = train_ngram(&c, v.len(), 2, Direction::Forward, 0.0).unwrap();
        for a in v.surface_ids() {
            for b in v.surface_ids() {
                assert_eq!(t.count(a, b, 1), bigram.count(&[a], b));
            }
        }
    }

    #[test]
    fn skipgram_score_prefers_attested_pairs() {
        let (c, v) = toy();
        let t = build_skipgram(&c, DEFAULT_K_MAX).unwrap();
        let good = score_skipgram(&t, &v.encode("the city sleeps"), DEFAULT_SKIP_ALPHA).unwrap();
        let bad = score_skipgram(&t, &v.encode("sleeps quiet moon"), DEFAULT_SKIP_ALPHA).unwrap();
        assert!(good > bad, "{good} vs {bad}");
        assert_eq!(score_skipgram(&t, &v.encode("city"), DEFAULT_SKIP_ALPHA), None);
    }

    #[test]
    fn association_is_monotone_in_pair_count() {
        let (c, v) = toy();
        let t = build_skipgram(&c, 2).unwrap();
        let mut bumped = t.clone();
        let (a, b) = (v.id("child").unwrap(), v.id("quiet").unwrap());
        bumped.pairs.insert((a, b), vec![3, 0]);
        assert!(bumped.association(a, b, 0.5) > t.association(a, b, 0.5));
    }

    #[test]
    fn single_token_ngram_score() {
        let (c, v) = toy();
        let m = train_ngram(&c, v.len(), 2, Direction::Forward, 0.01).unwrap();
        let city = v.id("city").unwrap();
        let expected = (math::ln(m.prob(&[crate::corpus::START], city))
            + math::ln(m.prob(&[city], crate::corpus::END)))
            / 2.0;
        assert!((score_ngram(&m, &[city]).unwrap() - expected).abs() < 1e-12);
        let unsmoothed = train_ngram(&c, v.len(), 2, Direction::Forward, 0.0).unwrap();
        assert!(score_ngram(&unsmoothed, &[city]).is_err());
    }

    #[test]
    fn lexicon_picks_most_frequent_tag() {
        let (c, v) = toy();
        let pos = PosCorpus::parse(
            "#aligns toy1.txt\nDT NN VB\nJJ NN VB JJ\n\nDT NN IN DT NN\nDT NN VB\n",
            "toy1.pos",
            &c,
        )
        .unwrap();
        let lex = PosTagLexicon::build(&c, &pos, v.len()).unwrap();
        let tag = |w: &str| pos.tag_vocab().token(lex.tag(v.id(w).unwrap())).unwrap().to_string();
        assert_eq!(tag("the"), "DT");
        assert_eq!(tag("city"), "NN");
        assert_eq!(tag("quiet"), "JJ");
        assert_eq!(lex.tag(UNK), UNK);
        assert_eq!(lex.tag(9999), UNK);
        assert_eq!(PosTagLexicon::from_text(&lex.to_text()).unwrap(), lex);
    }

    #[test]
    fn evaluate_conjunction_and_naming() {
        let (c, v) = toy();
        let m = train_ngram(&c, v.len(), 2, Direction::Forward, 0.01).unwrap();
        let t = build_skipgram(&c, 2).unwrap();
        let ev = FluencyEvaluator::new(Some(m), Some(t), None);
        let line = v.encode("the city sleeps");
        let s = ev.scores(&line).unwrap();

        let only_ngram = FluencyThresholds {
            ngram: Some(s.ngram.unwrap() - 1.0),
            ..Default::default()
        };
        assert!(evaluate(&line, &ev, only_ngram).unwrap().passed);

        let skip_fails = FluencyThresholds {
            ngram: Some(s.ngram.unwrap() - 1.0),
            skipgram: Some(s.skipgram.flatten().unwrap() + 1.0),
            pos: None,
        };
        let r = evaluate(&line, &ev, skip_fails).unwrap();
        assert!(!r.passed);
        assert_eq!(r.failed_checks(), vec![Check::Skipgram]);
        assert!(r.margin() < 0.0);

        assert!(evaluate(&line, &ev, FluencyThresholds::default()).is_err());
        let pos_without_scorer = FluencyThresholds {
            pos: Some(0.0),
            ..Default::default()
        };
        assert!(evaluate(&line, &ev, pos_without_scorer).is_err());
        assert_eq!(
            evaluate(&line, &ev, skip_fails).unwrap(),
            evaluate(&line, &ev, skip_fails).unwrap()
        );
    }

    #[test]
    fn percentile_guarantees_pass_rate() {
        let scores: Vec<f64> = (0..200).map(|i| ((i * 37) % 101) as f64).collect();
        for p in [0.0, 5.0, 10.0, 50.0] {
            let t = percentile(&scores, p).unwrap();
            let passing = scores.iter().filter(|&&s| s >= t).count();
            assert!(passing as f64 >= (1.0 - p / 100.0) * scores.len() as f64);
        }
        assert_eq!(percentile(&[], 5.0), None);
    }

    #[test]
    fn skipgram_table_round_trip() {
        let (c, _) = toy();
        let t = build_skipgram(&c, 3).unwrap();
        assert_eq!(SkipGramTable::from_text(&t.to_text()).unwrap(), t);
    }
}
