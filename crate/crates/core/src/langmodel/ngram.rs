use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use super::{check_condition, ConditionalLanguageModel, Direction, NextTokenDistribution};
use crate::corpus::{Corpus, END, START};
use crate::persist::{content_id, Reader, Writer};
use crate::{Error, Result, TokenId};

const KIND: &str = "ngram";

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct ContextCounts {
    total: u64,
    next: BTreeMap<TokenId, u64>,
}

/// Count-based n-gram model with add-alpha smoothing.
///
/// Every context length from 0 to `order - 1` is counted, so a prefix shorter
/// than the full context (a mid-line seed, say) gets the marginal statistics
/// for what it does contain. A context never seen in training backs off to
/// its longest seen suffix. For a seen context,
/// `P(w | ctx) = (c(ctx, w) + alpha) / (c(ctx) + alpha * (V - 1))`;
/// START is never predicted, so the support has `V - 1` entries.
#[derive(Debug)]
pub struct NGramModel {
    order: usize,
    direction: Direction,
    alpha: f64,
    vocab_size: usize,
    contexts: BTreeMap<Vec<TokenId>, ContextCounts>,
    id: OnceLock<String>,
}

impl Clone for NGramModel {
    fn clone(&self) -> Self {
        NGramModel {
            order: self.order,
            direction: self.direction,
            alpha: self.alpha,
            vocab_size: self.vocab_size,
            contexts: self.contexts.clone(),
            id: OnceLock::new(),
        }
    }
}

impl PartialEq for NGramModel {
    fn eq(&self, other: &Self) -> bool {
        self.order == other.order
            && self.direction == other.direction
            && self.alpha.to_bits() == other.alpha.to_bits()
            && self.vocab_size == other.vocab_size
            && self.contexts == other.contexts
    }
}

/// Counts an n-gram model over `corpus`. Backward models count the reversed
/// corpus.
pub fn train_ngram(
    corpus: &Corpus,
    vocab_size: usize,
    order: usize,
    direction: Direction,
    alpha: f64,
) -> Result<NGramModel> {
    if order < 1 {
        return Err(Error::Config("n-gram order must be at least 1".into()));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::Config(format!("smoothing constant {alpha} must be >= 0")));
    }
    if vocab_size <= END as usize {
        return Err(Error::Config("vocabulary too small".into()));
    }
    let oriented = direction.orient(corpus);
    let mut contexts: BTreeMap<Vec<TokenId>, ContextCounts> = BTreeMap::new();
    for line in oriented.lines() {
        if let Some(&bad) = line.iter().find(|&&t| t as usize >= vocab_size) {
            return Err(Error::contract(format!("token {bad} outside vocabulary")));
        }
        let mut padded = vec![START; order - 1];
        padded.extend_from_slice(line);
        padded.push(END);
        for pos in order - 1..padded.len() {
            let target = padded[pos];
            for k in 0..order {
                let ctx = padded[pos - k..pos].to_vec();
                let entry = contexts.entry(ctx).or_default();
                entry.total += 1;
                *entry.next.entry(target).or_insert(0) += 1;
            }
        }
    }
    Ok(NGramModel {
        order,
        direction,
        alpha,
        vocab_size,
        contexts,
        id: OnceLock::new(),
    })
}

impl NGramModel {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Number of times `next` followed exactly `context`.
    pub fn count(&self, context: &[TokenId], next: TokenId) -> u64 {
        self.contexts
            .get(context)
            .and_then(|c| c.next.get(&next))
            .copied()
            .unwrap_or(0)
    }

    /// Number of times `context` was followed by anything.
    pub fn context_total(&self, context: &[TokenId]) -> u64 {
        self.contexts.get(context).map_or(0, |c| c.total)
    }

    /// Every stored context with its successor counts.
    pub fn contexts(&self) -> impl Iterator<Item = (&[TokenId], &BTreeMap<TokenId, u64>)> {
        self.contexts.iter().map(|(k, v)| (k.as_slice(), &v.next))
    }

    /// The context actually used for `prefix` after truncation, START padding
    /// and back-off.
    pub fn effective_context(&self, prefix: &[TokenId]) -> Vec<TokenId> {
        let width = self.order - 1;
        let mut ctx: Vec<TokenId> = if prefix.len() >= width {
            prefix[prefix.len() - width..].to_vec()
        } else if prefix.first() == Some(&START) {
            let mut padded = vec![START; width - prefix.len()];
            padded.extend_from_slice(prefix);
            padded
        } else {
            prefix.to_vec()
        };
        while !ctx.is_empty() && self.context_total(&ctx) == 0 {
            ctx.remove(0);
        }
        ctx
    }

    fn support(&self) -> f64 {
        (self.vocab_size - 1) as f64
    }

    /// Smoothed probability of `next` after `prefix`.
    pub fn prob(&self, prefix: &[TokenId], next: TokenId) -> f64 {
        if next == START || next as usize >= self.vocab_size {
            return 0.0;
        }
        let ctx = self.effective_context(prefix);
        let num = self.count(&ctx, next) as f64 + self.alpha;
        let den = self.context_total(&ctx) as f64 + self.alpha * self.support();
        num / den
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(KIND);
        w.put_u32(self.order as u32);
        w.put_str(self.direction.as_str());
        w.put_f64(self.alpha);
        w.put_u64(self.vocab_size as u64);
        w.put_u64(self.contexts.len() as u64);
        for (ctx, counts) in &self.contexts {
            w.put_u64(ctx.len() as u64);
            for &t in ctx {
                w.put_u32(t);
            }
            w.put_u64(counts.next.len() as u64);
            for (&t, &c) in &counts.next {
                w.put_u32(t);
                w.put_u64(c);
            }
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open(bytes, KIND)?;
        let order = r.get_u32()? as usize;
        let direction = r.get_str()?.parse()?;
        let alpha = r.get_f64()?;
        let vocab_size = r.get_u64()? as usize;
        let n = r.get_len()?;
        let mut contexts = BTreeMap::new();
        for _ in 0..n {
            let len = r.get_len()?;
            let ctx = (0..len).map(|_| r.get_u32()).collect::<Result<Vec<_>>>()?;
            let m = r.get_len()?;
            let mut counts = ContextCounts::default();
            for _ in 0..m {
                let t = r.get_u32()?;
                let c = r.get_u64()?;
                counts.total += c;
                counts.next.insert(t, c);
            }
            contexts.insert(ctx, counts);
        }
        r.finish()?;
        if order < 1 || !contexts.contains_key(&Vec::new()) {
            return Err(Error::format("n-gram model has no unigram counts"));
        }
        Ok(NGramModel {
            order,
            direction,
            alpha,
            vocab_size,
            contexts,
            id: OnceLock::new(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::persist::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

impl ConditionalLanguageModel for NGramModel {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn direction(&self) -> Direction {
        self.direction
    }

    fn next_dist(
        &self,
        prefix: &[TokenId],
        condition: Option<&[f64]>,
    ) -> Result<NextTokenDistribution> {
        check_condition(0, condition)?;
        if let Some(&bad) = prefix.iter().find(|&&t| t as usize >= self.vocab_size) {
            return Err(Error::contract(format!("token {bad} outside vocabulary")));
        }
        let ctx = self.effective_context(prefix);
        let entry = self.contexts.get(&ctx).expect("unigram context always exists");
        let den = entry.total as f64 + self.alpha * self.support();
        let mut probs = vec![self.alpha / den; self.vocab_size];
        probs[START as usize] = 0.0;
        for (&t, &c) in &entry.next {
            probs[t as usize] = (c as f64 + self.alpha) / den;
        }
        NextTokenDistribution::new(probs)
    }

    fn model_id(&self) -> String {
        self.id.get_or_init(|| content_id(&self.to_bytes())).clone()
    }
}
