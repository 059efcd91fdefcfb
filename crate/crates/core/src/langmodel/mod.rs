//! Next-token models behind one contract.
//!
//! Two families implement [`ConditionalLanguageModel`]: [`NGramModel`], an
//! exact count model with additive smoothing, and [`RecurrentModel`], a
//! stacked LSTM that can take a condition vector at every step. A backward
//! model is the same thing trained on reversed lines; callers hand it its
//! prefix in its own reading order (line end first).
//!
//! [`SentenceEncoder`] and [`PoemStateModel`] form the poem-level half of the
//! hierarchical model: the encoder turns a line into a content vector and the
//! poem-state recurrence predicts the next line's content vector from all
//! previous ones.

mod gradcheck;
mod ngram;
mod nn;
mod recurrent;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use gradcheck::{analytic_gradients, gradient_check, relative_error, GradientCheckReport};
pub use ngram::{train_ngram, NGramModel};
pub use recurrent::{
    encode_sentence, poem_state_advance, LmShape, PoemStateModel, RecurrentModel, SentenceEncoder,
};
pub use train::{
    train_recurrent, train_recurrent_with, AdamConfig, Conditioning, EpochLoss, ModelSet,
    TrainConfig, TrainedRecurrent,
};

use crate::corpus::{Corpus, END, START};
use crate::{math, Error, Result, TokenId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    /// The corpus as this direction's model reads it.
    pub fn orient(self, corpus: &Corpus) -> Corpus {
        match self {
            Direction::Forward => corpus.clone(),
            Direction::Backward => corpus.reversed(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forward" => Ok(Direction::Forward),
            "backward" => Ok(Direction::Backward),
            other => Err(Error::format(format!("unknown direction {other:?}"))),
        }
    }
}

/// Probabilities over the whole vocabulary, indexed by token id.
#[derive(Debug, Clone, PartialEq)]
pub struct NextTokenDistribution {
    probs: Vec<f64>,
}

impl NextTokenDistribution {
    pub const SUM_TOLERANCE: f64 = 1e-9;

    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::contract("distribution has a negative or non-finite entry"));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::contract(format!("distribution sums to {sum}")));
        }
        Ok(NextTokenDistribution { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, id: TokenId) -> f64 {
        self.probs.get(id as usize).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Highest-probability id; ties go to the lowest id.
    pub fn argmax(&self) -> TokenId {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best as TokenId
    }

    pub fn total_variation(&self, other: &NextTokenDistribution) -> f64 {
        0.5 * self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }
}

/// Log probability of a whole line. Unsmoothed models can assign zero
/// probability; that case is kept apart from finite scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LogProb {
    Finite(f64),
    /// The token at `position` (the END slot when equal to the line length)
    /// has zero probability.
    Impossible { position: usize },
}

impl LogProb {
    pub fn value(self) -> f64 {
        match self {
            LogProb::Finite(v) => v,
            LogProb::Impossible { .. } => f64::NEG_INFINITY,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, LogProb::Finite(_))
    }
}

pub trait ConditionalLanguageModel: Send + Sync {
    fn vocab_size(&self) -> usize;

    fn direction(&self) -> Direction;

    /// Width of the accepted condition vector; 0 for unconditioned models.
    fn condition_width(&self) -> usize {
        0
    }

    /// Distribution of the token following `prefix` (given in this model's
    /// reading order). A conditioned model given no condition uses zeros.
    fn next_dist(
        &self,
        prefix: &[TokenId],
        condition: Option<&[f64]>,
    ) -> Result<NextTokenDistribution>;

    /// Per-position log probabilities of `line` followed by END, reading from
    /// a START boundary. Models may override this with a single pass.
    fn token_logprobs(&self, line: &[TokenId], condition: Option<&[f64]>) -> Result<Vec<f64>> {
        let mut prefix = Vec::with_capacity(line.len() + 1);
        prefix.push(START);
        let mut out = Vec::with_capacity(line.len() + 1);
        for &t in line.iter().chain(std::iter::once(&END)) {
            let d = self.next_dist(&prefix, condition)?;
            out.push(math::ln(d.prob(t)));
            prefix.push(t);
        }
        Ok(out)
    }

    /// Short content hash identifying the trained parameters.
    fn model_id(&self) -> String;
}

pub(crate) fn check_condition(width: usize, condition: Option<&[f64]>) -> Result<()> {
    match condition {
        Some(_) if width == 0 => Err(Error::contract(
            "condition supplied to an unconditioned model",
        )),
        Some(c) if c.len() != width => Err(Error::contract(format!(
            "condition width {} but model expects {width}",
            c.len()
        ))),
        _ => Ok(()),
    }
}

/// Free-function form of [`ConditionalLanguageModel::next_dist`].
pub fn lm_next_dist(
    model: &dyn ConditionalLanguageModel,
    prefix: &[TokenId],
    condition: Option<&[f64]>,
) -> Result<NextTokenDistribution> {
    model.next_dist(prefix, condition)
}

/// Sum of log P(token | prefix) over `line` plus the closing END.
pub fn sequence_logprob(
    model: &dyn ConditionalLanguageModel,
    line: &[TokenId],
    condition: Option<&[f64]>,
) -> Result<LogProb> {
    if line.is_empty() {
        return Err(Error::contract("cannot score an empty line"));
    }
    let per_token = model.token_logprobs(line, condition)?;
    if let Some(position) = per_token.iter().position(|v| *v == f64::NEG_INFINITY) {
        return Ok(LogProb::Impossible { position });
    }
    Ok(LogProb::Finite(per_token.iter().sum()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distribution_validation() {
        assert!(NextTokenDistribution::new(vec![0.5, 0.5]).is_ok());
        assert!(NextTokenDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(NextTokenDistribution::new(vec![1.5, -0.5]).is_err());
        assert!(NextTokenDistribution::new(vec![f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn argmax_prefers_lowest_id_on_ties() {
        let d = NextTokenDistribution::new(vec![0.0, 0.4, 0.2, 0.4]).unwrap();
        assert_eq!(d.argmax(), 1);
    }

    #[test]
    fn condition_checks() {
        assert!(check_condition(0, None).is_ok());
        assert!(check_condition(0, Some(&[1.0])).is_err());
        assert!(check_condition(2, Some(&[1.0])).is_err());
        assert!(check_condition(2, Some(&[1.0, 0.0])).is_ok());
        assert!(check_condition(2, None).is_ok());
    }
}
