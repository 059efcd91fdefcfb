//! Joint minibatch training of the recurrent model family.
//!
//! A [`ModelSet`] bundles whichever of the forward LM, backward LM, sentence
//! encoder and poem-state model a conditioning mode needs; all of them are
//! trained together against the summed token NLL of both directions.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::nn::Params;
use super::recurrent::{EncoderTrace, LmShape, PoemStateModel, RecurrentModel, SentenceEncoder};
use super::{ConditionalLanguageModel, Direction};
use crate::corpus::{Corpus, Line, Poem};
use crate::par::Exec;
use crate::{math, Error, Result};

/// What the sentence-level models are conditioned on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Conditioning {
    /// Plain language models.
    #[default]
    None,
    /// The encoding of the previous line (zeros for the first line).
    PreviousLine,
    /// The poem-state prediction from all previous lines.
    #[serde(rename = "hierarchical", alias = "poem-state")]
    PoemState,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub d_emb: usize,
    pub hidden: usize,
    pub layers: usize,
    pub d_enc: usize,
    pub learning_rate: f64,
    /// Multiplicative learning-rate decay applied once per epoch.
    pub lr_decay: f64,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Global gradient-norm clip.
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::desk()
    }
}

impl TrainConfig {
    /// Small sizes that train in seconds on a laptop.
    pub fn desk() -> Self {
        TrainConfig {
            d_emb: 32,
            hidden: 64,
            layers: 1,
            d_enc: 16,
            learning_rate: 0.01,
            lr_decay: 1.0,
            adam: AdamConfig::default(),
            batch_size: 16,
            epochs: 30,
            seed: 1,
            clip_norm: 5.0,
        }
    }

    /// Three 1024-unit layers at both levels, 64-wide sentence encoding,
    /// minibatches of 128.
    pub fn paper_scale() -> Self {
        TrainConfig {
            d_emb: 256,
            hidden: 1024,
            layers: 3,
            d_enc: 64,
            batch_size: 128,
            ..TrainConfig::desk()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(TrainConfig::desk()),
            "paper-scale" => Ok(TrainConfig::paper_scale()),
            other => Err(Error::Config(format!("unknown training preset {other:?}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("d_emb", self.d_emb),
            ("hidden", self.hidden),
            ("layers", self.layers),
            ("d_enc", self.d_enc),
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        let reals = [
            ("learning_rate", self.learning_rate),
            ("lr_decay", self.lr_decay),
            ("clip_norm", self.clip_norm),
            ("adam.epsilon", self.adam.epsilon),
        ];
        if let Some((name, _)) = reals.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        for (name, b) in [("adam.beta1", self.adam.beta1), ("adam.beta2", self.adam.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must be in [0, 1)")));
            }
        }
        Ok(())
    }
}

/// Mean per-token NLL over one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub mean_nll: f64,
}

impl EpochLoss {
    pub fn perplexity(&self) -> f64 {
        math::exp(self.mean_nll)
    }
}

/// The networks trained together for one conditioning mode.
#[derive(Debug, Clone)]
pub struct ModelSet {
    pub conditioning: Conditioning,
    pub forward: Option<RecurrentModel>,
    pub backward: Option<RecurrentModel>,
    pub encoder: Option<SentenceEncoder>,
    pub poem_state: Option<PoemStateModel>,
}

/// Gradient vectors aligned with [`ModelSet::components`]; absent
/// components get empty vectors.
pub(crate) type Grads = [Vec<f64>; 4];

pub(crate) const COMPONENT_NAMES: [&str; 4] = ["forward", "backward", "encoder", "poem_state"];

impl ModelSet {
    /// Freshly initialised networks for `directions` under `conditioning`.
    pub fn new(
        vocab_size: usize,
        config: &TrainConfig,
        directions: &[Direction],
        conditioning: Conditioning,
    ) -> Result<Self> {
        config.validate()?;
        if directions.is_empty() {
            return Err(Error::Config("at least one direction must be trained".into()));
        }
        let d_ctx = match conditioning {
            Conditioning::None => 0,
            _ => config.d_enc,
        };
        let shape = LmShape {
            vocab_size,
            d_emb: config.d_emb,
            hidden: config.hidden,
            layers: config.layers,
            d_ctx,
        };
        let lm = |d: Direction| -> Result<Option<RecurrentModel>> {
            if directions.contains(&d) {
                RecurrentModel::new(shape, d, config.seed).map(Some)
            } else {
                Ok(None)
            }
        };
        let encoder = match conditioning {
            Conditioning::None => None,
            _ => Some(SentenceEncoder::new(
                vocab_size,
                config.d_emb,
                config.d_enc,
                config.seed,
            )?),
        };
        let poem_state = match conditioning {
            Conditioning::PoemState => Some(PoemStateModel::new(
                config.d_enc,
                config.hidden,
                config.layers,
                config.seed,
            )?),
            _ => None,
        };
        Ok(ModelSet {
            conditioning,
            forward: lm(Direction::Forward)?,
            backward: lm(Direction::Backward)?,
            encoder,
            poem_state,
        })
    }

    pub(crate) fn components(&self) -> [Option<&Params>; 4] {
        [
            self.forward.as_ref().map(|m| &m.params),
            self.backward.as_ref().map(|m| &m.params),
            self.encoder.as_ref().map(|m| &m.params),
            self.poem_state.as_ref().map(|m| &m.params),
        ]
    }

    pub(crate) fn components_mut(&mut self) -> [Option<&mut Params>; 4] {
        [
            self.forward.as_mut().map(|m| &mut m.params),
            self.backward.as_mut().map(|m| &mut m.params),
            self.encoder.as_mut().map(|m| &mut m.params),
            self.poem_state.as_mut().map(|m| &mut m.params),
        ]
    }

    pub(crate) fn zero_grads(&self) -> Grads {
        self.components()
            .map(|c| c.map_or_else(Vec::new, |p| vec![0.0; p.len()]))
    }

    /// Training units: whole poems when lines are conditioned on each other,
    /// single lines otherwise.
    pub fn units(&self, corpus: &Corpus) -> Vec<Poem> {
        match self.conditioning {
            Conditioning::None => corpus.lines().map(|l| vec![l.clone()]).collect(),
            _ => corpus.poems().to_vec(),
        }
    }

    fn check_unit(&self, unit: &[Line]) -> Result<()> {
        let vocab = self
            .forward
            .as_ref()
            .or(self.backward.as_ref())
            .map(|m| m.shape().vocab_size)
            .unwrap_or(0);
        for line in unit {
            if line.is_empty() {
                return Err(Error::contract("empty line in training data"));
            }
            if let Some(bad) = line.iter().find(|&&t| t as usize >= vocab) {
                return Err(Error::contract(format!("token {bad} outside vocabulary")));
            }
        }
        Ok(())
    }

    /// Summed NLL and predicted-token count of one unit; accumulates raw
    /// (unnormalised) gradients when `grads` is given.
    pub(crate) fn unit_loss(&self, unit: &[Line], mut grads: Option<&mut Grads>) -> (f64, usize) {
        let m = unit.len();
        let enc_p = self.encoder.as_ref().map(|e| e.params.data.as_slice());
        let encodings: Vec<EncoderTrace> = match (&self.encoder, self.conditioning) {
            (Some(enc), Conditioning::PreviousLine | Conditioning::PoemState) => unit[..m - 1]
                .iter()
                .map(|l| enc.forward(enc_p.unwrap(), l))
                .collect(),
            _ => Vec::new(),
        };
        let contents: Vec<Vec<f64>> = encodings.iter().map(|e| e.content.clone()).collect();

        let poem_trace = match (&self.poem_state, self.conditioning) {
            (Some(ps), Conditioning::PoemState) => Some(ps.forward(&ps.params.data, &contents)),
            _ => None,
        };
        let conditions: Vec<Vec<f64>> = match self.conditioning {
            Conditioning::None => vec![Vec::new(); m],
            Conditioning::PreviousLine => {
                let width = self.encoder.as_ref().map_or(0, |e| e.width());
                std::iter::once(vec![0.0; width])
                    .chain(contents.iter().cloned())
                    .collect()
            }
            Conditioning::PoemState => poem_trace.as_ref().unwrap().predictions.clone(),
        };

        let mut d_cond: Vec<Vec<f64>> = conditions.iter().map(|c| vec![0.0; c.len()]).collect();
        let mut nll = 0.0;
        let mut tokens = 0;
        let lms = [(0usize, &self.forward), (1usize, &self.backward)];
        for (j, line) in unit.iter().enumerate() {
            for &(slot, lm) in &lms {
                let Some(lm) = lm else { continue };
                let oriented: Vec<_> = match lm.direction() {
                    Direction::Forward => line.clone(),
                    Direction::Backward => line.iter().rev().copied().collect(),
                };
                let p = &lm.params.data;
                let (l, trace) = lm.forward_line(p, &oriented, &conditions[j]);
                nll += l;
                tokens += oriented.len() + 1;
                if let Some(g) = grads.as_deref_mut() {
                    let dc = lm.backward_line(p, &mut g[slot], &trace, 1.0);
                    for (a, b) in d_cond[j].iter_mut().zip(&dc) {
                        *a += b;
                    }
                }
            }
        }

        if let Some(g) = grads {
            let d_contents: Vec<Vec<f64>> = match self.conditioning {
                Conditioning::None => Vec::new(),
                Conditioning::PreviousLine => d_cond[1..].to_vec(),
                Conditioning::PoemState => {
                    let ps = self.poem_state.as_ref().unwrap();
                    ps.backward(&ps.params.data, &mut g[3], poem_trace.as_ref().unwrap(), &d_cond)
                }
            };
            if let Some(enc) = &self.encoder {
                for (et, dc) in encodings.iter().zip(&d_contents) {
                    enc.backward(&enc.params.data, &mut g[2], et, dc);
                }
            }
        }
        (nll, tokens)
    }

    /// Summed NLL, token count and raw gradients over `batch`.
    ///
    /// The batch is cut into a fixed number of contiguous chunks; each chunk
    /// accumulates sequentially and chunk results are added in order, so the
    /// result does not depend on `exec` or the thread count.
    pub(crate) fn batch_gradient(&self, batch: &[&Poem], exec: Exec) -> (f64, usize, Grads) {
        const CHUNKS: usize = 8;
        let chunk_len = batch.len().div_ceil(CHUNKS).max(1);
        let chunks: Vec<&[&Poem]> = batch.chunks(chunk_len).collect();
        let partial = exec.map(&chunks, |chunk| {
            let mut g = self.zero_grads();
            let mut nll = 0.0;
            let mut tokens = 0;
            for unit in chunk.iter() {
                let (l, t) = self.unit_loss(unit, Some(&mut g));
                nll += l;
                tokens += t;
            }
            (nll, tokens, g)
        });
        let mut total = self.zero_grads();
        let mut nll = 0.0;
        let mut tokens = 0;
        for (l, t, g) in partial {
            nll += l;
            tokens += t;
            for (acc, part) in total.iter_mut().zip(&g) {
                for (a, b) in acc.iter_mut().zip(part) {
                    *a += b;
                }
            }
        }
        (nll, tokens, total)
    }

    /// Mean per-token NLL of `units` (both directions when present).
    pub fn mean_nll_units(&self, units: &[Poem], exec: Exec) -> Result<f64> {
        for u in units {
            self.check_unit(u)?;
        }
        let parts = exec.map(units, |u| self.unit_loss(u, None));
        let (nll, tokens) = parts
            .into_iter()
            .fold((0.0, 0), |(a, b), (l, t)| (a + l, b + t));
        Ok(nll / tokens as f64)
    }

    /// Mean per-token NLL over `corpus`.
    pub fn mean_nll(&self, corpus: &Corpus) -> Result<f64> {
        self.mean_nll_units(&self.units(corpus), Exec::default())
    }

    /// Per-token perplexity over `corpus`.
    pub fn perplexity(&self, corpus: &Corpus) -> Result<f64> {
        Ok(math::exp(self.mean_nll(corpus)?))
    }
}

struct Adam {
    config: AdamConfig,
    m: Grads,
    v: Grads,
    t: i32,
}

impl Adam {
    fn new(config: AdamConfig, shape: &Grads) -> Self {
        let zeros = shape.clone().map(|g| vec![0.0; g.len()]);
        Adam {
            config,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    fn step(&mut self, set: &mut ModelSet, grads: &Grads, lr: f64) {
        self.t += 1;
        let AdamConfig {
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let c1 = 1.0 - libm::pow(beta1, self.t as f64);
        let c2 = 1.0 - libm::pow(beta2, self.t as f64);
        for (k, params) in set.components_mut().into_iter().enumerate() {
            let Some(params) = params else { continue };
            for (i, p) in params.data.iter_mut().enumerate() {
                let g = grads[k][i];
                let m = &mut self.m[k][i];
                let v = &mut self.v[k][i];
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *p -= lr * (*m / c1) / (math::sqrt(*v / c2) + epsilon);
            }
        }
    }
}

/// Result of [`train_recurrent`].
#[derive(Debug, Clone)]
pub struct TrainedRecurrent {
    pub models: ModelSet,
    pub history: Vec<EpochLoss>,
}

impl TrainedRecurrent {
    pub fn final_loss(&self) -> Option<EpochLoss> {
        self.history.last().copied()
    }
}

/// [`train_recurrent_with`] using the default execution strategy.
pub fn train_recurrent(
    corpus: &Corpus,
    vocab_size: usize,
    config: &TrainConfig,
    directions: &[Direction],
    conditioning: Conditioning,
) -> Result<TrainedRecurrent> {
    train_recurrent_with(corpus, vocab_size, config, directions, conditioning, Exec::default())
}

/// Trains the networks `conditioning` needs for each of `directions` with
/// Adam on the mean per-token NLL. Deterministic given `config.seed`.
pub fn train_recurrent_with(
    corpus: &Corpus,
    vocab_size: usize,
    config: &TrainConfig,
    directions: &[Direction],
    conditioning: Conditioning,
    exec: Exec,
) -> Result<TrainedRecurrent> {
    let mut set = ModelSet::new(vocab_size, config, directions, conditioning)?;
    let units = set.units(corpus);
    for u in &units {
        set.check_unit(u)?;
    }
    let mut adam = Adam::new(config.adam, &set.zero_grads());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(7);
    let mut order: Vec<usize> = (0..units.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut lr = config.learning_rate;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_nll = 0.0;
        let mut epoch_tokens = 0;
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&Poem> = idx.iter().map(|&i| &units[i]).collect();
            let (nll, tokens, mut grads) = set.batch_gradient(&batch, exec);
            let scale = 1.0 / tokens as f64;
            let mut norm_sq = 0.0;
            for g in grads.iter_mut() {
                for v in g.iter_mut() {
                    *v *= scale;
                    norm_sq += *v * *v;
                }
            }
            if !nll.is_finite() || !norm_sq.is_finite() {
                return Err(Error::Training {
                    epoch,
                    batch: b,
                    message: format!("non-finite loss or gradient (loss sum {nll})"),
                });
            }
            let norm = math::sqrt(norm_sq);
            if norm > config.clip_norm {
                let shrink = config.clip_norm / norm;
                for g in grads.iter_mut() {
                    for v in g.iter_mut() {
                        *v *= shrink;
                    }
                }
            }
            adam.step(&mut set, &grads, lr);
            epoch_nll += nll;
            epoch_tokens += tokens;
        }
        let loss = EpochLoss {
            epoch,
            mean_nll: epoch_nll / epoch_tokens as f64,
        };
        log::debug!(
            "epoch {epoch}: mean nll {:.5} (ppl {:.4})",
            loss.mean_nll,
            loss.perplexity()
        );
        history.push(loss);
        lr *= config.lr_decay;
    }
    if let Some(last) = history.last() {
        log::info!(
            "trained {:?} {:?}: final mean nll {:.5} (ppl {:.4})",
            conditioning,
            directions,
            last.mean_nll,
            last.perplexity()
        );
    }
    Ok(TrainedRecurrent {
        models: set,
        history,
    })
}
