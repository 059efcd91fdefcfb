use std::path::Path;
use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::nn::{Embedding, Linear, LstmStack, Params, StackTrace};
use super::{check_condition, ConditionalLanguageModel, Direction, NextTokenDistribution};
use crate::corpus::{END, START};
use crate::persist::{content_id, Reader, Writer};
use crate::{math, Error, Result, TokenId};

/// Sizes of a sentence-level LSTM language model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LmShape {
    pub vocab_size: usize,
    pub d_emb: usize,
    pub hidden: usize,
    pub layers: usize,
    /// Condition vector width; 0 means unconditioned.
    pub d_ctx: usize,
}

#[derive(Debug, Clone)]
struct SentenceNet {
    embed: Embedding,
    stack: LstmStack,
    out: Linear,
}

/// Stacked LSTM language model. The condition vector, when present, is
/// concatenated to the token embedding at every step.
#[derive(Debug)]
pub struct RecurrentModel {
    shape: LmShape,
    direction: Direction,
    pub(crate) params: Params,
    net: SentenceNet,
    id: OnceLock<String>,
}

impl Clone for RecurrentModel {
    fn clone(&self) -> Self {
        RecurrentModel {
            shape: self.shape,
            direction: self.direction,
            params: self.params.clone(),
            net: self.net.clone(),
            id: OnceLock::new(),
        }
    }
}

/// Cached forward pass over one line, kept for backpropagation.
pub(crate) struct LineTrace {
    tokens: Vec<TokenId>,
    targets: Vec<TokenId>,
    trace: StackTrace,
    probs: Vec<Vec<f64>>,
}

fn layout(shape: &LmShape) -> (Params, SentenceNet) {
    let mut p = Params::new();
    let embed = Embedding::new(&mut p, "lm", shape.vocab_size, shape.d_emb);
    let stack = LstmStack::new(&mut p, "lm", shape.d_emb + shape.d_ctx, shape.hidden, shape.layers);
    let out = Linear::new(&mut p, "lm.output", shape.hidden, shape.vocab_size);
    (p, SentenceNet { embed, stack, out })
}

fn seeded(seed: u64, salt: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(salt);
    rng
}

const EMBED_SCALE: f64 = 0.1;

impl RecurrentModel {
    pub fn new(shape: LmShape, direction: Direction, seed: u64) -> Result<Self> {
        if shape.vocab_size <= END as usize
            || shape.d_emb == 0
            || shape.hidden == 0
            || shape.layers == 0
        {
            return Err(Error::Config(format!("invalid LM shape {shape:?}")));
        }
        let (mut params, net) = layout(&shape);
        let mut rng = seeded(seed, 1 + direction as u64);
        params.uniform(net.embed.table, EMBED_SCALE, &mut rng);
        net.stack.init(&mut params, &mut rng);
        params.uniform(net.out.w, 1.0 / (shape.hidden as f64).sqrt(), &mut rng);
        Ok(RecurrentModel {
            shape,
            direction,
            params,
            net,
            id: OnceLock::new(),
        })
    }

    pub fn shape(&self) -> LmShape {
        self.shape
    }

    /// Names and sizes of every parameter block.
    pub fn parameter_blocks(&self) -> Vec<(String, usize)> {
        self.params
            .blocks()
            .map(|(n, b)| (n.to_string(), b.len()))
            .collect()
    }

    fn step_inputs(&self, p: &[f64], tokens: &[TokenId], cond: &[f64]) -> Vec<Vec<f64>> {
        tokens
            .iter()
            .map(|&t| {
                let mut x = self.net.embed.lookup(p, t).to_vec();
                x.extend_from_slice(cond);
                x
            })
            .collect()
    }

    fn condition_or_zero(&self, condition: Option<&[f64]>) -> Vec<f64> {
        condition.map_or_else(|| vec![0.0; self.shape.d_ctx], <[f64]>::to_vec)
    }

    fn check_tokens(&self, tokens: &[TokenId]) -> Result<()> {
        match tokens.iter().find(|&&t| t as usize >= self.shape.vocab_size) {
            Some(bad) => Err(Error::contract(format!("token {bad} outside vocabulary"))),
            None => Ok(()),
        }
    }

    fn output_probs(&self, p: &[f64], h: &[f64]) -> Vec<f64> {
        let logits = self.net.out.forward(p, h);
        math::masked_softmax(&logits, |i| i == START as usize)
    }

    /// Forward pass of `START line` predicting `line END`; returns the summed
    /// negative log likelihood and the trace for [`Self::backward_line`].
    pub(crate) fn forward_line(
        &self,
        p: &[f64],
        line: &[TokenId],
        condition: &[f64],
    ) -> (f64, LineTrace) {
        let mut tokens = Vec::with_capacity(line.len() + 1);
        tokens.push(START);
        tokens.extend_from_slice(line);
        let mut targets = line.to_vec();
        targets.push(END);
        let inputs = self.step_inputs(p, &tokens, condition);
        let trace = self.net.stack.forward(p, &inputs);
        let mut nll = 0.0;
        let mut probs = Vec::with_capacity(targets.len());
        for (s, &target) in trace.top().iter().zip(&targets) {
            let pr = self.output_probs(p, &s.h);
            nll -= math::ln(pr[target as usize]);
            probs.push(pr);
        }
        (
            nll,
            LineTrace {
                tokens,
                targets,
                trace,
                probs,
            },
        )
    }

    /// Accumulates gradients of the line NLL into `grad`, scaled by `scale`,
    /// and returns the gradient with respect to the condition vector.
    pub(crate) fn backward_line(
        &self,
        p: &[f64],
        grad: &mut [f64],
        lt: &LineTrace,
        scale: f64,
    ) -> Vec<f64> {
        let top = lt.trace.top();
        let mut d_top = Vec::with_capacity(top.len());
        for ((s, pr), &target) in top.iter().zip(&lt.probs).zip(&lt.targets) {
            let mut dlogits: Vec<f64> = pr.iter().map(|v| v * scale).collect();
            dlogits[target as usize] -= scale;
            d_top.push(self.net.out.backward(p, grad, &s.h, &dlogits));
        }
        let d_inputs = self.net.stack.backward(p, grad, &lt.trace, &d_top);
        let d_emb = self.shape.d_emb;
        let mut d_cond = vec![0.0; self.shape.d_ctx];
        for (&tok, dx) in lt.tokens.iter().zip(&d_inputs) {
            self.net.embed.accumulate(grad, tok, &dx[..d_emb]);
            for (dc, v) in d_cond.iter_mut().zip(&dx[d_emb..]) {
                *dc += v;
            }
        }
        d_cond
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new("lstm-lm");
        w.put_str(&serde_json::to_string(&self.shape).expect("shape serializes"));
        w.put_str(self.direction.as_str());
        w.put_f64s(&self.params.data);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open(bytes, "lstm-lm")?;
        let shape: LmShape = serde_json::from_str(&r.get_str()?)
            .map_err(|e| Error::format(format!("model shape: {e}")))?;
        let direction = r.get_str()?.parse()?;
        let data = r.get_f64s()?;
        r.finish()?;
        let (mut params, net) = layout(&shape);
        if data.len() != params.len() {
            return Err(Error::format("parameter count does not match shape"));
        }
        params.data = data;
        Ok(RecurrentModel {
            shape,
            direction,
            params,
            net,
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

impl PartialEq for RecurrentModel {
    fn eq(&self, other: &Self) -> bool {
        self.shape == other.shape
            && self.direction == other.direction
            && self.params.data.len() == other.params.data.len()
            && self
                .params
                .data
                .iter()
                .zip(&other.params.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl ConditionalLanguageModel for RecurrentModel {
    fn vocab_size(&self) -> usize {
        self.shape.vocab_size
    }

    fn direction(&self) -> Direction {
        self.direction
    }

    fn condition_width(&self) -> usize {
        self.shape.d_ctx
    }

    fn next_dist(
        &self,
        prefix: &[TokenId],
        condition: Option<&[f64]>,
    ) -> Result<NextTokenDistribution> {
        check_condition(self.shape.d_ctx, condition)?;
        self.check_tokens(prefix)?;
        let p = &self.params.data;
        let cond = self.condition_or_zero(condition);
        let inputs = self.step_inputs(p, prefix, &cond);
        let h = self.net.stack.last_hidden(p, &inputs);
        NextTokenDistribution::new(self.output_probs(p, &h))
    }

    fn token_logprobs(&self, line: &[TokenId], condition: Option<&[f64]>) -> Result<Vec<f64>> {
        check_condition(self.shape.d_ctx, condition)?;
        self.check_tokens(line)?;
        let cond = self.condition_or_zero(condition);
        let (_, lt) = self.forward_line(&self.params.data, line, &cond);
        Ok(lt
            .probs
            .iter()
            .zip(&lt.targets)
            .map(|(pr, &t)| math::ln(pr[t as usize]))
            .collect())
    }

    fn model_id(&self) -> String {
        self.id.get_or_init(|| content_id(&self.to_bytes())).clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct EncoderShape {
    vocab_size: usize,
    d_emb: usize,
    d_enc: usize,
}

/// Reads a line of tokens and emits its final LSTM hidden state as a
/// content vector of width `d_enc`.
#[derive(Debug, Clone)]
pub struct SentenceEncoder {
    shape: EncoderShape,
    pub(crate) params: Params,
    embed: Embedding,
    stack: LstmStack,
}

pub(crate) struct EncoderTrace {
    tokens: Vec<TokenId>,
    trace: StackTrace,
    pub content: Vec<f64>,
}

fn encoder_layout(shape: &EncoderShape) -> (Params, Embedding, LstmStack) {
    let mut p = Params::new();
    let embed = Embedding::new(&mut p, "encoder", shape.vocab_size, shape.d_emb);
    let stack = LstmStack::new(&mut p, "encoder", shape.d_emb, shape.d_enc, 1);
    (p, embed, stack)
}

impl SentenceEncoder {
    pub fn new(vocab_size: usize, d_emb: usize, d_enc: usize, seed: u64) -> Result<Self> {
        if vocab_size == 0 || d_emb == 0 || d_enc == 0 {
            return Err(Error::Config("encoder sizes must be positive".into()));
        }
        let shape = EncoderShape {
            vocab_size,
            d_emb,
            d_enc,
        };
        let (mut params, embed, stack) = encoder_layout(&shape);
        let mut rng = seeded(seed, 11);
        params.uniform(embed.table, EMBED_SCALE, &mut rng);
        stack.init(&mut params, &mut rng);
        Ok(SentenceEncoder {
            shape,
            params,
            embed,
            stack,
        })
    }

    pub fn width(&self) -> usize {
        self.shape.d_enc
    }

    pub(crate) fn forward(&self, p: &[f64], line: &[TokenId]) -> EncoderTrace {
        let inputs: Vec<Vec<f64>> = line
            .iter()
            .map(|&t| self.embed.lookup(p, t).to_vec())
            .collect();
        let trace = self.stack.forward(p, &inputs);
        let content = trace.top().last().map(|s| s.h.clone()).unwrap_or_default();
        EncoderTrace {
            tokens: line.to_vec(),
            trace,
            content,
        }
    }

    pub(crate) fn backward(&self, p: &[f64], grad: &mut [f64], et: &EncoderTrace, d_content: &[f64]) {
        let t_len = et.tokens.len();
        let mut d_top = vec![vec![0.0; self.shape.d_enc]; t_len];
        d_top[t_len - 1] = d_content.to_vec();
        let d_inputs = self.stack.backward(p, grad, &et.trace, &d_top);
        for (&tok, dx) in et.tokens.iter().zip(&d_inputs) {
            self.embed.accumulate(grad, tok, dx);
        }
    }

    pub fn encode(&self, line: &[TokenId]) -> Result<Vec<f64>> {
        if line.is_empty() {
            return Err(Error::contract("cannot encode an empty line"));
        }
        if let Some(bad) = line.iter().find(|&&t| t as usize >= self.shape.vocab_size) {
            return Err(Error::contract(format!("token {bad} outside vocabulary")));
        }
        let p = &self.params.data;
        let inputs: Vec<Vec<f64>> = line
            .iter()
            .map(|&t| self.embed.lookup(p, t).to_vec())
            .collect();
        Ok(self.stack.last_hidden(p, &inputs))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new("sentence-encoder");
        w.put_str(&serde_json::to_string(&self.shape).expect("shape serializes"));
        w.put_f64s(&self.params.data);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open(bytes, "sentence-encoder")?;
        let shape: EncoderShape = serde_json::from_str(&r.get_str()?)
            .map_err(|e| Error::format(format!("encoder shape: {e}")))?;
        let data = r.get_f64s()?;
        r.finish()?;
        let (mut params, embed, stack) = encoder_layout(&shape);
        if data.len() != params.len() {
            return Err(Error::format("parameter count does not match shape"));
        }
        params.data = data;
        Ok(SentenceEncoder {
            shape,
            params,
            embed,
            stack,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::persist::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn model_id(&self) -> String {
        content_id(&self.to_bytes())
    }
}

/// Encodes a non-empty line into its content vector.
pub fn encode_sentence(encoder: &SentenceEncoder, line: &[TokenId]) -> Result<Vec<f64>> {
    encoder.encode(line)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct PoemShape {
    d_enc: usize,
    hidden: usize,
    layers: usize,
}

/// Poem-level recurrence over content vectors. After reading the first `j`
/// content vectors it predicts the content vector of line `j + 1` as
/// `tanh(W h_j + b)`; with nothing read yet `h_0 = 0`, so the first-line
/// prediction is `tanh(b)`.
#[derive(Debug, Clone)]
pub struct PoemStateModel {
    shape: PoemShape,
    pub(crate) params: Params,
    stack: LstmStack,
    out: Linear,
}

pub(crate) struct PoemTrace {
    trace: StackTrace,
    /// `hidden_states[j]` is the state before the prediction of line `j`.
    hidden_states: Vec<Vec<f64>>,
    pub predictions: Vec<Vec<f64>>,
}

fn poem_layout(shape: &PoemShape) -> (Params, LstmStack, Linear) {
    let mut p = Params::new();
    let stack = LstmStack::new(&mut p, "poem", shape.d_enc, shape.hidden, shape.layers);
    let out = Linear::new(&mut p, "poem.output", shape.hidden, shape.d_enc);
    (p, stack, out)
}

impl PoemStateModel {
    pub fn new(d_enc: usize, hidden: usize, layers: usize, seed: u64) -> Result<Self> {
        if d_enc == 0 || hidden == 0 || layers == 0 {
            return Err(Error::Config("poem-state sizes must be positive".into()));
        }
        let shape = PoemShape {
            d_enc,
            hidden,
            layers,
        };
        let (mut params, stack, out) = poem_layout(&shape);
        let mut rng = seeded(seed, 21);
        stack.init(&mut params, &mut rng);
        params.uniform(out.w, 1.0 / (hidden as f64).sqrt(), &mut rng);
        params.uniform(out.b, 0.1, &mut rng);
        Ok(PoemStateModel {
            shape,
            params,
            stack,
            out,
        })
    }

    pub fn width(&self) -> usize {
        self.shape.d_enc
    }

    fn predict(&self, p: &[f64], h: &[f64]) -> Vec<f64> {
        self.out.forward(p, h).into_iter().map(math::tanh).collect()
    }

    /// Predictions for lines `0..=contents.len()`.
    pub(crate) fn forward(&self, p: &[f64], contents: &[Vec<f64>]) -> PoemTrace {
        let trace = self.stack.forward(p, contents);
        let mut hidden_states = vec![vec![0.0; self.shape.hidden]];
        hidden_states.extend(trace.top().iter().map(|s| s.h.clone()));
        let predictions = hidden_states.iter().map(|h| self.predict(p, h)).collect();
        PoemTrace {
            trace,
            hidden_states,
            predictions,
        }
    }

    /// Backpropagates `d_pred[j]` for every prediction and returns the
    /// gradient with respect to each consumed content vector.
    pub(crate) fn backward(
        &self,
        p: &[f64],
        grad: &mut [f64],
        pt: &PoemTrace,
        d_pred: &[Vec<f64>],
    ) -> Vec<Vec<f64>> {
        let mut d_hidden = Vec::with_capacity(d_pred.len());
        for ((h, pred), dp) in pt.hidden_states.iter().zip(&pt.predictions).zip(d_pred) {
            let dz: Vec<f64> = pred.iter().zip(dp).map(|(y, d)| d * (1.0 - y * y)).collect();
            d_hidden.push(self.out.backward(p, grad, h, &dz));
        }
        // d_hidden[0] belongs to the fixed zero initial state
        self.stack.backward(p, grad, &pt.trace, &d_hidden[1..])
    }

    /// Prediction for the first line, before any content vector is read.
    pub fn initial_output(&self) -> Vec<f64> {
        let p = &self.params.data;
        self.predict(p, &vec![0.0; self.shape.hidden])
    }

    /// Predicted content vector of the line following `contents`.
    pub fn advance(&self, contents: &[Vec<f64>]) -> Result<Vec<f64>> {
        if let Some(bad) = contents.iter().find(|c| c.len() != self.shape.d_enc) {
            return Err(Error::contract(format!(
                "content vector width {} but poem model expects {}",
                bad.len(),
                self.shape.d_enc
            )));
        }
        let p = &self.params.data;
        let h = self.stack.last_hidden(p, contents);
        Ok(self.predict(p, &h))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new("poem-state");
        w.put_str(&serde_json::to_string(&self.shape).expect("shape serializes"));
        w.put_f64s(&self.params.data);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open(bytes, "poem-state")?;
        let shape: PoemShape = serde_json::from_str(&r.get_str()?)
            .map_err(|e| Error::format(format!("poem-state shape: {e}")))?;
        let data = r.get_f64s()?;
        r.finish()?;
        let (mut params, stack, out) = poem_layout(&shape);
        if data.len() != params.len() {
            return Err(Error::format("parameter count does not match shape"));
        }
        params.data = data;
        Ok(PoemStateModel {
            shape,
            params,
            stack,
            out,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::persist::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn model_id(&self) -> String {
        content_id(&self.to_bytes())
    }
}

/// Runs the poem-level recurrence over `contents` (at least one vector) and
/// returns the predicted content vector of the next line.
pub fn poem_state_advance(model: &PoemStateModel, contents: &[Vec<f64>]) -> Result<Vec<f64>> {
    if contents.is_empty() {
        return Err(Error::contract(
            "poem_state_advance needs at least one content vector; use initial_output",
        ));
    }
    model.advance(contents)
}
