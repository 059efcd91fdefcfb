//! Flat parameter storage and the hand-written LSTM / linear layers.
//!
//! Every network keeps its parameters in one `Vec<f64>`; layers hold
//! [`Block`] offsets into it. Gradients live in a same-length vector, so the
//! optimizer and the finite-difference checker treat all networks alike.

use rand::Rng;

use crate::math::{sigmoid, tanh};
use crate::TokenId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Block {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Block {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Params {
    names: Vec<String>,
    blocks: Vec<Block>,
    pub data: Vec<f64>,
}

impl Params {
    pub fn new() -> Self {
        Params {
            names: Vec::new(),
            blocks: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> Block {
        let b = Block {
            offset: self.data.len(),
            rows,
            cols,
        };
        self.data.resize(self.data.len() + b.len(), 0.0);
        self.names.push(name.into());
        self.blocks.push(b);
        b
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn blocks(&self) -> impl Iterator<Item = (&str, Block)> {
        self.names.iter().map(String::as_str).zip(self.blocks.iter().copied())
    }

    pub fn uniform<R: Rng>(&mut self, b: Block, scale: f64, rng: &mut R) {
        for v in &mut self.data[b.range()] {
            *v = rng.gen_range(-scale..scale);
        }
    }

    pub fn fill(&mut self, b: Block, range: std::ops::Range<usize>, value: f64) {
        for v in &mut self.data[b.offset + range.start..b.offset + range.end] {
            *v = value;
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Embedding {
    pub table: Block,
}

impl Embedding {
    pub fn new(p: &mut Params, name: &str, vocab: usize, dim: usize) -> Self {
        Embedding {
            table: p.add(format!("{name}.embedding"), vocab, dim),
        }
    }

    pub fn lookup<'a>(&self, p: &'a [f64], id: TokenId) -> &'a [f64] {
        let start = self.table.offset + id as usize * self.table.cols;
        &p[start..start + self.table.cols]
    }

    pub fn accumulate(&self, g: &mut [f64], id: TokenId, d: &[f64]) {
        let start = self.table.offset + id as usize * self.table.cols;
        for (gi, di) in g[start..start + self.table.cols].iter_mut().zip(d) {
            *gi += di;
        }
    }
}

/// `y = W x + b`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Linear {
    pub w: Block,
    pub b: Block,
}

impl Linear {
    pub fn new(p: &mut Params, name: &str, input: usize, output: usize) -> Self {
        Linear {
            w: p.add(format!("{name}.weight"), output, input),
            b: p.add(format!("{name}.bias"), output, 1),
        }
    }

    pub fn forward(&self, p: &[f64], x: &[f64]) -> Vec<f64> {
        let (rows, cols) = (self.w.rows, self.w.cols);
        let w = &p[self.w.range()];
        let b = &p[self.b.range()];
        (0..rows)
            .map(|r| {
                let row = &w[r * cols..(r + 1) * cols];
                b[r] + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>()
            })
            .collect()
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward(&self, p: &[f64], g: &mut [f64], x: &[f64], dy: &[f64]) -> Vec<f64> {
        let (rows, cols) = (self.w.rows, self.w.cols);
        let mut dx = vec![0.0; cols];
        for r in 0..rows {
            let d = dy[r];
            if d == 0.0 {
                continue;
            }
            g[self.b.offset + r] += d;
            let wrow = self.w.offset + r * cols;
            for c in 0..cols {
                g[wrow + c] += d * x[c];
                dx[c] += d * p[wrow + c];
            }
        }
        dx
    }
}

/// One LSTM layer. Gate rows are laid out as input, forget, cell, output;
/// columns as `[x; h_prev]`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Lstm {
    pub w: Block,
    pub b: Block,
    pub input: usize,
    pub hidden: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct LstmStep {
    xh: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    c_prev: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

impl Lstm {
    pub fn new(p: &mut Params, name: &str, input: usize, hidden: usize) -> Self {
        Lstm {
            w: p.add(format!("{name}.gates.weight"), 4 * hidden, input + hidden),
            b: p.add(format!("{name}.gates.bias"), 4 * hidden, 1),
            input,
            hidden,
        }
    }

    pub fn init<R: Rng>(&self, p: &mut Params, rng: &mut R) {
        let scale = 1.0 / (self.hidden as f64).sqrt();
        p.uniform(self.w, scale, rng);
        p.fill(self.b, 0..4 * self.hidden, 0.0);
        p.fill(self.b, self.hidden..2 * self.hidden, 1.0);
    }

    pub fn step(&self, p: &[f64], x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> LstmStep {
        let hsz = self.hidden;
        let cols = self.input + hsz;
        let mut xh = Vec::with_capacity(cols);
        xh.extend_from_slice(x);
        xh.extend_from_slice(h_prev);
        let w = &p[self.w.range()];
        let b = &p[self.b.range()];
        let pre = |r: usize| -> f64 {
            let row = &w[r * cols..(r + 1) * cols];
            b[r] + row.iter().zip(&xh).map(|(a, v)| a * v).sum::<f64>()
        };
        let i: Vec<f64> = (0..hsz).map(|k| sigmoid(pre(k))).collect();
        let f: Vec<f64> = (0..hsz).map(|k| sigmoid(pre(hsz + k))).collect();
        let g: Vec<f64> = (0..hsz).map(|k| tanh(pre(2 * hsz + k))).collect();
        let o: Vec<f64> = (0..hsz).map(|k| sigmoid(pre(3 * hsz + k))).collect();
        let c: Vec<f64> = (0..hsz).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
        let tanh_c: Vec<f64> = c.iter().map(|&v| tanh(v)).collect();
        let h = (0..hsz).map(|k| o[k] * tanh_c[k]).collect();
        LstmStep {
            xh,
            i,
            f,
            g,
            o,
            c_prev: c_prev.to_vec(),
            c,
            tanh_c,
            h,
        }
    }

    /// Given `dL/dh` and `dL/dc` at this step, accumulates parameter
    /// gradients and returns `(dL/dx, dL/dh_prev, dL/dc_prev)`.
    pub fn backward_step(
        &self,
        p: &[f64],
        grad: &mut [f64],
        s: &LstmStep,
        dh: &[f64],
        dc_next: &[f64],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let hsz = self.hidden;
        let cols = self.input + hsz;
        let mut dz = vec![0.0; 4 * hsz];
        let mut dc_prev = vec![0.0; hsz];
        for k in 0..hsz {
            let d_o = dh[k] * s.tanh_c[k];
            let dc = dc_next[k] + dh[k] * s.o[k] * (1.0 - s.tanh_c[k] * s.tanh_c[k]);
            let d_i = dc * s.g[k];
            let d_g = dc * s.i[k];
            let d_f = dc * s.c_prev[k];
            dc_prev[k] = dc * s.f[k];
            dz[k] = d_i * s.i[k] * (1.0 - s.i[k]);
            dz[hsz + k] = d_f * s.f[k] * (1.0 - s.f[k]);
            dz[2 * hsz + k] = d_g * (1.0 - s.g[k] * s.g[k]);
            dz[3 * hsz + k] = d_o * s.o[k] * (1.0 - s.o[k]);
        }
        let mut dxh = vec![0.0; cols];
        for (r, &d) in dz.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            grad[self.b.offset + r] += d;
            let row = self.w.offset + r * cols;
            for c in 0..cols {
                grad[row + c] += d * s.xh[c];
                dxh[c] += d * p[row + c];
            }
        }
        let dh_prev = dxh.split_off(self.input);
        (dxh, dh_prev, dc_prev)
    }
}

/// Stacked LSTM layers run from a zero initial state.
#[derive(Debug, Clone)]
pub(crate) struct LstmStack {
    pub layers: Vec<Lstm>,
}

/// Cached activations of a full sequence, indexed `[layer][time]`.
#[derive(Debug, Clone)]
pub(crate) struct StackTrace {
    steps: Vec<Vec<LstmStep>>,
}

impl StackTrace {
    pub fn top(&self) -> &[LstmStep] {
        self.steps.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

impl LstmStack {
    pub fn new(p: &mut Params, name: &str, input: usize, hidden: usize, layers: usize) -> Self {
        let layers = (0..layers)
            .map(|l| {
                let inp = if l == 0 { input } else { hidden };
                Lstm::new(p, &format!("{name}.layer{l}"), inp, hidden)
            })
            .collect();
        LstmStack { layers }
    }

    pub fn init<R: Rng>(&self, p: &mut Params, rng: &mut R) {
        for l in &self.layers {
            l.init(p, rng);
        }
    }

    pub fn forward(&self, p: &[f64], inputs: &[Vec<f64>]) -> StackTrace {
        let mut steps = Vec::with_capacity(self.layers.len());
        let mut layer_in: Vec<Vec<f64>> = inputs.to_vec();
        for layer in &self.layers {
            let mut h = vec![0.0; layer.hidden];
            let mut c = vec![0.0; layer.hidden];
            let mut out = Vec::with_capacity(layer_in.len());
            for x in &layer_in {
                let s = layer.step(p, x, &h, &c);
                h.clone_from(&s.h);
                c.clone_from(&s.c);
                out.push(s);
            }
            layer_in = out.iter().map(|s| s.h.clone()).collect();
            steps.push(out);
        }
        StackTrace { steps }
    }

    /// Final top-layer hidden state, without caching; zeros for no input.
    pub fn last_hidden(&self, p: &[f64], inputs: &[Vec<f64>]) -> Vec<f64> {
        let mut hs: Vec<Vec<f64>> = self.layers.iter().map(|l| vec![0.0; l.hidden]).collect();
        let mut cs = hs.clone();
        for x in inputs {
            let mut below = x.clone();
            for (k, layer) in self.layers.iter().enumerate() {
                let s = layer.step(p, &below, &hs[k], &cs[k]);
                hs[k] = s.h;
                cs[k] = s.c;
                below = hs[k].clone();
            }
        }
        hs.pop().unwrap_or_default()
    }

    /// Backpropagates `d_top[t]` (gradient w.r.t. the top hidden state at
    /// each step) and returns the gradient w.r.t. each input vector.
    pub fn backward(
        &self,
        p: &[f64],
        grad: &mut [f64],
        trace: &StackTrace,
        d_top: &[Vec<f64>],
    ) -> Vec<Vec<f64>> {
        let mut d_out: Vec<Vec<f64>> = d_top.to_vec();
        for (layer, steps) in self.layers.iter().zip(&trace.steps).rev() {
            let t_len = steps.len();
            let mut d_in = vec![Vec::new(); t_len];
            let mut dh_next = vec![0.0; layer.hidden];
            let mut dc_next = vec![0.0; layer.hidden];
            for t in (0..t_len).rev() {
                let dh: Vec<f64> = d_out[t].iter().zip(&dh_next).map(|(a, b)| a + b).collect();
                let (dx, dh_prev, dc_prev) =
                    layer.backward_step(p, grad, &steps[t], &dh, &dc_next);
                d_in[t] = dx;
                dh_next = dh_prev;
                dc_next = dc_prev;
            }
            d_out = d_in;
        }
        d_out
    }
}
