use ndarray::{Array2, ArrayView2};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_heads: usize,
    pub d_model: usize,
    pub d_head: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub folds: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_heads: 128,
            d_model: 64,
            d_head: 8,
            learning_rate: 0.01,
            batch_size: 8,
            folds: 10,
            epochs: 50,
            seed: 0,
        }
    }
}

pub const N_CLASSES: usize = 2;

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if self.n_heads == 0 || self.d_model == 0 || self.d_head == 0 {
            return bad("n_heads, d_model and d_head must be positive");
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.folds < 2 {
            return bad("folds must be at least 2");
        }
        Ok(())
    }

    pub fn inner_width(&self) -> usize {
        self.n_heads * self.d_head
    }
}

/// All trainable matrices. Biases are `1 × n` rows. Head `h` owns columns
/// `h·d_head .. (h+1)·d_head` of `w_q`, `w_k` and `w_v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n_heads: usize,
    pub w_in: Array2<f64>,
    pub b_in: Array2<f64>,
    pub w_q: Array2<f64>,
    pub w_k: Array2<f64>,
    pub w_v: Array2<f64>,
    pub w_o: Array2<f64>,
    pub b_o: Array2<f64>,
    pub w_c: Array2<f64>,
    pub b_c: Array2<f64>,
}

pub const BLOCK_NAMES: [&str; 9] = ["w_in", "b_in", "w_q", "w_k", "w_v", "w_o", "b_o", "w_c", "b_c"];

fn uniform(rng: &mut Rng, rows: usize, cols: usize, fan_in: usize) -> Array2<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-bound..=bound))
}

impl ModelParams {
    /// Uniform `±1/√fan_in` initialisation for an `r`-ROI input.
    pub fn init(r: usize, config: &ModelConfig, rng: &mut Rng) -> Self {
        let (d, inner) = (config.d_model, config.inner_width());
        Self {
            n_heads: config.n_heads,
            w_in: uniform(rng, r, d, r),
            b_in: uniform(rng, 1, d, r),
            w_q: uniform(rng, d, inner, d),
            w_k: uniform(rng, d, inner, d),
            w_v: uniform(rng, d, inner, d),
            w_o: uniform(rng, inner, d, inner),
            b_o: uniform(rng, 1, d, inner),
            w_c: uniform(rng, d, N_CLASSES, d),
            b_c: uniform(rng, 1, N_CLASSES, d),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let z = |a: &Array2<f64>| Array2::zeros(a.raw_dim());
        Self {
            n_heads: self.n_heads,
            w_in: z(&self.w_in),
            b_in: z(&self.b_in),
            w_q: z(&self.w_q),
            w_k: z(&self.w_k),
            w_v: z(&self.w_v),
            w_o: z(&self.w_o),
            b_o: z(&self.b_o),
            w_c: z(&self.w_c),
            b_c: z(&self.b_c),
        }
    }

    pub fn blocks(&self) -> [&Array2<f64>; 9] {
        [&self.w_in, &self.b_in, &self.w_q, &self.w_k, &self.w_v, &self.w_o, &self.b_o, &self.w_c, &self.b_c]
    }

    pub fn blocks_mut(&mut self) -> [&mut Array2<f64>; 9] {
        [
            &mut self.w_in,
            &mut self.b_in,
            &mut self.w_q,
            &mut self.w_k,
            &mut self.w_v,
            &mut self.w_o,
            &mut self.b_o,
            &mut self.w_c,
            &mut self.b_c,
        ]
    }

    pub fn n_rois(&self) -> usize {
        self.w_in.nrows()
    }

    pub fn d_head(&self) -> usize {
        self.w_q.ncols() / self.n_heads
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

/// Tokens `adj · W_in + b_in`, one row per ROI.
pub fn encode_input(params: &ModelParams, adj: ArrayView2<f64>) -> Result<Array2<f64>> {
    check_input(params, adj)?;
    Ok(adj.dot(&params.w_in) + &params.b_in)
}

fn check_input(params: &ModelParams, adj: ArrayView2<f64>) -> Result<()> {
    let r = params.n_rois();
    if adj.dim() != (r, r) {
        return Err(Error::Shape(format!("input is {:?}, model expects {r}×{r}", adj.dim())));
    }
    Ok(())
}

struct Graph {
    leaves: [Var; 9],
    logits: Var,
    heads: Vec<Var>,
}

/// Record one forward pass. Mean-pooling over tokens is applied to each
/// head's attention before multiplying by `V`, which equals pooling the
/// concatenated head outputs because `W_O` and the pool are both linear.
fn record(tape: &mut Tape, params: &ModelParams, adj: ArrayView2<f64>) -> Graph {
    let x = tape.leaf(adj.to_owned());
    let leaves = params.blocks().map(|b| tape.leaf(b.clone()));
    let [w_in, b_in, w_q, w_k, w_v, w_o, b_o, w_c, b_c] = leaves;
    let xw = tape.matmul(x, w_in);
    let tokens = tape.add_row(xw, b_in);
    let q = tape.matmul(tokens, w_q);
    let k = tape.matmul(tokens, w_k);
    let v = tape.matmul(tokens, w_v);
    let dh = params.d_head();
    let mut heads = Vec::with_capacity(params.n_heads);
    let mut pooled = Vec::with_capacity(params.n_heads);
    for h in 0..params.n_heads {
        let (lo, hi) = (h * dh, (h + 1) * dh);
        let qh = tape.slice_cols(q, lo, hi);
        let kh = tape.slice_cols(k, lo, hi);
        let vh = tape.slice_cols(v, lo, hi);
        let scores = tape.matmul_bt(qh, kh);
        let attn = tape.row_softmax(scores);
        heads.push(attn);
        let mean_attn = tape.mean_rows(attn);
        pooled.push(tape.matmul(mean_attn, vh));
    }
    let cat = tape.concat_cols(&pooled);
    let o = tape.matmul(cat, w_o);
    let o = tape.add_row(o, b_o);
    let z = tape.matmul(o, w_c);
    let logits = tape.add_row(z, b_c);
    Graph { leaves, logits, heads }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub logits: [f64; 2],
    /// One `R × R` row-stochastic matrix per head.
    pub head_attention: Vec<Array2<f64>>,
    /// Mean of `head_attention`.
    pub attention: Array2<f64>,
}

pub fn attention_forward(params: &ModelParams, adj: ArrayView2<f64>) -> Result<Forward> {
    check_input(params, adj)?;
    let mut tape = Tape::new();
    let g = record(&mut tape, params, adj);
    let lv = tape.value(g.logits);
    let logits = [lv[[0, 0]], lv[[0, 1]]];
    if !logits.iter().all(|v| v.is_finite()) {
        return Err(Error::NumericOverflow("logits"));
    }
    let head_attention: Vec<Array2<f64>> = g.heads.iter().map(|&h| tape.value(h).clone()).collect();
    let r = params.n_rois();
    let mut attention = Array2::zeros((r, r));
    for a in &head_attention {
        attention += a;
    }
    attention /= params.n_heads as f64;
    if attention.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericOverflow("attention"));
    }
    Ok(Forward {
        logits,
        head_attention,
        attention,
    })
}

/// Class probabilities for one input.
pub fn predict_proba(params: &ModelParams, adj: ArrayView2<f64>) -> Result<[f64; 2]> {
    let z = attention_forward(params, adj)?.logits;
    let m = z[0].max(z[1]);
    let e = [(z[0] - m).exp(), (z[1] - m).exp()];
    let s = e[0] + e[1];
    Ok([e[0] / s, e[1] / s])
}

fn example_loss_grads(params: &ModelParams, adj: ArrayView2<f64>, label: usize) -> Result<(f64, ModelParams)> {
    let mut tape = Tape::new();
    let g = record(&mut tape, params, adj);
    if tape.value(g.logits).iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericOverflow("logits"));
    }
    let loss = tape.cross_entropy(g.logits, &[label]);
    let mut grads = tape.backward(loss);
    let mut out = params.zeros_like();
    for (slot, leaf) in out.blocks_mut().into_iter().zip(g.leaves) {
        if let Some(gr) = grads.take(leaf) {
            *slot = gr;
        }
    }
    Ok((tape.value(loss)[[0, 0]], out))
}

/// Mean cross-entropy over `batch` and its gradient. Examples are
/// differentiated in parallel and summed in batch order.
pub fn loss_and_grads(params: &ModelParams, batch: &[(ArrayView2<f64>, usize)]) -> Result<(f64, ModelParams)> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    for (adj, label) in batch {
        check_input(params, *adj)?;
        if *label >= N_CLASSES {
            return Err(Error::InvalidParameter(format!("label {label} out of range")));
        }
    }
    let parts: Vec<Result<(f64, ModelParams)>> = batch
        .par_iter()
        .map(|(adj, label)| example_loss_grads(params, *adj, *label))
        .collect();
    let mut loss = 0.0;
    let mut total = params.zeros_like();
    for part in parts {
        let (l, g) = part?;
        loss += l;
        for (t, b) in total.blocks_mut().into_iter().zip(g.blocks()) {
            *t += b;
        }
    }
    let n = batch.len() as f64;
    for t in total.blocks_mut() {
        t.mapv_inplace(|v| v / n);
    }
    Ok((loss / n, total))
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub learning_rate: f64,
    step: i32,
    m: ModelParams,
    v: ModelParams,
}

impl Adam {
    pub fn new(params: &ModelParams, learning_rate: f64) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            learning_rate,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams) -> Result<()> {
        self.step += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - b2.powi(self.step);
        let lr = self.learning_rate;
        let eps = self.eps;
        for (((p, g), m), v) in params
            .blocks_mut()
            .into_iter()
            .zip(grads.blocks())
            .zip(self.m.blocks_mut())
            .zip(self.v.blocks_mut())
        {
            ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            });
        }
        if !params.is_finite() {
            return Err(Error::NumericOverflow("parameters after Adam step"));
        }
        Ok(())
    }
}
