//! Exact t-SNE with perplexity calibration by bisection.

use ndarray::{Array2, ArrayView2};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{channel_points, squared_distances, Embedding, Method, MethodParams};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TsneParams {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    /// Iterations run with exaggerated affinities and the initial momentum.
    pub exaggeration_iterations: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
}

impl Default for TsneParams {
    fn default() -> Self {
        Self {
            perplexity: 10.0,
            iterations: 1000,
            learning_rate: 100.0,
            early_exaggeration: 12.0,
            exaggeration_iterations: 250,
            initial_momentum: 0.5,
            final_momentum: 0.8,
        }
    }
}

impl TsneParams {
    pub fn validate(&self, n_points: usize) -> Result<()> {
        let upper = (n_points as f64 - 1.0) / 3.0;
        if !(self.perplexity > 1.0 && self.perplexity < upper) {
            return Err(Error::InvalidParameter(format!(
                "perplexity {} must lie in (1, {upper:.3}) for {n_points} points",
                self.perplexity
            )));
        }
        if self.iterations < 250 {
            return Err(Error::InvalidParameter("t-SNE needs at least 250 iterations".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidParameter("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Entropy tolerance (nats) for the per-point bandwidth search.
pub const ENTROPY_TOL: f64 = 1e-5;
const MAX_BISECTION_STEPS: usize = 200;

/// Result of a t-SNE run with its objective trace.
#[derive(Debug, Clone)]
pub struct TsneRun {
    pub embedding: Embedding,
    /// `KL(P || Q)` before the first update, after each update.
    pub kl_trace: Vec<f64>,
}

impl TsneRun {
    pub fn initial_kl(&self) -> f64 {
        self.kl_trace[0]
    }

    pub fn final_kl(&self) -> f64 {
        *self.kl_trace.last().expect("trace is never empty")
    }
}

/// Row-conditional Gaussian affinities `p_{j|i}` from squared distances, each
/// row calibrated so its Shannon entropy equals `ln(perplexity)`.
///
/// Returns the conditional matrix and the precisions `β_i = 1 / (2σ_i²)`.
pub fn conditional_affinities(dist_sq: &Array2<f64>, perplexity: f64) -> (Array2<f64>, Vec<f64>) {
    let n = dist_sq.nrows();
    let target = perplexity.ln();
    let mut p = Array2::zeros((n, n));
    let mut betas = vec![1.0; n];
    let mut row = vec![0.0; n];
    for i in 0..n {
        let d_min = (0..n)
            .filter(|&j| j != i)
            .map(|j| dist_sq[[i, j]])
            .fold(f64::INFINITY, f64::min);
        let (mut lo, mut hi) = (0.0_f64, f64::INFINITY);
        let mut beta = 1.0;
        for _ in 0..MAX_BISECTION_STEPS {
            let h = row_entropy(dist_sq, i, d_min, beta, &mut row);
            let diff = h - target;
            if diff.abs() < ENTROPY_TOL {
                break;
            }
            if diff > 0.0 {
                lo = beta;
                beta = if hi.is_finite() { 0.5 * (lo + hi) } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = 0.5 * (lo + hi);
            }
        }
        row_entropy(dist_sq, i, d_min, beta, &mut row);
        betas[i] = beta;
        for j in 0..n {
            p[[i, j]] = row[j];
        }
    }
    (p, betas)
}

/// Fills `row` with normalised affinities for point `i` and returns their entropy.
fn row_entropy(dist_sq: &Array2<f64>, i: usize, d_min: f64, beta: f64, row: &mut [f64]) -> f64 {
    let n = row.len();
    let mut sum = 0.0;
    let mut weighted = 0.0;
    for j in 0..n {
        if j == i {
            row[j] = 0.0;
            continue;
        }
        let shifted = dist_sq[[i, j]] - d_min;
        let w = (-beta * shifted).exp();
        row[j] = w;
        sum += w;
        weighted += w * shifted;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
    sum.ln() + beta * weighted / sum
}

/// Symmetric joint affinities `P = (P_cond + P_condᵀ) / 2n`.
pub fn joint_affinities(conditional: &Array2<f64>) -> Array2<f64> {
    let n = conditional.nrows() as f64;
    (conditional + &conditional.t()) / (2.0 * n)
}

/// Student-t (one degree of freedom) low-dimensional affinities and their
/// unnormalised kernel values.
pub fn student_t_affinities(y: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    let n = y.nrows();
    let mut num = Array2::zeros((n, n));
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = y[[i, 0]] - y[[j, 0]];
            let dy = y[[i, 1]] - y[[j, 1]];
            let k = 1.0 / (1.0 + dx * dx + dy * dy);
            num[[i, j]] = k;
            num[[j, i]] = k;
            total += 2.0 * k;
        }
    }
    let q = &num / total;
    (q, num)
}

pub fn kl_divergence(p: &Array2<f64>, q: &Array2<f64>) -> f64 {
    p.iter()
        .zip(q.iter())
        .filter(|(&pv, _)| pv > 0.0)
        .map(|(&pv, &qv)| pv * (pv / qv.max(f64::MIN_POSITIVE)).ln())
        .sum()
}

pub fn tsne_embed(signal: ArrayView2<f64>, params: &TsneParams, seed: u64) -> Result<Embedding> {
    tsne_run(signal, params, seed).map(|r| r.embedding)
}

pub fn tsne_run(signal: ArrayView2<f64>, params: &TsneParams, seed: u64) -> Result<TsneRun> {
    let points = channel_points(signal);
    let n = points.nrows();
    params.validate(n)?;
    let dist_sq = squared_distances(&points);
    let (conditional, _) = conditional_affinities(&dist_sq, params.perplexity);
    let p = joint_affinities(&conditional);

    let mut rng = rng_from_seed(seed);
    let init = Normal::new(0.0, 1e-2).expect("valid sd");
    let mut y = Array2::from_shape_fn((n, 2), |_| init.sample(&mut rng));
    let mut update = Array2::<f64>::zeros((n, 2));
    let mut gains = Array2::<f64>::ones((n, 2));
    let mut grad = Array2::<f64>::zeros((n, 2));
    let mut kl_trace = Vec::with_capacity(params.iterations + 1);

    for it in 0..params.iterations {
        let (q, num) = student_t_affinities(&y);
        kl_trace.push(kl_divergence(&p, &q));
        let early = it < params.exaggeration_iterations;
        let exaggeration = if early { params.early_exaggeration } else { 1.0 };
        let momentum = if early {
            params.initial_momentum
        } else {
            params.final_momentum
        };

        grad.fill(0.0);
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let mult = 4.0 * (exaggeration * p[[i, j]] - q[[i, j]]) * num[[i, j]];
                grad[[i, 0]] += mult * (y[[i, 0]] - y[[j, 0]]);
                grad[[i, 1]] += mult * (y[[i, 1]] - y[[j, 1]]);
            }
        }
        for ((g, u), gain) in grad.iter().zip(update.iter_mut()).zip(gains.iter_mut()) {
            *gain = if (*g > 0.0) != (*u > 0.0) {
                *gain + 0.2
            } else {
                (*gain * 0.8).max(0.01)
            };
            *u = momentum * *u - params.learning_rate * *gain * g;
        }
        y += &update;
        let mean = y.mean_axis(ndarray::Axis(0)).expect("non-empty");
        for mut row in y.rows_mut() {
            row -= &mean;
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericOverflow("t-SNE gradient descent"));
        }
    }
    let (q, _) = student_t_affinities(&y);
    kl_trace.push(kl_divergence(&p, &q));
    let embedding = Embedding::new(y, Method::Tsne, MethodParams::Tsne(*params), seed)?;
    Ok(TsneRun { embedding, kl_trace })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perplexity_bounds() {
        let p = TsneParams::default();
        assert!(p.validate(116).is_ok());
        assert!(p.validate(30).is_err());
        let mut low = p;
        low.perplexity = 1.0;
        assert!(low.validate(116).is_err());
        let mut short = p;
        short.iterations = 100;
        assert!(short.validate(116).is_err());
    }

    #[test]
    fn joint_is_symmetric_and_normalised() {
        let pts = Array2::from_shape_fn((9, 3), |(i, j)| ((i * 7 + j * 3) % 5) as f64 + 0.1 * i as f64);
        let d = squared_distances(&pts);
        let (c, _) = conditional_affinities(&d, 2.5);
        let p = joint_affinities(&c);
        assert!((p.sum() - 1.0).abs() < 1e-12);
        for i in 0..9 {
            for j in 0..9 {
                assert_eq!(p[[i, j]], p[[j, i]]);
                assert!(p[[i, j]] >= 0.0);
            }
        }
        let y = Array2::from_shape_fn((9, 2), |(i, j)| (i as f64).sin() + j as f64);
        let (q, _) = student_t_affinities(&y);
        assert!((q.sum() - 1.0).abs() < 1e-12);
    }
}
