//! Simplified UMAP: fuzzy k-NN graph plus negative-sampling layout.

use ndarray::{Array2, ArrayView2};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{channel_points, squared_distances, Embedding, Method, MethodParams};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UmapParams {
    pub n_neighbors: usize,
    pub min_dist: f64,
    pub epochs: usize,
    pub negative_sample_rate: usize,
}

impl Default for UmapParams {
    fn default() -> Self {
        Self {
            n_neighbors: 15,
            min_dist: 0.1,
            epochs: 500,
            negative_sample_rate: 5,
        }
    }
}

impl UmapParams {
    pub fn validate(&self, n_points: usize) -> Result<()> {
        if self.n_neighbors < 2 || self.n_neighbors >= n_points {
            return Err(Error::InvalidParameter(format!(
                "n_neighbors {} must lie in [2, {n_points})",
                self.n_neighbors
            )));
        }
        if !(self.min_dist > 0.0 && self.min_dist < 1.0) {
            return Err(Error::InvalidParameter("min_dist must lie in (0, 1)".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidParameter("epochs must be positive".into()));
        }
        Ok(())
    }
}

const SPREAD: f64 = 1.0;
const GRAD_CLIP: f64 = 4.0;
const BANDWIDTH_TOL: f64 = 1e-10;
const MAX_BISECTION_STEPS: usize = 200;

#[derive(Debug, Clone)]
pub struct UmapRun {
    pub embedding: Embedding,
    /// Per-point neighbour lists `(index, distance)`, nearest first.
    pub neighbors: Vec<Vec<(usize, f64)>>,
    pub rho: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Symmetrised fuzzy membership strengths.
    pub weights: Array2<f64>,
    pub a: f64,
    pub b: f64,
}

/// `k` nearest neighbours (excluding self) by Euclidean distance; ties by index.
pub fn nearest_neighbors(dist: &Array2<f64>, k: usize) -> Vec<Vec<(usize, f64)>> {
    let n = dist.nrows();
    (0..n)
        .map(|i| {
            let mut row: Vec<(usize, f64)> =
                (0..n).filter(|&j| j != i).map(|j| (j, dist[[i, j]])).collect();
            row.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            row.truncate(k);
            row
        })
        .collect()
}

/// Solves `Σ_j exp(−max(0, d_ij − ρ_i) / σ_i) = log2(k)` for each point.
pub fn smooth_knn_bandwidths(neighbors: &[Vec<(usize, f64)>], k: usize) -> (Vec<f64>, Vec<f64>) {
    let target = (k as f64).log2();
    let mut rhos = Vec::with_capacity(neighbors.len());
    let mut sigmas = Vec::with_capacity(neighbors.len());
    for row in neighbors {
        let rho = row.first().map(|&(_, d)| d).unwrap_or(0.0);
        let (mut lo, mut hi) = (0.0_f64, f64::INFINITY);
        let mut sigma = 1.0;
        for _ in 0..MAX_BISECTION_STEPS {
            let s = membership_sum(row, rho, sigma);
            if (s - target).abs() < BANDWIDTH_TOL {
                break;
            }
            if s > target {
                hi = sigma;
                sigma = 0.5 * (lo + hi);
            } else {
                lo = sigma;
                sigma = if hi.is_finite() { 0.5 * (lo + hi) } else { sigma * 2.0 };
            }
        }
        rhos.push(rho);
        sigmas.push(sigma);
    }
    (rhos, sigmas)
}

pub fn membership_sum(row: &[(usize, f64)], rho: f64, sigma: f64) -> f64 {
    row.iter().map(|&(_, d)| membership(d, rho, sigma)).sum()
}

fn membership(d: f64, rho: f64, sigma: f64) -> f64 {
    let excess = d - rho;
    if excess <= 0.0 {
        1.0
    } else {
        (-excess / sigma).exp()
    }
}

/// Fuzzy union `w_ij = a + b − ab` of the directed memberships `a = w_{i→j}`, `b = w_{j→i}`.
pub fn fuzzy_union(directed: &Array2<f64>) -> Array2<f64> {
    let n = directed.nrows();
    Array2::from_shape_fn((n, n), |(i, j)| {
        let (a, b) = (directed[[i, j]], directed[[j, i]]);
        a + b - a * b
    })
}

/// Fits `1 / (1 + a x^{2b})` to the target curve (1 below `min_dist`, then
/// `exp(−(x − min_dist)/spread)`) by Levenberg–Marquardt least squares.
pub fn fit_ab(min_dist: f64) -> (f64, f64) {
    let xs: Vec<f64> = (0..300).map(|i| 3.0 * SPREAD * i as f64 / 299.0).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| if x < min_dist { 1.0 } else { (-(x - min_dist) / SPREAD).exp() })
        .collect();
    let sse = |a: f64, b: f64| -> f64 {
        xs.iter()
            .zip(&ys)
            .map(|(&x, &y)| {
                let f = 1.0 / (1.0 + a * x.powf(2.0 * b));
                (f - y).powi(2)
            })
            .sum()
    };
    let (mut a, mut b) = (1.0, 1.0);
    let mut lambda = 1e-3;
    let mut cost = sse(a, b);
    for _ in 0..500 {
        // Normal equations J^T J δ = -J^T r for the 2 parameters.
        let (mut jaa, mut jab, mut jbb, mut ga, mut gb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&x, &y) in xs.iter().zip(&ys) {
            if x == 0.0 {
                continue;
            }
            let p = x.powf(2.0 * b);
            let denom = 1.0 + a * p;
            let f = 1.0 / denom;
            let r = f - y;
            let dfa = -p / (denom * denom);
            let dfb = -a * p * 2.0 * x.ln() / (denom * denom);
            jaa += dfa * dfa;
            jab += dfa * dfb;
            jbb += dfb * dfb;
            ga += dfa * r;
            gb += dfb * r;
        }
        let (maa, mbb) = (jaa * (1.0 + lambda), jbb * (1.0 + lambda));
        let det = maa * mbb - jab * jab;
        if det.abs() < 1e-300 {
            break;
        }
        let da = -(mbb * ga - jab * gb) / det;
        let db = -(maa * gb - jab * ga) / det;
        let (na, nb) = (a + da, b + db);
        if na > 0.0 && nb > 0.0 {
            let c = sse(na, nb);
            if c < cost {
                let converged = (cost - c) < 1e-15 * cost.max(1e-300);
                a = na;
                b = nb;
                cost = c;
                lambda = (lambda * 0.3).max(1e-12);
                if converged {
                    break;
                }
                continue;
            }
        }
        lambda *= 10.0;
        if lambda > 1e12 {
            break;
        }
    }
    (a, b)
}

pub fn umap_embed(signal: ArrayView2<f64>, params: &UmapParams, seed: u64) -> Result<Embedding> {
    umap_run(signal, params, seed).map(|r| r.embedding)
}

pub fn umap_run(signal: ArrayView2<f64>, params: &UmapParams, seed: u64) -> Result<UmapRun> {
    let points = channel_points(signal);
    let n = points.nrows();
    params.validate(n)?;
    let dist = squared_distances(&points).mapv(f64::sqrt);
    let neighbors = nearest_neighbors(&dist, params.n_neighbors);
    let (rho, sigma) = smooth_knn_bandwidths(&neighbors, params.n_neighbors);

    let mut directed = Array2::zeros((n, n));
    for (i, row) in neighbors.iter().enumerate() {
        for &(j, d) in row {
            directed[[i, j]] = membership(d, rho[i], sigma[i]);
        }
    }
    let weights = fuzzy_union(&directed);
    let (a, b) = fit_ab(params.min_dist);

    let mut rng = rng_from_seed(seed);
    let mut y = Array2::from_shape_fn((n, 2), |_| rng.gen_range(-10.0..10.0));
    optimize_layout(&mut y, &weights, a, b, params, &mut rng);
    let embedding = Embedding::new(y, Method::Umap, MethodParams::Umap(*params), seed)?;
    Ok(UmapRun {
        embedding,
        neighbors,
        rho,
        sigma,
        weights,
        a,
        b,
    })
}

fn optimize_layout(
    y: &mut Array2<f64>,
    weights: &Array2<f64>,
    a: f64,
    b: f64,
    params: &UmapParams,
    rng: &mut crate::rng::Rng,
) {
    let n = y.nrows();
    let epochs = params.epochs as f64;
    let w_max = weights.iter().cloned().fold(0.0, f64::max);
    if w_max <= 0.0 {
        return;
    }
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let w = weights[[i, j]];
            // Edges too weak to be sampled once during the run are dropped.
            if i != j && w > 0.0 && w >= w_max / epochs {
                edges.push((i, j, w_max / w));
            }
        }
    }
    let neg_rate = params.negative_sample_rate.max(1) as f64;
    let mut next_sample: Vec<f64> = edges.iter().map(|e| e.2).collect();
    let mut next_negative: Vec<f64> = edges.iter().map(|e| e.2 / neg_rate).collect();

    for epoch in 0..params.epochs {
        let n_ep = epoch as f64;
        let alpha = 1.0 - n_ep / epochs;
        for (e, &(j, k, per_sample)) in edges.iter().enumerate() {
            if next_sample[e] > n_ep {
                continue;
            }
            let d2 = dist2(y, j, k);
            let coef = if d2 > 0.0 {
                -2.0 * a * b * d2.powf(b - 1.0) / (a * d2.powf(b) + 1.0)
            } else {
                0.0
            };
            for dim in 0..2 {
                let g = clip(coef * (y[[j, dim]] - y[[k, dim]]));
                y[[j, dim]] += g * alpha;
                y[[k, dim]] -= g * alpha;
            }
            next_sample[e] += per_sample;

            let per_negative = per_sample / neg_rate;
            let n_neg = ((n_ep - next_negative[e]) / per_negative).floor().max(0.0) as usize;
            for _ in 0..n_neg {
                let other = rng.gen_range(0..n);
                if other == j {
                    continue;
                }
                let d2 = dist2(y, j, other);
                let coef = if d2 > 0.0 {
                    2.0 * b / ((0.001 + d2) * (a * d2.powf(b) + 1.0))
                } else {
                    0.0
                };
                for dim in 0..2 {
                    let g = if coef > 0.0 {
                        clip(coef * (y[[j, dim]] - y[[other, dim]]))
                    } else {
                        GRAD_CLIP
                    };
                    y[[j, dim]] += g * alpha;
                }
            }
            next_negative[e] += n_neg as f64 * per_negative;
        }
    }
}

fn dist2(y: &Array2<f64>, i: usize, j: usize) -> f64 {
    let dx = y[[i, 0]] - y[[j, 0]];
    let dy = y[[i, 1]] - y[[j, 1]];
    dx * dx + dy * dy
}

fn clip(v: f64) -> f64 {
    v.clamp(-GRAD_CLIP, GRAD_CLIP)
}
