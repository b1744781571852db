use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Matrix2, SVD};
use ndarray::Array2;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::model::{
    draw_inv_gamma, draw_sigma2, initial_state, sigma_theta2_posterior, LsirmData, LsirmState, SamplerConfig,
};
use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Block {
    Theta,
    Beta,
    U,
    V,
}

/// One logged Metropolis step.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub iteration: usize,
    pub block: Block,
    pub index: usize,
    pub current: LsirmState,
    pub proposed: LsirmState,
    /// Log posterior of `proposed` minus that of `current`, from local terms.
    pub log_ratio: f64,
    pub accept_prob: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AcceptanceRates {
    pub theta: f64,
    pub beta: f64,
    pub u: f64,
    pub v: f64,
}

#[derive(Debug, Clone)]
pub struct LsirmPosterior {
    /// Retained states after Procrustes alignment of the latent positions.
    pub samples: Vec<LsirmState>,
    /// 1-based iteration number of each retained sample.
    pub iterations: Vec<usize>,
    pub acceptance: AcceptanceRates,
    pub transitions: Vec<Transition>,
    pub config: SamplerConfig,
}

struct Chain<'a> {
    data: &'a LsirmData,
    cfg: &'a SamplerConfig,
    s: LsirmState,
    /// `dist[[i, j]] = ‖u_j − v_i‖`
    dist: Array2<f64>,
    rng: Rng,
    accepted: [usize; 4],
    proposed: [usize; 4],
    log: Vec<Transition>,
    iteration: usize,
}

impl Chain<'_> {
    fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    fn resid(&self, i: usize, j: usize) -> f64 {
        self.data.y()[[i, j]] - (self.s.theta[j] + self.s.beta[i] - self.dist[[i, j]])
    }

    /// Accept or reject; returns whether the proposal was taken.
    fn decide(&mut self, block: Block, index: usize, log_ratio: f64, proposed: Option<LsirmState>) -> bool {
        let accept_prob = if log_ratio >= 0.0 { 1.0 } else { log_ratio.exp() };
        let draw: f64 = self.rng.gen();
        let accepted = draw < accept_prob;
        let k = block as usize;
        self.proposed[k] += 1;
        self.accepted[k] += usize::from(accepted);
        if let Some(p) = proposed {
            self.log.push(Transition {
                iteration: self.iteration,
                block,
                index,
                current: self.s.clone(),
                proposed: p,
                log_ratio,
                accept_prob,
                accepted,
            });
        }
        accepted
    }

    fn snapshot(&self, f: impl FnOnce(&mut LsirmState)) -> Option<LsirmState> {
        self.cfg.log_transitions.then(|| {
            let mut p = self.s.clone();
            f(&mut p);
            p
        })
    }

    fn update_theta(&mut self, j: usize) {
        let step = self.cfg.sd_theta * self.normal();
        let two_s2 = 2.0 * self.s.sigma2;
        let mut delta = 0.0;
        for i in 0..self.data.n_patients() {
            let r = self.resid(i, j);
            delta += (r * r - (r - step).powi(2)) / two_s2;
        }
        let (old, new) = (self.s.theta[j], self.s.theta[j] + step);
        delta += (old * old - new * new) / (2.0 * self.s.sigma_theta2);
        let snap = self.snapshot(|p| p.theta[j] = new);
        if self.decide(Block::Theta, j, delta, snap) {
            self.s.theta[j] = new;
        }
    }

    fn update_beta(&mut self, i: usize) {
        let step = self.cfg.sd_beta * self.normal();
        let two_s2 = 2.0 * self.s.sigma2;
        let mut delta = 0.0;
        for j in 0..self.data.n_rois() {
            let r = self.resid(i, j);
            delta += (r * r - (r - step).powi(2)) / two_s2;
        }
        let (old, new) = (self.s.beta[i], self.s.beta[i] + step);
        delta += (old * old - new * new) / (2.0 * self.cfg.tau2_beta);
        let snap = self.snapshot(|p| p.beta[i] = new);
        if self.decide(Block::Beta, i, delta, snap) {
            self.s.beta[i] = new;
        }
    }

    fn update_u(&mut self, j: usize) {
        let sd = self.cfg.sd_u;
        let new = [self.s.u[[j, 0]] + sd * self.normal(), self.s.u[[j, 1]] + sd * self.normal()];
        let two_s2 = 2.0 * self.s.sigma2;
        let n = self.data.n_patients();
        let mut new_dist = vec![0.0; n];
        let mut delta = 0.0;
        for (i, nd) in new_dist.iter_mut().enumerate() {
            *nd = (new[0] - self.s.v[[i, 0]]).hypot(new[1] - self.s.v[[i, 1]]);
            let r = self.resid(i, j);
            let r_new = r + *nd - self.dist[[i, j]];
            delta += (r * r - r_new * r_new) / two_s2;
        }
        let old = [self.s.u[[j, 0]], self.s.u[[j, 1]]];
        delta += 0.5 * (old[0] * old[0] + old[1] * old[1] - new[0] * new[0] - new[1] * new[1]);
        let snap = self.snapshot(|p| {
            p.u[[j, 0]] = new[0];
            p.u[[j, 1]] = new[1];
        });
        if self.decide(Block::U, j, delta, snap) {
            self.s.u[[j, 0]] = new[0];
            self.s.u[[j, 1]] = new[1];
            for (i, nd) in new_dist.into_iter().enumerate() {
                self.dist[[i, j]] = nd;
            }
        }
    }

    fn update_v(&mut self, i: usize) {
        let sd = self.cfg.sd_v;
        let new = [self.s.v[[i, 0]] + sd * self.normal(), self.s.v[[i, 1]] + sd * self.normal()];
        let two_s2 = 2.0 * self.s.sigma2;
        let jn = self.data.n_rois();
        let mut new_dist = vec![0.0; jn];
        let mut delta = 0.0;
        for (j, nd) in new_dist.iter_mut().enumerate() {
            *nd = (self.s.u[[j, 0]] - new[0]).hypot(self.s.u[[j, 1]] - new[1]);
            let r = self.resid(i, j);
            let r_new = r + *nd - self.dist[[i, j]];
            delta += (r * r - r_new * r_new) / two_s2;
        }
        let old = [self.s.v[[i, 0]], self.s.v[[i, 1]]];
        delta += 0.5 * (old[0] * old[0] + old[1] * old[1] - new[0] * new[0] - new[1] * new[1]);
        let snap = self.snapshot(|p| {
            p.v[[i, 0]] = new[0];
            p.v[[i, 1]] = new[1];
        });
        if self.decide(Block::V, i, delta, snap) {
            self.s.v[[i, 0]] = new[0];
            self.s.v[[i, 1]] = new[1];
            for (j, nd) in new_dist.into_iter().enumerate() {
                self.dist[[i, j]] = nd;
            }
        }
    }

    fn sweep(&mut self) {
        for j in 0..self.data.n_rois() {
            self.update_theta(j);
        }
        for i in 0..self.data.n_patients() {
            self.update_beta(i);
        }
        for j in 0..self.data.n_rois() {
            self.update_u(j);
        }
        for i in 0..self.data.n_patients() {
            self.update_v(i);
        }
        self.s.sigma2 = draw_sigma2(&self.s, self.data, self.cfg, &mut self.rng);
        let (shape, scale) = sigma_theta2_posterior(&self.s, self.cfg);
        self.s.sigma_theta2 = draw_inv_gamma(shape, scale, &mut self.rng);
    }
}

fn distances(s: &LsirmState) -> Array2<f64> {
    Array2::from_shape_fn((s.v.nrows(), s.u.nrows()), |(i, j)| s.distance(j, i))
}

pub fn mcmc_run(data: &LsirmData, config: &SamplerConfig) -> Result<LsirmPosterior> {
    let mut rng = rng_from_seed(config.seed);
    let init = initial_state(data, &mut rng);
    run_chain(data, config, init, rng)
}

/// Run from a caller-supplied starting state.
pub fn mcmc_run_from(data: &LsirmData, config: &SamplerConfig, init: LsirmState) -> Result<LsirmPosterior> {
    run_chain(data, config, init, rng_from_seed(config.seed))
}

fn run_chain(data: &LsirmData, config: &SamplerConfig, init: LsirmState, rng: Rng) -> Result<LsirmPosterior> {
    config.validate()?;
    if data.n_patients() < 2 || data.n_rois() < 2 {
        return Err(Error::Shape(format!(
            "need at least 2 patients and 2 ROIs, got {}×{}",
            data.n_patients(),
            data.n_rois()
        )));
    }
    init.validate(data)?;
    let y = data.y();
    let first = y[[0, 0]];
    if y.iter().all(|&v| v == first) {
        log::warn!("all responses equal {first}; the posterior is driven by the priors");
    }

    let mut chain = Chain {
        data,
        cfg: config,
        dist: distances(&init),
        s: init,
        rng,
        accepted: [0; 4],
        proposed: [0; 4],
        log: Vec::new(),
        iteration: 0,
    };
    let mut samples = Vec::with_capacity(config.n_retained());
    let mut iterations = Vec::with_capacity(config.n_retained());
    for t in 1..=config.n_iter {
        chain.iteration = t;
        chain.sweep();
        if !chain.s.sigma2.is_finite() || !chain.s.theta.iter().all(|v| v.is_finite()) {
            return Err(Error::NumericOverflow("sampler state"));
        }
        if t > config.burn_in && (t - config.burn_in) % config.thin == 0 {
            samples.push(chain.s.clone());
            iterations.push(t);
        }
    }
    align_samples(&mut samples);
    let rate = |k: usize| {
        if chain.proposed[k] == 0 {
            0.0
        } else {
            chain.accepted[k] as f64 / chain.proposed[k] as f64
        }
    };
    Ok(LsirmPosterior {
        samples,
        iterations,
        acceptance: AcceptanceRates {
            theta: rate(0),
            beta: rate(1),
            u: rate(2),
            v: rate(3),
        },
        transitions: chain.log,
        config: config.clone(),
    })
}

/// Orthogonal `R` minimising `‖X R − target‖_F` over the stacked (U; V) rows.
pub fn procrustes_rotation(x: &LsirmState, target: &LsirmState) -> Matrix2<f64> {
    let mut m = Matrix2::<f64>::zeros();
    for (a, b) in [(&x.u, &target.u), (&x.v, &target.v)] {
        for (ra, rb) in a.rows().into_iter().zip(b.rows()) {
            for p in 0..2 {
                for q in 0..2 {
                    m[(p, q)] += ra[p] * rb[q];
                }
            }
        }
    }
    let svd = SVD::new(m, true, true);
    let (w, zt) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    w * zt
}

pub fn apply_rotation(s: &mut LsirmState, r: &Matrix2<f64>) {
    for block in [&mut s.u, &mut s.v] {
        for mut row in block.rows_mut() {
            let (x, y) = (row[0], row[1]);
            row[0] = x * r[(0, 0)] + y * r[(1, 0)];
            row[1] = x * r[(0, 1)] + y * r[(1, 1)];
        }
    }
}

/// Align every sample's latent positions to the last sample.
pub fn align_samples(samples: &mut [LsirmState]) {
    let Some(reference) = samples.last().cloned() else { return };
    let n = samples.len();
    for s in &mut samples[..n - 1] {
        let r = procrustes_rotation(s, &reference);
        apply_rotation(s, &r);
    }
}

impl LsirmPosterior {
    /// Per-block chain CSVs with a leading iteration column.
    pub fn write_chains(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let first = self.samples.first().ok_or(Error::Empty("posterior samples"))?;
        let (j, n) = (first.theta.len(), first.beta.len());
        let header = |prefix: &str, count: usize, pairs: bool| {
            let mut h = String::from("iteration");
            for k in 1..=count {
                if pairs {
                    let _ = write!(h, ",{prefix}{k}_x,{prefix}{k}_y");
                } else {
                    let _ = write!(h, ",{prefix}{k}");
                }
            }
            h.push('\n');
            h
        };
        let mut files = [
            ("theta.csv", header("theta", j, false)),
            ("beta.csv", header("beta", n, false)),
            ("u.csv", header("u", j, true)),
            ("v.csv", header("v", n, true)),
            ("variances.csv", "iteration,sigma2,sigma_theta2\n".to_string()),
        ];
        for (s, it) in self.samples.iter().zip(&self.iterations) {
            let line = |vals: &mut dyn Iterator<Item = f64>| {
                let mut l = it.to_string();
                for v in vals {
                    let _ = write!(l, ",{v}");
                }
                l.push('\n');
                l
            };
            files[0].1 += &line(&mut s.theta.iter().copied());
            files[1].1 += &line(&mut s.beta.iter().copied());
            files[2].1 += &line(&mut s.u.iter().copied());
            files[3].1 += &line(&mut s.v.iter().copied());
            files[4].1 += &line(&mut [s.sigma2, s.sigma_theta2].into_iter());
        }
        for (name, text) in files {
            let path = dir.join(name);
            fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}
