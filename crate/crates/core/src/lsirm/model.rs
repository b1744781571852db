use ndarray::{Array1, Array2};
use rand::Rng as _;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::featsel::PatientRoiMatrix;
use crate::rng::{rng_from_seed, Rng};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Responses `y[[i, j]]` for patient `i` and ROI `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct LsirmData {
    y: Array2<f64>,
}

impl LsirmData {
    /// Any finite, non-empty matrix.
    pub fn new(y: Array2<f64>) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::Empty("responses"));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericOverflow("responses"));
        }
        Ok(Self { y })
    }

    /// Additionally requires every cell to lie in `[0, 1]`.
    pub fn from_patient_matrix(m: &PatientRoiMatrix) -> Result<Self> {
        if let Some(v) = m.values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidParameter(format!("response {v} outside [0, 1]")));
        }
        Self::new(m.values.clone())
    }

    pub fn y(&self) -> &Array2<f64> {
        &self.y
    }

    pub fn n_patients(&self) -> usize {
        self.y.nrows()
    }

    pub fn n_rois(&self) -> usize {
        self.y.ncols()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsirmState {
    pub theta: Array1<f64>,
    pub beta: Array1<f64>,
    /// `J × 2` ROI positions.
    pub u: Array2<f64>,
    /// `N × 2` patient positions.
    pub v: Array2<f64>,
    pub sigma2: f64,
    pub sigma_theta2: f64,
}

impl LsirmState {
    pub fn validate(&self, data: &LsirmData) -> Result<()> {
        let (n, j) = (data.n_patients(), data.n_rois());
        if self.theta.len() != j || self.beta.len() != n || self.u.dim() != (j, 2) || self.v.dim() != (n, 2) {
            return Err(Error::Shape("state does not match data dimensions".into()));
        }
        if !(self.sigma2 > 0.0) || !(self.sigma_theta2 > 0.0) {
            return Err(Error::InvalidParameter("variances must be positive".into()));
        }
        Ok(())
    }

    pub fn distance(&self, roi: usize, patient: usize) -> f64 {
        (self.u[[roi, 0]] - self.v[[patient, 0]]).hypot(self.u[[roi, 1]] - self.v[[patient, 1]])
    }

    pub fn mean(&self, roi: usize, patient: usize) -> f64 {
        self.theta[roi] + self.beta[patient] - self.distance(roi, patient)
    }

    pub fn roi_distances(&self) -> Array2<f64> {
        let j = self.u.nrows();
        Array2::from_shape_fn((j, j), |(a, b)| (self.u[[a, 0]] - self.u[[b, 0]]).hypot(self.u[[a, 1]] - self.u[[b, 1]]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub sd_theta: f64,
    pub sd_beta: f64,
    pub sd_u: f64,
    pub sd_v: f64,
    pub tau2_beta: f64,
    pub a: f64,
    pub b: f64,
    pub a_sigma: f64,
    pub b_sigma: f64,
    pub seed: u64,
    /// Record every Metropolis transition (memory heavy; for diagnostics).
    #[serde(default)]
    pub log_transitions: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_iter: 55_000,
            burn_in: 5_000,
            thin: 10,
            sd_theta: 0.1,
            sd_beta: 0.1,
            sd_u: 0.1,
            sd_v: 0.1,
            tau2_beta: 1.0,
            a: 1.0,
            b: 1.0,
            a_sigma: 1.0,
            b_sigma: 1.0,
            seed: 0,
            log_transitions: false,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if self.n_iter <= self.burn_in {
            return bad("n_iter must exceed burn_in");
        }
        if self.thin == 0 {
            return bad("thin must be positive");
        }
        let sds = [self.sd_theta, self.sd_beta, self.sd_u, self.sd_v];
        if sds.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return bad("proposal sds must be finite and non-negative");
        }
        let pos = [self.tau2_beta, self.a, self.b, self.a_sigma, self.b_sigma];
        if pos.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return bad("prior parameters must be positive");
        }
        Ok(())
    }

    pub fn n_retained(&self) -> usize {
        (self.n_iter - self.burn_in) / self.thin
    }
}

fn log_normal(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (LN_2PI + var.ln()) - (x - mean).powi(2) / (2.0 * var)
}

fn log_mvn2(x: f64, y: f64) -> f64 {
    -LN_2PI - 0.5 * (x * x + y * y)
}

pub fn log_inv_gamma(x: f64, a: f64, b: f64) -> f64 {
    a * b.ln() - ln_gamma(a) - (a + 1.0) * x.ln() - b / x
}

pub fn log_likelihood(state: &LsirmState, data: &LsirmData) -> Result<f64> {
    state.validate(data)?;
    let mut total = 0.0;
    for ((i, j), &y) in data.y.indexed_iter() {
        total += log_normal(y, state.mean(j, i), state.sigma2);
    }
    Ok(total)
}

/// Log prior density of every parameter block.
pub fn log_prior(state: &LsirmState, config: &SamplerConfig) -> f64 {
    let mut lp = 0.0;
    lp += state.theta.iter().map(|&t| log_normal(t, 0.0, state.sigma_theta2)).sum::<f64>();
    lp += state.beta.iter().map(|&b| log_normal(b, 0.0, config.tau2_beta)).sum::<f64>();
    lp += state.u.rows().into_iter().map(|r| log_mvn2(r[0], r[1])).sum::<f64>();
    lp += state.v.rows().into_iter().map(|r| log_mvn2(r[0], r[1])).sum::<f64>();
    lp += log_inv_gamma(state.sigma2, config.a, config.b);
    lp += log_inv_gamma(state.sigma_theta2, config.a_sigma, config.b_sigma);
    lp
}

pub fn log_posterior(state: &LsirmState, data: &LsirmData, config: &SamplerConfig) -> Result<f64> {
    Ok(log_likelihood(state, data)? + log_prior(state, config))
}

/// Draw from Inv-Gamma(shape, scale) as the reciprocal of a Gamma(shape, 1/scale) draw.
pub fn draw_inv_gamma(shape: f64, scale: f64, rng: &mut Rng) -> f64 {
    let g = Gamma::new(shape, 1.0 / scale).expect("positive gamma parameters");
    1.0 / g.sample(rng)
}

/// Posterior parameters of σ² given everything else.
pub fn sigma2_posterior(state: &LsirmState, data: &LsirmData, config: &SamplerConfig) -> (f64, f64) {
    let mut ss = 0.0;
    for ((i, j), &y) in data.y.indexed_iter() {
        ss += (y - state.mean(j, i)).powi(2);
    }
    (config.a + data.y.len() as f64 / 2.0, config.b + ss / 2.0)
}

/// One conjugate Gibbs draw of σ².
pub fn draw_sigma2(state: &LsirmState, data: &LsirmData, config: &SamplerConfig, rng: &mut Rng) -> f64 {
    let (shape, scale) = sigma2_posterior(state, data, config);
    draw_inv_gamma(shape, scale, rng)
}

pub fn sigma_theta2_posterior(state: &LsirmState, config: &SamplerConfig) -> (f64, f64) {
    let ss: f64 = state.theta.iter().map(|t| t * t).sum();
    (config.a_sigma + state.theta.len() as f64 / 2.0, config.b_sigma + ss / 2.0)
}

/// Moment-matched starting point: main effects from row and column means,
/// positions drawn from N(0, 0.1·I).
pub fn initial_state(data: &LsirmData, rng: &mut Rng) -> LsirmState {
    let y = &data.y;
    let grand = y.mean().unwrap_or(0.0);
    let theta = y.mean_axis(ndarray::Axis(0)).expect("non-empty") - grand;
    let beta = y.mean_axis(ndarray::Axis(1)).expect("non-empty") - grand;
    let sd = 0.1f64.sqrt();
    let mut pos = |rows: usize| Array2::from_shape_simple_fn((rows, 2), || sd * rng.sample::<f64, _>(StandardNormal));
    let u = pos(data.n_rois());
    let v = pos(data.n_patients());
    LsirmState {
        theta,
        beta,
        u,
        v,
        sigma2: 1.0,
        sigma_theta2: 1.0,
    }
}

/// Draw responses from the model at `truth`.
pub fn simulate_responses(truth: &LsirmState, seed: u64) -> Result<LsirmData> {
    let mut rng = rng_from_seed(seed);
    let (n, j) = (truth.beta.len(), truth.theta.len());
    let sd = truth.sigma2.sqrt();
    let y = Array2::from_shape_fn((n, j), |(i, jj)| truth.mean(jj, i) + sd * rng.sample::<f64, _>(StandardNormal));
    LsirmData::new(y)
}

/// Random ground truth: θ ~ N(0, σθ²), β ~ N(0, τ²), positions ~ N(0, I).
pub fn random_truth(n: usize, j: usize, sigma2: f64, sigma_theta2: f64, tau2_beta: f64, seed: u64) -> LsirmState {
    let mut rng = rng_from_seed(seed);
    let mut normal = |sd: f64| sd * rng.sample::<f64, _>(StandardNormal);
    let theta = Array1::from_shape_simple_fn(j, || normal(sigma_theta2.sqrt()));
    let beta = Array1::from_shape_simple_fn(n, || normal(tau2_beta.sqrt()));
    let u = Array2::from_shape_simple_fn((j, 2), || normal(1.0));
    let v = Array2::from_shape_simple_fn((n, 2), || normal(1.0));
    LsirmState {
        theta,
        beta,
        u,
        v,
        sigma2,
        sigma_theta2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn single_cell_standard_normal() {
        let data = LsirmData { y: array![[0.0]] };
        let s = LsirmState {
            theta: array![0.0],
            beta: array![0.0],
            u: array![[0.3, 0.4]],
            v: array![[0.3, 0.4]],
            sigma2: 1.0,
            sigma_theta2: 1.0,
        };
        assert!((log_likelihood(&s, &data).unwrap() + 0.5 * LN_2PI).abs() < 1e-15);
    }

    #[test]
    fn inv_gamma_density_integrates() {
        // Trapezoid over a wide range.
        let (a, b) = (3.0, 2.0);
        let n = 200_000;
        let h = 60.0 / n as f64;
        let total: f64 = (1..n).map(|k| log_inv_gamma(k as f64 * h, a, b).exp() * h).sum();
        assert!((total - 1.0).abs() < 1e-4);
    }

    #[test]
    fn config_checks() {
        let mut c = SamplerConfig::default();
        assert!(c.validate().is_ok());
        assert_eq!(c.n_retained(), 5000);
        c.burn_in = c.n_iter;
        assert!(c.validate().is_err());
    }
}
