use serde::{Deserialize, Serialize};

use super::model::LsirmState;
use super::sampler::{AcceptanceRates, LsirmPosterior};
use crate::error::{Error, Result};

/// Posterior means over aligned samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub theta: Vec<f64>,
    pub theta_sd: Vec<f64>,
    pub beta: Vec<f64>,
    pub u: Vec<[f64; 2]>,
    pub v: Vec<[f64; 2]>,
    pub sigma2: f64,
    pub sigma_theta2: f64,
    /// Mean distance from each ROI to the centroid of the patient positions.
    pub centrality: Vec<f64>,
    pub acceptance: AcceptanceRates,
    pub n_samples: usize,
}

fn centroid(s: &LsirmState) -> [f64; 2] {
    let n = s.v.nrows() as f64;
    [s.v.column(0).sum() / n, s.v.column(1).sum() / n]
}

pub fn summarize_samples(samples: &[LsirmState], acceptance: AcceptanceRates) -> Result<PosteriorSummary> {
    let first = samples.first().ok_or(Error::Empty("posterior samples"))?;
    let m = samples.len() as f64;
    let (j, n) = (first.theta.len(), first.beta.len());
    let mut theta = vec![0.0; j];
    let mut theta_sq = vec![0.0; j];
    let mut beta = vec![0.0; n];
    let mut u = vec![[0.0; 2]; j];
    let mut v = vec![[0.0; 2]; n];
    let mut centrality = vec![0.0; j];
    let (mut sigma2, mut sigma_theta2) = (0.0, 0.0);
    for s in samples {
        let c = centroid(s);
        for k in 0..j {
            theta[k] += s.theta[k];
            theta_sq[k] += s.theta[k] * s.theta[k];
            u[k][0] += s.u[[k, 0]];
            u[k][1] += s.u[[k, 1]];
            centrality[k] += (s.u[[k, 0]] - c[0]).hypot(s.u[[k, 1]] - c[1]);
        }
        for i in 0..n {
            beta[i] += s.beta[i];
            v[i][0] += s.v[[i, 0]];
            v[i][1] += s.v[[i, 1]];
        }
        sigma2 += s.sigma2;
        sigma_theta2 += s.sigma_theta2;
    }
    let div = |x: &mut f64| *x /= m;
    theta.iter_mut().for_each(div);
    beta.iter_mut().for_each(div);
    centrality.iter_mut().for_each(div);
    u.iter_mut().flatten().for_each(div);
    v.iter_mut().flatten().for_each(div);
    let theta_sd = theta
        .iter()
        .zip(&theta_sq)
        .map(|(mean, sq)| {
            if samples.len() < 2 {
                0.0
            } else {
                ((sq - m * mean * mean) / (m - 1.0)).max(0.0).sqrt()
            }
        })
        .collect();
    Ok(PosteriorSummary {
        theta,
        theta_sd,
        beta,
        u,
        v,
        sigma2: sigma2 / m,
        sigma_theta2: sigma_theta2 / m,
        centrality,
        acceptance,
        n_samples: samples.len(),
    })
}

pub fn posterior_summary(posterior: &LsirmPosterior) -> Result<PosteriorSummary> {
    summarize_samples(&posterior.samples, posterior.acceptance)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoiCategory {
    OnlyA,
    OnlyB,
    Both,
    StrongerInA,
    StrongerInB,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiCategorization {
    /// Zero-based atlas index.
    pub roi: usize,
    pub category: RoiCategory,
    pub theta_a: Option<f64>,
    pub theta_b: Option<f64>,
    pub delta: Option<f64>,
}

/// Categorise every ROI in either selection. `selected_a[k]` is the atlas index
/// of column `k` in the model summarised by `a`; likewise for `b`. ROIs in
/// both sets are compared on θ with threshold `delta`, defaulting per ROI to
/// `sqrt((sd_a² + sd_b²) / 2)`.
pub fn significant_rois(
    a: &PosteriorSummary,
    b: &PosteriorSummary,
    selected_a: &[usize],
    selected_b: &[usize],
    delta: Option<f64>,
) -> Result<Vec<RoiCategorization>> {
    if selected_a.len() != a.theta.len() || selected_b.len() != b.theta.len() {
        return Err(Error::Shape("selected ROI lists do not match the summaries".into()));
    }
    let mut rois: Vec<usize> = selected_a.iter().chain(selected_b).copied().collect();
    rois.sort_unstable();
    rois.dedup();
    Ok(rois
        .into_iter()
        .map(|roi| {
            let pa = selected_a.iter().position(|&r| r == roi);
            let pb = selected_b.iter().position(|&r| r == roi);
            let theta_a = pa.map(|k| a.theta[k]);
            let theta_b = pb.map(|k| b.theta[k]);
            match (pa, pb) {
                (Some(ka), Some(kb)) => {
                    let d = delta.unwrap_or_else(|| ((a.theta_sd[ka].powi(2) + b.theta_sd[kb].powi(2)) / 2.0).sqrt());
                    let diff = a.theta[ka] - b.theta[kb];
                    let category = if diff.abs() <= d {
                        RoiCategory::Both
                    } else if diff > 0.0 {
                        RoiCategory::StrongerInA
                    } else {
                        RoiCategory::StrongerInB
                    };
                    RoiCategorization { roi, category, theta_a, theta_b, delta: Some(d) }
                }
                (Some(_), None) => RoiCategorization { roi, category: RoiCategory::OnlyA, theta_a, theta_b, delta: None },
                _ => RoiCategorization { roi, category: RoiCategory::OnlyB, theta_a, theta_b, delta: None },
            }
        })
        .collect())
}
