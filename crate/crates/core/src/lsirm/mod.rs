//! Continuous latent space item response model fitted by Metropolis-within-Gibbs.

pub mod model;
pub mod sampler;
pub mod summary;

pub use model::{
    draw_inv_gamma, draw_sigma2, initial_state, log_inv_gamma, log_likelihood, log_posterior, log_prior,
    random_truth, sigma2_posterior, sigma_theta2_posterior, simulate_responses, LsirmData, LsirmState,
    SamplerConfig,
};
pub use sampler::{
    align_samples, apply_rotation, mcmc_run, mcmc_run_from, procrustes_rotation, AcceptanceRates, Block,
    LsirmPosterior, Transition,
};
pub use summary::{
    posterior_summary, significant_rois, summarize_samples, PosteriorSummary, RoiCategorization, RoiCategory,
};
