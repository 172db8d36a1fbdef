//! Posterior sampling with NUTS over the unconstrained parameter space.

pub mod adapt;
pub mod dump;
pub mod nuts;

use crate::model::{BoundModel, Layout, LogpGrad};
use adapt::{DualAveraging, MetricAdaptation};
use nuts::{Nuts, State};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

type Matrix = Vec<Vec<f64>>;

pub use nuts::leapfrog;

/// Anything the sampler can target: an unnormalized log-density on ℝᵈ
/// together with its gradient.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;
    fn logp_grad(&self, q: &[f64]) -> LogpGrad;
}

impl LogDensity for BoundModel {
    fn dim(&self) -> usize {
        BoundModel::dim(self)
    }

    fn logp_grad(&self, q: &[f64]) -> LogpGrad {
        BoundModel::logp_grad(self, q)
    }
}

const INIT_ATTEMPTS: usize = 10;
const INIT_RADIUS: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub chains: usize,
    pub draws: usize,
    pub tune: usize,
    pub target_accept: f64,
    pub max_treedepth: usize,
    pub divergence_energy_threshold: f64,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            chains: 4,
            draws: 1000,
            tune: 1000,
            target_accept: 0.8,
            max_treedepth: 10,
            divergence_energy_threshold: 1000.0,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        let bad = |m: &str| Err(SamplerError::BadConfig(m.to_string()));
        if self.chains < 2 {
            return bad("at least 2 chains are needed");
        }
        if self.draws == 0 || self.tune == 0 {
            return bad("draws and tune must be positive");
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return bad("target_accept must lie in (0, 1)");
        }
        if self.max_treedepth == 0 {
            return bad("max_treedepth must be positive");
        }
        if !(self.divergence_energy_threshold > 0.0) {
            return bad("divergence threshold must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SamplerError {
    #[error("model has no free parameters")]
    ZeroDimension,
    #[error("invalid sampler configuration: {0}")]
    BadConfig(String),
    #[error("chain {chain}: initial evaluation of model at starting point failed after {attempts} attempts")]
    InitFailed { chain: usize, attempts: usize },
    #[error("chain {chain}: {message}")]
    StepSize { chain: usize, message: String },
}

/// Raw output of one chain, unconstrained.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    pub draws: Vec<Vec<f64>>,
    pub energy: Vec<f64>,
    pub divergent: Vec<bool>,
    pub stats: ChainStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainStats {
    pub step_size: f64,
    pub inv_metric: Vec<f64>,
    pub mean_accept: f64,
    pub treedepth_hits: usize,
    pub n_leapfrog: usize,
    pub warmup_divergences: usize,
}

fn initial_state<T: LogDensity + ?Sized>(
    target: &T,
    rng: &mut ChaCha8Rng,
    chain: usize,
) -> Result<State, SamplerError> {
    for _ in 0..INIT_ATTEMPTS {
        let q: Vec<f64> = (0..target.dim()).map(|_| rng.random_range(-INIT_RADIUS..INIT_RADIUS)).collect();
        let s = State::at(target, q);
        if s.logp.is_finite() && s.grad.iter().all(|g| g.is_finite()) {
            return Ok(s);
        }
    }
    Err(SamplerError::InitFailed { chain, attempts: INIT_ATTEMPTS })
}

/// Runs warmup then sampling for a single chain.
pub fn run_chain<T: LogDensity + ?Sized>(
    target: &T,
    config: &SamplerConfig,
    chain: usize,
) -> Result<ChainOutput, SamplerError> {
    let dim = target.dim();
    if dim == 0 {
        return Err(SamplerError::ZeroDimension);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(chain as u64);
    let init = initial_state(target, &mut rng, chain)?;
    let step_err = |message| SamplerError::StepSize { chain, message };

    let mut nuts = Nuts::new(target, init, 1.0, config.max_treedepth, config.divergence_energy_threshold);
    nuts.init_step_size(&mut rng).map_err(step_err)?;
    let mut da = DualAveraging::new(config.target_accept);
    da.set_mu((10.0 * nuts.step_size).ln());
    let mut metric = MetricAdaptation::new(dim, config.tune);
    let mut warmup_divergences = 0;

    for _ in 0..config.tune {
        let t = nuts.transition(&mut rng);
        warmup_divergences += t.divergent as usize;
        nuts.step_size = da.learn(t.accept_stat);
        let q = nuts.position().to_vec();
        if metric.learn(&mut nuts.inv_metric, &q) {
            nuts.init_step_size(&mut rng).map_err(step_err)?;
            da.set_mu((10.0 * nuts.step_size).ln());
            da.restart();
        }
    }
    nuts.step_size = da.final_step_size();

    let mut out = ChainOutput {
        draws: Vec::with_capacity(config.draws),
        energy: Vec::with_capacity(config.draws),
        divergent: Vec::with_capacity(config.draws),
        stats: ChainStats {
            step_size: nuts.step_size,
            inv_metric: nuts.inv_metric.clone(),
            mean_accept: 0.0,
            treedepth_hits: 0,
            n_leapfrog: 0,
            warmup_divergences,
        },
    };
    let mut accept = 0.0;
    for _ in 0..config.draws {
        let t = nuts.transition(&mut rng);
        accept += t.accept_stat;
        out.stats.treedepth_hits += (t.depth >= config.max_treedepth) as usize;
        out.stats.n_leapfrog += t.n_leapfrog;
        out.draws.push(nuts.position().to_vec());
        out.energy.push(t.energy);
        out.divergent.push(t.divergent);
    }
    out.stats.mean_accept = accept / config.draws as f64;
    Ok(out)
}

/// Runs every chain in parallel; results come back in chain order.
pub fn sample_chains<T: LogDensity + ?Sized>(
    target: &T,
    config: &SamplerConfig,
) -> Result<Vec<ChainOutput>, SamplerError> {
    config.validate()?;
    if target.dim() == 0 {
        return Err(SamplerError::ZeroDimension);
    }
    (0..config.chains).into_par_iter().map(|c| run_chain(target, config, c)).collect()
}

/// Posterior draws in constrained space plus everything diagnostics need.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub layout: Layout,
    pub coordinates: Vec<String>,
    /// `[chain][iteration][parameter]`
    pub draws: Vec<Vec<Vec<f64>>>,
    /// `[chain][iteration]`
    pub energy: Vec<Vec<f64>>,
    pub divergent: Vec<Vec<bool>>,
    /// `[chain][iteration][observation]`
    pub pointwise_loglik: Vec<Vec<Vec<f64>>>,
    pub stats: Vec<ChainStats>,
}

impl PosteriorDraws {
    pub fn n_chains(&self) -> usize {
        self.draws.len()
    }

    pub fn n_draws(&self) -> usize {
        self.draws.first().map_or(0, Vec::len)
    }

    pub fn n_params(&self) -> usize {
        self.coordinates.len()
    }

    pub fn divergences(&self) -> usize {
        self.divergent.iter().flatten().filter(|&&d| d).count()
    }

    /// `[chain][iteration]` trace of one coordinate.
    pub fn param(&self, index: usize) -> Vec<Vec<f64>> {
        self.draws.iter().map(|c| c.iter().map(|d| d[index]).collect()).collect()
    }

    pub fn param_by_name(&self, name: &str) -> Option<Vec<Vec<f64>>> {
        self.coordinates.iter().position(|c| c == name).map(|i| self.param(i))
    }

    /// Pointwise log-likelihood flattened to `[draw][observation]` with
    /// chains concatenated.
    pub fn loglik_matrix(&self) -> Vec<Vec<f64>> {
        self.pointwise_loglik.iter().flatten().cloned().collect()
    }
}

pub fn nuts_sample(model: &BoundModel, config: &SamplerConfig) -> Result<PosteriorDraws, SamplerError> {
    let chains = sample_chains(model, config)?;
    let mut out = PosteriorDraws {
        layout: model.layout().clone(),
        coordinates: model.layout().coordinate_names(),
        draws: Vec::with_capacity(chains.len()),
        energy: Vec::with_capacity(chains.len()),
        divergent: Vec::with_capacity(chains.len()),
        pointwise_loglik: Vec::with_capacity(chains.len()),
        stats: Vec::with_capacity(chains.len()),
    };
    let converted: Vec<(Matrix, Matrix)> = chains
        .par_iter()
        .map(|c| {
            let cons = c.draws.iter().map(|q| model.constrain(q)).collect();
            let ll = c.draws.iter().map(|q| model.pointwise_loglik(q)).collect();
            (cons, ll)
        })
        .collect();
    for (c, (cons, ll)) in chains.into_iter().zip(converted) {
        out.draws.push(cons);
        out.pointwise_loglik.push(ll);
        out.energy.push(c.energy);
        out.divergent.push(c.divergent);
        out.stats.push(c.stats);
    }
    Ok(out)
}
