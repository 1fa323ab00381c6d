//! Monte Carlo experiment harness.
//!
//! Trials are independent: each derives its own random stream from the
//! master seed and its trial index, so results do not depend on the
//! execution schedule, and every estimator configuration sees the identical
//! truth-and-noise realization of its trial (paired comparisons stay valid).
//! Aggregation is a deterministic reduction in trial order; a frozen seed
//! replays byte-identically.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimator::{
    dmre_step, estimator_step, local_gains, DmreState, EstimatorState, GainSet,
};
use crate::linalg::block_diag;
use crate::model::{build_topology, decoupling_variables, DecouplingPolicy, LisModel};

mod kalman;
mod noise;

pub use kalman::{kalman_step, KalmanState};
pub use noise::{NoiseKind, NoiseSampler, NoiseSpec};

/// Which estimator a trial runs.
#[derive(Debug, Clone)]
pub enum EstimatorKind {
    /// Online DMRE with gains recomputed every step.
    Distributed { policy: DecouplingPolicy },
    /// Constant precomputed block gains; no online covariance exchange.
    Steady { gains: GainSet },
    /// Global Kalman filter on the assembled model.
    Centralized,
}

/// Initial estimate convention of a trial.
#[derive(Debug, Clone, Default)]
pub enum InitialEstimate {
    /// `x̂(0) = 0` while `x(0)` is drawn unit-norm per subsystem: a
    /// deterministic nonzero initial error.
    #[default]
    Zero,
    /// Perfect start `x̂(0) = x(0)`.
    EqualToState,
    Given(Vec<DVector<f64>>),
}

#[derive(Debug, Clone)]
pub struct SimOptions {
    /// A trial is flagged diverged when its summed squared error exceeds
    /// this or turns non-finite; diverged trials are excluded and counted.
    pub divergence_threshold: f64,
    /// Initial posterior covariance blocks of the distributed/centralized
    /// filters (identity per block when absent).
    pub initial_posterior: Option<Vec<DMatrix<f64>>>,
    pub initial_estimate: InitialEstimate,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            divergence_threshold: 1e18,
            initial_posterior: None,
            initial_estimate: InitialEstimate::Zero,
        }
    }
}

/// Trajectories and error series of one simulated trial.
#[derive(Debug, Clone)]
pub struct TrialOutput {
    /// Per-step per-subsystem true states (empty when trajectories are not
    /// retained).
    pub states: Vec<Vec<DVector<f64>>>,
    pub estimates: Vec<Vec<DVector<f64>>>,
    /// `Σᵢ ‖xᵢ(k) − x̂ᵢ(k)‖²` per step.
    pub squared_errors: Vec<f64>,
    pub diverged: bool,
}

fn trial_rng(master_seed: u64, trial: u64) -> ChaCha12Rng {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&master_seed.to_le_bytes());
    seed[8..16].copy_from_slice(&trial.to_le_bytes());
    seed[16] = 0x5a;
    ChaCha12Rng::from_seed(seed)
}

enum Runner {
    Distributed { policy: DecouplingPolicy, dmre: DmreState, est: EstimatorState },
    Steady { gains: GainSet, est: EstimatorState },
    Centralized { kf: KalmanState },
}

impl Runner {
    fn new(
        model: &LisModel,
        kind: &EstimatorKind,
        x_hat0: Vec<DVector<f64>>,
        p0: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let pattern = model.pattern();
        Ok(match kind {
            EstimatorKind::Distributed { policy } => Runner::Distributed {
                policy: *policy,
                dmre: DmreState::new(pattern, p0)?,
                est: EstimatorState::new(pattern, x_hat0)?,
            },
            EstimatorKind::Steady { gains } => {
                Runner::Steady { gains: gains.clone(), est: EstimatorState::new(pattern, x_hat0)? }
            }
            EstimatorKind::Centralized => {
                let x0 = DVector::from_vec(x_hat0.iter().flat_map(|x| x.iter().copied()).collect());
                Runner::Centralized { kf: KalmanState::new(model, x0, block_diag(&p0))? }
            }
        })
    }

    /// Advance from time `k` to `k + 1` with measurements `z(k+1)`.
    fn step(&mut self, model: &LisModel, z: &[DVector<f64>]) -> Result<()> {
        match self {
            Runner::Distributed { policy, dmre, est } => {
                let theta = decoupling_variables(model, *policy, dmre.time_index())?;
                *dmre = dmre_step(dmre, model, &theta)?;
                let gains = local_gains(dmre, model)?;
                *est = estimator_step(est, z, model, &gains)?;
            }
            Runner::Steady { gains, est } => {
                *est = estimator_step(est, z, model, gains)?;
            }
            Runner::Centralized { kf } => {
                let z_global = DVector::from_vec(z.iter().flat_map(|b| b.iter().copied()).collect());
                *kf = kalman_step(kf, &z_global, model)?;
            }
        }
        Ok(())
    }

    fn estimates(&self, model: &LisModel) -> Vec<DVector<f64>> {
        match self {
            Runner::Distributed { est, .. } | Runner::Steady { est, .. } => {
                est.estimates().to_vec()
            }
            Runner::Centralized { kf } => {
                let pattern = model.pattern();
                (0..pattern.s())
                    .map(|i| {
                        kf.x.rows(pattern.state_offset(i), pattern.state_dim(i)).into_owned()
                    })
                    .collect()
            }
        }
    }
}

fn squared_error(states: &[DVector<f64>], estimates: &[DVector<f64>]) -> f64 {
    states.iter().zip(estimates).map(|(x, xh)| (x - xh).norm_squared()).sum()
}

fn run_trial(
    model: &LisModel,
    kind: &EstimatorKind,
    noise: &NoiseSpec,
    horizon: usize,
    master_seed: u64,
    trial: u64,
    opts: &SimOptions,
    keep_trajectories: bool,
) -> Result<TrialOutput> {
    let pattern = model.pattern();
    let s = pattern.s();
    let sampler = NoiseSampler::new(noise, pattern)?;
    let mut rng = trial_rng(master_seed, trial);

    // Truth initialization: unit-norm state per subsystem.
    let mut x: Vec<DVector<f64>> = (0..s)
        .map(|i| {
            let v = DVector::<f64>::from_fn(pattern.state_dim(i), |_, _| {
                rng.sample::<f64, _>(rand_distr::StandardNormal)
            });
            let norm = v.norm();
            if norm > 1e-12 {
                v / norm
            } else {
                DVector::from_element(pattern.state_dim(i), 1.0 / (pattern.state_dim(i) as f64).sqrt())
            }
        })
        .collect();

    let x_hat0 = match &opts.initial_estimate {
        InitialEstimate::Zero => {
            (0..s).map(|i| DVector::zeros(pattern.state_dim(i))).collect()
        }
        InitialEstimate::EqualToState => x.clone(),
        InitialEstimate::Given(blocks) => blocks.clone(),
    };
    let p0 = match &opts.initial_posterior {
        Some(blocks) => blocks.clone(),
        None => (0..s)
            .map(|i| DMatrix::identity(pattern.state_dim(i), pattern.state_dim(i)))
            .collect(),
    };
    let mut runner = Runner::new(model, kind, x_hat0, p0)?;

    let mut out = TrialOutput {
        states: Vec::new(),
        estimates: Vec::new(),
        squared_errors: Vec::with_capacity(horizon + 1),
        diverged: false,
    };
    let estimates = runner.estimates(model);
    out.squared_errors.push(squared_error(&x, &estimates));
    if keep_trajectories {
        out.states.push(x.clone());
        out.estimates.push(estimates);
    }

    for k in 0..horizon {
        // Truth propagation along the sparsity pattern.
        let topo = build_topology(model, k)?;
        let w = sampler.sample_process(&mut rng);
        let mut x_next: Vec<DVector<f64>> = Vec::with_capacity(s);
        for i in 0..s {
            let mut acc = w[i].clone();
            for &j in topo.in_neighbors(i).iter().chain(std::iter::once(&i)) {
                if let Some(a_ij) = model.a_block(k, i, j) {
                    acc += a_ij * &x[j];
                }
            }
            x_next.push(acc);
        }
        x = x_next;

        let v = sampler.sample_measurement(&mut rng);
        let z: Vec<DVector<f64>> = (0..s)
            .map(|i| model.c_block(k + 1, i) * &x[i] + &v[i])
            .collect();

        runner.step(model, &z)?;
        let estimates = runner.estimates(model);
        let sq = squared_error(&x, &estimates);
        if !sq.is_finite() || sq > opts.divergence_threshold {
            out.diverged = true;
            out.squared_errors.push(sq);
            break;
        }
        out.squared_errors.push(sq);
        if keep_trajectories {
            out.states.push(x.clone());
            out.estimates.push(estimates);
        }
    }
    Ok(out)
}

/// Simulate one trial, retaining full trajectories.
///
/// Deterministic given `(master_seed, trial)`: the truth-and-noise
/// realization depends only on the seed pair, never on the estimator kind.
pub fn simulate_trial(
    model: &LisModel,
    kind: &EstimatorKind,
    noise: &NoiseSpec,
    horizon: usize,
    master_seed: u64,
    trial: u64,
    opts: &SimOptions,
) -> Result<TrialOutput> {
    run_trial(model, kind, noise, horizon, master_seed, trial, opts, true)
}

/// Ensemble statistics of one estimator configuration.
#[derive(Debug, Clone)]
pub struct TrialEnsemble {
    pub label: String,
    pub trials_requested: usize,
    pub trials_used: usize,
    pub diverged: usize,
    pub horizon: usize,
    /// `RMSE(k) = √(Σ_trials Σᵢ ‖xᵢ(k)−x̂ᵢ(k)‖² / (s·M))` over the
    /// non-diverged trials.
    pub rmse: Vec<f64>,
    /// Per-trial mean squared error over the horizon (`None` = diverged),
    /// aligned by trial index across configurations for paired tests.
    pub per_trial_mean_sq: Vec<Option<f64>>,
}

/// Run the Monte Carlo RMSE experiment for several estimator configurations
/// on identical noise realizations.
pub fn monte_carlo_rmse(
    model: &LisModel,
    configs: &[(String, EstimatorKind)],
    noise: &NoiseSpec,
    trials: usize,
    horizon: usize,
    master_seed: u64,
    opts: &SimOptions,
) -> Result<Vec<TrialEnsemble>> {
    if trials == 0 {
        return Err(Error::InvalidModel("at least one trial is required".into()));
    }
    if configs.is_empty() {
        return Err(Error::InvalidModel("at least one estimator configuration is required".into()));
    }
    let s = model.s() as f64;

    // Each parallel task runs every configuration on its trial's shared
    // realization; results are reduced in trial order.
    let per_trial: Vec<Vec<Option<Vec<f64>>>> = (0..trials as u64)
        .into_par_iter()
        .map(|trial| {
            configs
                .iter()
                .map(|(_, kind)| {
                    let out =
                        run_trial(model, kind, noise, horizon, master_seed, trial, opts, false)?;
                    Ok(if out.diverged { None } else { Some(out.squared_errors) })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut ensembles = Vec::with_capacity(configs.len());
    for (c, (label, _)) in configs.iter().enumerate() {
        let mut sums = vec![0.0_f64; horizon + 1];
        let mut used = 0usize;
        let mut per_trial_mean_sq = Vec::with_capacity(trials);
        for row in &per_trial {
            match &row[c] {
                Some(sq) => {
                    used += 1;
                    for (k, v) in sq.iter().enumerate() {
                        sums[k] += v;
                    }
                    per_trial_mean_sq
                        .push(Some(sq.iter().sum::<f64>() / (sq.len() as f64 * s)));
                }
                None => per_trial_mean_sq.push(None),
            }
        }
        if used == 0 {
            return Err(Error::AllTrialsDiverged(trials));
        }
        let rmse = sums.iter().map(|&v| (v / (s * used as f64)).sqrt()).collect();
        ensembles.push(TrialEnsemble {
            label: label.clone(),
            trials_requested: trials,
            trials_used: used,
            diverged: trials - used,
            horizon,
            rmse,
            per_trial_mean_sq,
        });
    }
    Ok(ensembles)
}

/// Convenience wrapper: the centralized filter alone.
pub fn centralized_baseline(
    model: &LisModel,
    noise: &NoiseSpec,
    trials: usize,
    horizon: usize,
    master_seed: u64,
    opts: &SimOptions,
) -> Result<TrialEnsemble> {
    Ok(monte_carlo_rmse(
        model,
        &[("centralized".to_string(), EstimatorKind::Centralized)],
        noise,
        trials,
        horizon,
        master_seed,
        opts,
    )?
    .remove(0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayVerdict {
    /// Log-linear fit ratio below one: the error dies out geometrically.
    Exponential,
    /// Bounded but not decaying.
    Marginal,
    Diverging,
}

/// Noise-free error decay of one estimator configuration.
#[derive(Debug, Clone)]
pub struct DecayReport {
    pub rmse: Vec<f64>,
    /// Geometric ratio fitted on the tail half of the horizon (absent when
    /// the error underflows to zero there).
    pub fitted_ratio: Option<f64>,
    pub verdict: DecayVerdict,
}

/// Run a noise-free trial from a nonzero initial error and fit the decay.
pub fn noise_free_decay(
    model: &LisModel,
    kind: &EstimatorKind,
    horizon: usize,
    master_seed: u64,
) -> Result<DecayReport> {
    let noise = NoiseSpec::none(model.pattern());
    let opts = SimOptions::default();
    let out = run_trial(model, kind, &noise, horizon, master_seed, 0, &opts, false)?;
    let s = model.s() as f64;
    let rmse: Vec<f64> = out.squared_errors.iter().map(|&v| (v / s).sqrt()).collect();

    let initial = rmse[0].max(1e-300);
    if out.diverged || rmse.iter().any(|v| !v.is_finite()) {
        return Ok(DecayReport { rmse, fitted_ratio: None, verdict: DecayVerdict::Diverging });
    }
    let tail = &rmse[rmse.len() / 2..];
    if tail.iter().fold(0.0_f64, |a, &b| a.max(b)) > 100.0 * initial {
        return Ok(DecayReport { rmse, fitted_ratio: None, verdict: DecayVerdict::Diverging });
    }

    // Log-linear least squares on the positive part of the tail.
    let points: Vec<(f64, f64)> = tail
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 1e-280)
        .map(|(k, &v)| (k as f64, v.ln()))
        .collect();
    if points.len() < 3 {
        // The tail has underflowed to zero: fully decayed.
        return Ok(DecayReport { rmse, fitted_ratio: None, verdict: DecayVerdict::Exponential });
    }
    let n = points.len() as f64;
    let mean_k = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let cov: f64 = points.iter().map(|p| (p.0 - mean_k) * (p.1 - mean_y)).sum();
    let var: f64 = points.iter().map(|p| (p.0 - mean_k).powi(2)).sum();
    let ratio = if var > 0.0 { (cov / var).exp() } else { 1.0 };

    let last = *rmse.last().unwrap();
    let verdict = if ratio < 1.0 - 1e-6 && last < initial {
        DecayVerdict::Exponential
    } else {
        DecayVerdict::Marginal
    };
    Ok(DecayReport { rmse, fitted_ratio: Some(ratio), verdict })
}

#[cfg(test)]
mod tests;
