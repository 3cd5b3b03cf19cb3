//! The random walk in the evolving environment.
//!
//! The walker jumps from its position x to each neighbor at rate
//! V''(eta_x(t)), read off the concurrently evolving environment. Jumps are
//! simulated by thinning a dominating clock of rate R = d * c_plus: each
//! event picks one of d neighbor slots uniformly (self-loop padding below
//! degree d) and accepts a real neighbor with probability V''(eta_x)/c_plus.
//! Rates are frozen within each integrator step, matching the O(dt) weak
//! error of the environment scheme.

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::dynamics::{check_finite, sample_environment, Environment, IntegratorConfig, Stepper};
use crate::error::{Error, Result};
use crate::potential::GibbsSpec;
use crate::rng::{RngPlan, Substream};

/// Position of the walker at a point in time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkerState {
    pub position: usize,
    pub time: f64,
}

impl WalkerState {
    pub fn new(position: usize) -> WalkerState {
        WalkerState {
            position,
            time: 0.0,
        }
    }
}

/// Evolve the walker over one frozen-environment step of length `dt`.
///
/// When the proposal mean R dt is at most 0.1 a single Bernoulli(R dt)
/// proposal stands in for the Poisson count; the difference is beyond the
/// O(dt) error already made by freezing the rates.
pub fn step_walker<R: Rng + ?Sized>(
    w: &mut WalkerState,
    env: &Environment,
    spec: &GibbsSpec,
    dt: f64,
    rng: &mut R,
) -> Result<()> {
    let g = spec.graph();
    let d = g.degree_bound();
    let c_plus = spec.site().c_plus();
    let proposal_mean = d as f64 * c_plus * dt;
    let events = if proposal_mean == 0.0 {
        0
    } else if proposal_mean <= 0.1 {
        u64::from(rng.random::<f64>() < proposal_mean)
    } else {
        let poisson = Poisson::new(proposal_mean)
            .map_err(|e| Error::Internal(format!("poisson({proposal_mean}): {e}")))?;
        poisson.sample(rng) as u64
    };
    for _ in 0..events {
        let slot = rng.random_range(0..d);
        let nbrs = g.neighbors(w.position);
        if slot >= nbrs.len() {
            continue; // self-loop padding for degree < d
        }
        let curv = spec.site().curv(env.masses[w.position]);
        if curv > c_plus * (1.0 + 1e-12) {
            // the declared bound is wrong for this potential; thinning is invalid
            return Err(Error::Internal(format!(
                "dominating rate violated: V''({}) = {curv} > c_plus = {c_plus}",
                env.masses[w.position]
            )));
        }
        if rng.random::<f64>() < curv / c_plus {
            w.position = nbrs[slot];
        }
    }
    w.time += dt;
    Ok(())
}

/// One replica's record of (environment, walker position) at the requested
/// observation times.
#[derive(Debug, Clone)]
pub struct JointTrajectory {
    pub observation_times: Vec<f64>,
    pub env_snapshots: Vec<Environment>,
    pub walker_positions: Vec<usize>,
    pub start_vertex: usize,
    pub seed: u64,
}

impl JointTrajectory {
    /// 1 iff the walker sits at `y` at observation time `t`.
    pub fn hitting_indicator(&self, t: f64, y: usize) -> Result<u8> {
        let idx = self
            .observation_times
            .iter()
            .position(|&tau| (tau - t).abs() <= 1e-12)
            .ok_or_else(|| Error::Query(format!("{t} is not an observation time")))?;
        Ok(u8::from(self.walker_positions[idx] == y))
    }
}

/// Free-function form of [`JointTrajectory::hitting_indicator`].
pub fn hitting_indicator(traj: &JointTrajectory, t: f64, y: usize) -> Result<u8> {
    traj.hitting_indicator(t, y)
}

/// Interleave environment and walker on the same time grid. The walker reads
/// the pre-step environment each step; walker and environment consume
/// disjoint substreams so one cannot perturb the other.
pub fn run_joint(
    spec: &GibbsSpec,
    cfg: &IntegratorConfig,
    init: Environment,
    start: usize,
) -> Result<JointTrajectory> {
    cfg.validate(spec)?;
    let plan = RngPlan::new(cfg.seed);
    let mut env_rng = plan.stream(0, Substream::EnvNoise);
    let mut walker_rng = plan.stream(0, Substream::Walker);
    run_joint_with(spec, cfg, init, start, &mut env_rng, &mut walker_rng)
}

pub fn run_joint_with<R1, R2>(
    spec: &GibbsSpec,
    cfg: &IntegratorConfig,
    mut env: Environment,
    start: usize,
    env_rng: &mut R1,
    walker_rng: &mut R2,
) -> Result<JointTrajectory>
where
    R1: Rng + ?Sized,
    R2: Rng + ?Sized,
{
    let g = spec.graph();
    if spec.pair().is_some() {
        // the walker rates are defined from the site curvature only
        return Err(Error::InvalidInput(
            "the joint walker dynamics requires a site-only potential".into(),
        ));
    }
    if env.masses.len() != g.n_vertices() {
        return Err(Error::InvalidInput(
            "initial environment length does not match the graph".into(),
        ));
    }
    if start >= g.n_vertices() {
        return Err(Error::InvalidInput(format!(
            "start vertex {start} out of range"
        )));
    }
    let obs_steps = cfg.observation_steps();
    let n_steps = cfg.n_steps();
    let mut stepper = Stepper::new(spec);
    let mut noise = vec![0.0; g.n_edges()];
    let mut walker = WalkerState::new(start);
    let mut env_snapshots = Vec::with_capacity(obs_steps.len());
    let mut walker_positions = Vec::with_capacity(obs_steps.len());
    let mut next_obs = 0;
    for k in 0..=n_steps {
        if next_obs < obs_steps.len() && obs_steps[next_obs] == k {
            check_finite(&env)?;
            env_snapshots.push(env.clone());
            walker_positions.push(walker.position);
            next_obs += 1;
        }
        if k < n_steps {
            step_walker(&mut walker, &env, spec, cfg.dt, walker_rng)?;
            stepper.step_with_rng(&mut env, cfg.dt, &mut noise, env_rng);
        }
    }
    Ok(JointTrajectory {
        observation_times: cfg.observation_times.clone(),
        env_snapshots,
        walker_positions,
        start_vertex: start,
        seed: cfg.seed,
    })
}

/// Sample a stationary initial condition and run the joint dynamics; replica
/// `index` of the plan derived from `cfg.seed`.
pub fn run_joint_replica(
    spec: &GibbsSpec,
    cfg: &IntegratorConfig,
    start: usize,
    replica: u64,
) -> Result<JointTrajectory> {
    let plan = RngPlan::new(cfg.seed);
    let mut init_rng = plan.stream(replica, Substream::Init);
    let init = sample_environment(spec, &mut init_rng)?;
    let mut env_rng = plan.stream(replica, Substream::EnvNoise);
    let mut walker_rng = plan.stream(replica, Substream::Walker);
    run_joint_with(spec, cfg, init, start, &mut env_rng, &mut walker_rng)
}
