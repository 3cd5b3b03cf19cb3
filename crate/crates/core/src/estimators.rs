//! Monte Carlo estimation of the covariance quantities and the statistical
//! verdicts: the two-sided covariance sandwich, the walker equality, FKG
//! positivity, the corollary bound, negative correlation under pair
//! potentials, and decay-rate fits.
//!
//! All replicas of an ensemble derive their random streams from
//! `(seed, replica_index)`, are generated in parallel, and are reduced
//! sequentially in replica order, so every estimate is bit-reproducible and
//! independent of the worker count. Verdicts that compare two estimands use
//! the same replica set for both sides (common random numbers).

use rayon::prelude::*;

use crate::dynamics::{run_trajectory_with, sample_environment, IntegratorConfig};
use crate::error::{Error, Result};
use crate::oracle::{gaussian_pair_covariance, spectral_report};
use crate::potential::{GibbsSpec, Potential};
use crate::rng::{RngPlan, Substream};
use crate::stats::{binomial_estimate, covariance_estimate, mean_estimate, Estimate};
use crate::walker::run_joint_with;

/// Statistical outcome of one named claim.
#[derive(Debug, Clone)]
pub struct Verdict {
    pub claim_tag: String,
    pub pass: bool,
    /// Distance from the violation boundary in combined-standard-error units
    /// (nonnegative iff the claim passes).
    pub margin_in_sigmas: f64,
    pub inputs: Vec<Estimate>,
    pub oracle: Option<f64>,
}

/// Which observable of the time-zero environment enters the covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observable {
    /// eta_x(0)
    Mass,
    /// V'(eta_x(0))
    VPrime,
}

impl Observable {
    pub fn tag(&self) -> &'static str {
        match self {
            Observable::Mass => "cov_mass",
            Observable::VPrime => "cov_vprime",
        }
    }

    fn apply(&self, site: &Potential, v: f64) -> f64 {
        match self {
            Observable::Mass => v,
            Observable::VPrime => site.grad(v),
        }
    }
}

/// A finitely supported Lipschitz test function sum-over-sites.
#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzSpec {
    coeffs: Vec<(usize, f64)>,
    tag: FunctionTag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FunctionTag {
    /// f(eta) = sum_x a_x eta_x, with L_f(x) = |a_x|.
    Linear,
    /// f(eta) = sum_x a_x tanh(eta_x); same per-site Lipschitz bounds.
    Saturating,
}

impl LipschitzSpec {
    fn build(mut coeffs: Vec<(usize, f64)>, tag: FunctionTag) -> Result<LipschitzSpec> {
        coeffs.retain(|&(_, a)| a != 0.0);
        coeffs.sort_by_key(|&(x, _)| x);
        if coeffs.is_empty() {
            return Err(Error::InvalidInput(
                "test function has empty support".into(),
            ));
        }
        if coeffs.iter().any(|&(_, a)| !a.is_finite()) {
            return Err(Error::InvalidInput("non-finite coefficient".into()));
        }
        if coeffs.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidInput("duplicate vertex in support".into()));
        }
        Ok(LipschitzSpec { coeffs, tag })
    }

    pub fn linear(coeffs: Vec<(usize, f64)>) -> Result<LipschitzSpec> {
        Self::build(coeffs, FunctionTag::Linear)
    }

    pub fn saturating(coeffs: Vec<(usize, f64)>) -> Result<LipschitzSpec> {
        Self::build(coeffs, FunctionTag::Saturating)
    }

    pub fn is_increasing(&self) -> bool {
        self.coeffs.iter().all(|&(_, a)| a >= 0.0)
    }

    /// ||f|| = sum_x |L_f(x)|.
    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|&(_, a)| a.abs()).sum()
    }

    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.coeffs.iter().map(|&(x, _)| x)
    }

    pub fn max_vertex(&self) -> usize {
        self.coeffs.last().map(|&(x, _)| x).unwrap_or(0)
    }

    pub fn evaluate(&self, masses: &[f64]) -> f64 {
        match self.tag {
            FunctionTag::Linear => self
                .coeffs
                .iter()
                .map(|&(x, a)| a * masses[x])
                .sum(),
            FunctionTag::Saturating => self
                .coeffs
                .iter()
                .map(|&(x, a)| a * masses[x].tanh())
                .sum(),
        }
    }
}

/// A replica ensemble: initial environments, snapshots at the observation
/// times, and (for joint runs) the walker positions. Flat storage, filled in
/// parallel, reduced in replica order.
#[derive(Debug, Clone)]
pub struct ReplicaSet {
    observation_times: Vec<f64>,
    n_vertices: usize,
    n_replicas: usize,
    start: Option<usize>,
    seed: u64,
    eta0: Vec<f64>,
    snapshots: Vec<f64>,
    walker: Vec<u32>,
}

impl ReplicaSet {
    pub fn n_replicas(&self) -> usize {
        self.n_replicas
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn start(&self) -> Option<usize> {
        self.start
    }

    pub fn observation_times(&self) -> &[f64] {
        &self.observation_times
    }

    fn obs_index(&self, t: f64) -> Result<usize> {
        self.observation_times
            .iter()
            .position(|&tau| (tau - t).abs() <= 1e-12)
            .ok_or_else(|| Error::Query(format!("{t} is not an observation time of this set")))
    }

    pub fn eta0_of(&self, i: usize) -> &[f64] {
        &self.eta0[i * self.n_vertices..(i + 1) * self.n_vertices]
    }

    pub fn snapshot(&self, i: usize, obs: usize) -> &[f64] {
        let n_obs = self.observation_times.len();
        let base = (i * n_obs + obs) * self.n_vertices;
        &self.snapshots[base..base + self.n_vertices]
    }

    pub fn walker_at(&self, i: usize, obs: usize) -> Option<usize> {
        self.start?;
        Some(self.walker[i * self.observation_times.len() + obs] as usize)
    }

    /// Empirical Cov(observable(eta_x(0)); eta_y(t)).
    pub fn cov_estimate(
        &self,
        observable: Observable,
        site: &Potential,
        x: usize,
        y: usize,
        t: f64,
    ) -> Result<Estimate> {
        let k = self.obs_index(t)?;
        let pairs: Vec<(f64, f64)> = (0..self.n_replicas)
            .map(|i| {
                (
                    observable.apply(site, self.eta0_of(i)[x]),
                    self.snapshot(i, k)[y],
                )
            })
            .collect();
        Ok(covariance_estimate(&pairs, observable.tag(), t)?.at(x, y))
    }

    /// Empirical Cov(f(eta(0)); g(eta(t))) for test functionals.
    pub fn functional_cov(
        &self,
        f: &LipschitzSpec,
        g: &LipschitzSpec,
        t: f64,
        tag: &str,
    ) -> Result<Estimate> {
        let k = self.obs_index(t)?;
        if f.max_vertex() >= self.n_vertices || g.max_vertex() >= self.n_vertices {
            return Err(Error::InvalidInput("functional support out of range".into()));
        }
        let pairs: Vec<(f64, f64)> = (0..self.n_replicas)
            .map(|i| (f.evaluate(self.eta0_of(i)), g.evaluate(self.snapshot(i, k))))
            .collect();
        covariance_estimate(&pairs, tag, t)
    }

    /// Empirical mean of the walker hitting indicator at (y, t).
    pub fn walker_prob(&self, y: usize, t: f64) -> Result<Estimate> {
        let start = self.start.ok_or_else(|| {
            Error::Query("this replica set was sampled without a walker".into())
        })?;
        let k = self.obs_index(t)?;
        let hits = (0..self.n_replicas)
            .filter(|&i| self.walker[i * self.observation_times.len() + k] as usize == y)
            .count();
        Ok(binomial_estimate(hits, self.n_replicas, "walker_prob", t)?.at(start, y))
    }

    /// Mean of eta_x(t) * eta_y(t) (raw moment, means not subtracted).
    pub fn neighbor_moment(&self, x: usize, y: usize, t: f64) -> Result<Estimate> {
        let k = self.obs_index(t)?;
        let vals: Vec<f64> = (0..self.n_replicas)
            .map(|i| {
                let s = self.snapshot(i, k);
                s[x] * s[y]
            })
            .collect();
        Ok(mean_estimate(&vals, "neighbor_moment", t)?.at(x, y))
    }
}

/// Run `n_replicas` trajectories (with a walker when `start` is given), each
/// initialized from the product measure, all streams derived from
/// `cfg.seed`.
pub fn sample_replicas(
    spec: &GibbsSpec,
    cfg: &IntegratorConfig,
    n_replicas: usize,
    start: Option<usize>,
) -> Result<ReplicaSet> {
    cfg.validate(spec)?;
    if n_replicas < 100 {
        return Err(Error::InsufficientReplicas(n_replicas));
    }
    if cfg.observation_times.is_empty() {
        return Err(Error::InvalidParameter(
            "need at least one observation time".into(),
        ));
    }
    let nv = spec.graph().n_vertices();
    let n_obs = cfg.observation_times.len();
    if let Some(s) = start {
        if s >= nv {
            return Err(Error::InvalidInput(format!("start vertex {s} out of range")));
        }
    }

    let mut eta0 = vec![0.0f64; n_replicas * nv];
    let mut snapshots = vec![0.0f64; n_replicas * n_obs * nv];
    let mut walker = vec![0u32; if start.is_some() { n_replicas * n_obs } else { 0 }];

    let plan = RngPlan::new(cfg.seed);
    let run_one = |i: usize,
                   e0: &mut [f64],
                   sn: &mut [f64],
                   wk: Option<&mut [u32]>|
     -> Result<()> {
        let mut init_rng = plan.stream(i as u64, Substream::Init);
        let env = sample_environment(spec, &mut init_rng)?;
        e0.copy_from_slice(&env.masses);
        let mut env_rng = plan.stream(i as u64, Substream::EnvNoise);
        match (start, wk) {
            (Some(sv), Some(wk)) => {
                let mut walker_rng = plan.stream(i as u64, Substream::Walker);
                let traj =
                    run_joint_with(spec, cfg, env, sv, &mut env_rng, &mut walker_rng)?;
                for (k, s) in traj.env_snapshots.iter().enumerate() {
                    sn[k * nv..(k + 1) * nv].copy_from_slice(&s.masses);
                }
                for (k, &p) in traj.walker_positions.iter().enumerate() {
                    wk[k] = p as u32;
                }
            }
            (None, None) => {
                let snaps = run_trajectory_with(spec, cfg, env, &mut env_rng)?;
                for (k, s) in snaps.iter().enumerate() {
                    sn[k * nv..(k + 1) * nv].copy_from_slice(&s.masses);
                }
            }
            _ => unreachable!(),
        }
        Ok(())
    };

    if start.is_some() {
        eta0.par_chunks_mut(nv)
            .zip(snapshots.par_chunks_mut(n_obs * nv))
            .zip(walker.par_chunks_mut(n_obs))
            .enumerate()
            .try_for_each(|(i, ((e0, sn), wk))| run_one(i, e0, sn, Some(wk)))?;
    } else {
        eta0.par_chunks_mut(nv)
            .zip(snapshots.par_chunks_mut(n_obs * nv))
            .enumerate()
            .try_for_each(|(i, (e0, sn))| run_one(i, e0, sn, None))?;
    }

    Ok(ReplicaSet {
        observation_times: cfg.observation_times.clone(),
        n_vertices: nv,
        n_replicas,
        start,
        seed: cfg.seed,
        eta0,
        snapshots,
        walker,
    })
}

fn single_time_cfg(cfg: &IntegratorConfig, t: f64) -> IntegratorConfig {
    IntegratorConfig {
        dt: cfg.dt,
        t_end: t,
        observation_times: vec![t],
        seed: cfg.seed,
    }
}

/// Cov(observable(eta_x(0)); eta_y(t)) over a fresh stationary ensemble.
pub fn estimate_cov(
    spec: &GibbsSpec,
    cfg: &IntegratorConfig,
    x: usize,
    y: usize,
    t: f64,
    n_replicas: usize,
    observable: Observable,
) -> Result<Estimate> {
    let set = sample_replicas(spec, &single_time_cfg(cfg, t), n_replicas, None)?;
    set.cov_estimate(observable, spec.site(), x, y, t)
}

/// E[P_x^eta(X(t) = y)] over a fresh stationary ensemble started at x.
pub fn estimate_walker_prob(
    spec: &GibbsSpec,
    cfg: &IntegratorConfig,
    x: usize,
    y: usize,
    t: f64,
    n_replicas: usize,
) -> Result<Estimate> {
    let set = sample_replicas(spec, &single_time_cfg(cfg, t), n_replicas, Some(x))?;
    set.walker_prob(y, t)
}

fn require_positive_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 {
        Ok(())
    } else {
        Err(Error::InsufficientSignal(
            "degenerate standard error; cannot form a verdict".into(),
        ))
    }
}

/// Two-sided sandwich from a shared replica set:
/// (1/c_plus) W - 3 sigma <= Cov(eta_x; P_t eta_y) <= (1/c_minus) W + 3 sigma.
pub fn sandwich_from_set(
    set: &ReplicaSet,
    spec: &GibbsSpec,
    x: usize,
    y: usize,
    t: f64,
) -> Result<Verdict> {
    if set.start() != Some(x) {
        return Err(Error::InvalidInput(format!(
            "replica set walker must start at x = {x}"
        )));
    }
    let cov = set.cov_estimate(Observable::Mass, spec.site(), x, y, t)?;
    let w = set.walker_prob(y, t)?;
    let (c_minus, c_plus) = (spec.site().c_minus(), spec.site().c_plus());
    let sigma_up = (cov.stderr.powi(2) + (w.stderr / c_minus).powi(2)).sqrt();
    let sigma_lo = (cov.stderr.powi(2) + (w.stderr / c_plus).powi(2)).sqrt();
    require_positive_sigma(sigma_up.min(sigma_lo))?;
    let margin_up = (w.value / c_minus - cov.value) / sigma_up + 3.0;
    let margin_lo = (cov.value - w.value / c_plus) / sigma_lo + 3.0;
    let margin = margin_up.min(margin_lo);
    Ok(Verdict {
        claim_tag: "covariance_sandwich".into(),
        pass: margin >= 0.0,
        margin_in_sigmas: margin,
        inputs: vec![cov, w],
        oracle: None,
    })
}

pub fn theorem_sandwich(
    spec: &GibbsSpec,
    cfg: &IntegratorConfig,
    x: usize,
    y: usize,
    t: f64,
    n_replicas: usize,
) -> Result<Verdict> {
    let set = sample_replicas(spec, &single_time_cfg(cfg, t), n_replicas, Some(x))?;
    sandwich_from_set(&set, spec, x, y, t)
}

/// |Cov(V'(eta_x); P_t eta_y) - E[P_x^eta(X(t) = y)]| <= 3 sigma, with both
/// sides estimated on the same replicas.
pub fn equality_from_set(
    set: &ReplicaSet,
    spec: &GibbsSpec,
    x: usize,
    y: usize,
    t: f64,
) -> Result<Verdict> {
    if set.start() != Some(x) {
        return Err(Error::InvalidInput(format!(
            "replica set walker must start at x = {x}"
        )));
    }
    let cov = set.cov_estimate(Observable::VPrime, spec.site(), x, y, t)?;
    let w = set.walker_prob(y, t)?;
    let sigma = (cov.stderr.powi(2) + w.stderr.powi(2)).sqrt();
    require_positive_sigma(sigma)?;
    let margin = 3.0 - (cov.value - w.value).abs() / sigma;
    Ok(Verdict {
        claim_tag: "walker_equality".into(),
        pass: margin >= 0.0,
        margin_in_sigmas: margin,
        inputs: vec![cov, w],
        oracle: None,
    })
}

pub fn lemma_equality_check(
    spec: &GibbsSpec,
    cfg: &IntegratorConfig,
    x: usize,
    y: usize,
    t: f64,
    n_replicas: usize,
) -> Result<Verdict> {
    let set = sample_replicas(spec, &single_time_cfg(cfg, t), n_replicas, Some(x))?;
    equality_from_set(&set, spec, x, y, t)
}

/// Cov(f; P_t g) >= -3 sigma for increasing f, g.
pub fn fkg_from_set(
    set: &ReplicaSet,
    f: &LipschitzSpec,
    g: &LipschitzSpec,
    t: f64,
    tag: &str,
) -> Result<Verdict> {
    if !f.is_increasing() || !g.is_increasing() {
        return Err(Error::InvalidInput(
            "FKG check requires increasing test functions".into(),
        ));
    }
    let cov = set.functional_cov(f, g, t, tag)?;
    let margin = if cov.stderr > 0.0 {
        cov.value / cov.stderr + 3.0
    } else if cov.value >= 0.0 {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    };
    Ok(Verdict {
        claim_tag: "fkg_positive".into(),
        pass: margin >= 0.0,
        margin_in_sigmas: margin,
        inputs: vec![cov],
        oracle: None,
    })
}

pub fn fkg_check(
    spec: &GibbsSpec,
    cfg: &IntegratorConfig,
    f: &LipschitzSpec,
    g: &LipschitzSpec,
    t: f64,
    n_replicas: usize,
) -> Result<Verdict> {
    let set = sample_replicas(spec, &single_time_cfg(cfg, t), n_replicas, None)?;
    fkg_from_set(&set, f, g, t, "fkg_cov")
}

/// Cov(f; P_t f) <= (1/c_minus) ||f||^2 sup_x E[P_x(X_t = x)] + 3 sigma,
/// checked at every t in `t_list` on shared replica sets.
///
/// The sup runs over the exact vertex set; on vertex-transitive graphs two
/// probe starts stand in for all of them (their agreement is checked), on
/// other graphs every vertex is probed.
pub fn corollary_bound_checks(
    spec: &GibbsSpec,
    cfg: &IntegratorConfig,
    f: &LipschitzSpec,
    t_list: &[f64],
    n_replicas: usize,
) -> Result<Vec<Verdict>> {
    let g = spec.graph();
    if f.max_vertex() >= g.n_vertices() {
        return Err(Error::InvalidInput("functional support out of range".into()));
    }
    if t_list.is_empty() {
        return Err(Error::InvalidParameter("empty t list".into()));
    }
    let probes: Vec<usize> = if g.is_vertex_transitive() {
        let mut p = vec![0];
        if g.n_vertices() > 1 {
            p.push(g.n_vertices() / 2);
        }
        p
    } else {
        (0..g.n_vertices()).collect()
    };
    let t_max = t_list.iter().copied().fold(0.0f64, f64::max);
    let run_cfg = IntegratorConfig {
        dt: cfg.dt,
        t_end: t_max,
        observation_times: t_list.to_vec(),
        seed: cfg.seed,
    };
    let sets: Vec<(usize, ReplicaSet)> = probes
        .iter()
        .map(|&x| Ok((x, sample_replicas(spec, &run_cfg, n_replicas, Some(x))?)))
        .collect::<Result<_>>()?;
    t_list
        .iter()
        .map(|&t| {
            // the walker does not perturb the environment, so the first
            // probe's snapshots also serve the covariance estimate
            let cov = sets[0].1.functional_cov(f, f, t, "cov_ff")?;
            let returns: Vec<Estimate> = sets
                .iter()
                .map(|(x, set)| set.walker_prob(*x, t))
                .collect::<Result<_>>()?;
            if g.is_vertex_transitive() && returns.len() == 2 {
                let d = (returns[0].value - returns[1].value).abs();
                let s = (returns[0].stderr.powi(2) + returns[1].stderr.powi(2)).sqrt();
                if d > 5.0 * s.max(1e-12) {
                    return Err(Error::Internal(format!(
                        "return probabilities differ on a vertex-transitive graph: {} vs {}",
                        returns[0].value, returns[1].value
                    )));
                }
            }
            let (max_idx, w_max) = returns
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.value.total_cmp(&b.1.value))
                .map(|(i, e)| (i, e.clone()))
                .expect("nonempty probes");
            let scale = f.norm().powi(2) / spec.site().c_minus();
            let bound = scale * w_max.value;
            let sigma = (cov.stderr.powi(2) + (scale * w_max.stderr).powi(2)).sqrt();
            require_positive_sigma(sigma)?;
            let margin = (bound - cov.value) / sigma + 3.0;
            let mut inputs = vec![cov, w_max];
            inputs.extend(
                returns
                    .into_iter()
                    .enumerate()
                    .filter_map(|(i, e)| (i != max_idx).then_some(e)),
            );
            Ok(Verdict {
                claim_tag: "corollary_bound".into(),
                pass: margin >= 0.0,
                margin_in_sigmas: margin,
                inputs,
                oracle: None,
            })
        })
        .collect()
}

pub fn corollary_bound_check(
    spec: &GibbsSpec,
    cfg: &IntegratorConfig,
    f: &LipschitzSpec,
    t: f64,
    n_replicas: usize,
) -> Result<Verdict> {
    Ok(corollary_bound_checks(spec, cfg, f, &[t], n_replicas)?.remove(0))
}

/// Outcome of a shared-noise order-preservation run from upper = lower + shift.
#[derive(Debug, Clone)]
pub struct OrderRun {
    pub verdict: Verdict,
    /// Smallest coordinate difference seen at any observation time.
    pub min_difference: f64,
    /// Largest order-functional value seen at any observation time.
    pub max_phi: f64,
    /// (t, max phi at t, min difference at t) per observation time.
    pub per_time: Vec<(f64, f64, f64)>,
}

/// Run shared-noise coupled pairs from ordered initial conditions and check
/// that the order survives: min_x phi_x >= -10 dt (Euler overshoot allowance)
/// and the order functional stays below 1e-4 at every observation time.
/// The margin is reported in tolerance units, not standard errors.
pub fn order_preservation_check(
    spec: &GibbsSpec,
    cfg: &IntegratorConfig,
    n_replicas: usize,
    shift: f64,
) -> Result<OrderRun> {
    cfg.validate(spec)?;
    if n_replicas == 0 {
        return Err(Error::InvalidParameter("need at least one replica".into()));
    }
    if shift.is_nan() || shift < 0.0 {
        return Err(Error::InvalidInput(format!(
            "shift must be nonnegative, got {shift}"
        )));
    }
    let plan = RngPlan::new(cfg.seed);
    let n_obs = cfg.observation_times.len();
    let mut per_time: Vec<(f64, f64, f64)> = cfg
        .observation_times
        .iter()
        .map(|&t| (t, 0.0, f64::INFINITY))
        .collect();
    for replica in 0..n_replicas as u64 {
        let mut init_rng = plan.stream(replica, Substream::Init);
        let lower = sample_environment(spec, &mut init_rng)?;
        let upper = crate::dynamics::Environment::new(
            lower.masses.iter().map(|m| m + shift).collect(),
        );
        let pair = crate::dynamics::CoupledPair::new(upper, lower)?;
        let mut noise_rng = plan.stream(replica, Substream::EnvNoise);
        let snaps = crate::dynamics::run_coupled_with(spec, cfg, pair, &mut noise_rng)?;
        for (k, (p, phi_val)) in snaps.iter().enumerate().take(n_obs) {
            per_time[k].1 = per_time[k].1.max(*phi_val);
            let min_diff = p.differences().into_iter().fold(f64::INFINITY, f64::min);
            per_time[k].2 = per_time[k].2.min(min_diff);
        }
    }
    let max_phi = per_time.iter().map(|e| e.1).fold(0.0f64, f64::max);
    let min_difference = per_time
        .iter()
        .map(|e| e.2)
        .fold(f64::INFINITY, f64::min);
    let diff_tol = 10.0 * cfg.dt;
    let phi_tol = 1e-4;
    let margin = ((min_difference + diff_tol) / diff_tol)
        .min((phi_tol - max_phi) / phi_tol);
    let verdict = Verdict {
        claim_tag: "order_preservation".into(),
        pass: min_difference >= -diff_tol && max_phi <= phi_tol,
        margin_in_sigmas: margin,
        inputs: vec![
            Estimate {
                value: min_difference,
                stderr: 0.0,
                replicas: n_replicas,
                quantity_tag: "min_difference".into(),
                t: *cfg.observation_times.last().unwrap_or(&0.0),
                x: None,
                y: None,
            },
            Estimate {
                value: max_phi,
                stderr: 0.0,
                replicas: n_replicas,
                quantity_tag: "phi_max".into(),
                t: *cfg.observation_times.last().unwrap_or(&0.0),
                x: None,
                y: None,
            },
        ],
        oracle: None,
    };
    Ok(OrderRun {
        verdict,
        min_difference,
        max_phi,
        per_time,
    })
}

/// E[eta_x eta_y] + 3 sigma < 0 for neighbors x ~ y under a strictly convex
/// pair potential; the sign is confirmed against the dense quadratic-form
/// inverse when the site potential is Gaussian.
///
/// Replicas start from the product of the site marginals and equilibrate
/// for 20 / (gap * c_minus) time units before sampling.
pub fn negative_correlation_check(
    spec: &GibbsSpec,
    cfg: &IntegratorConfig,
    x: usize,
    y: usize,
    n_replicas: usize,
) -> Result<Verdict> {
    let pair = spec.pair().ok_or_else(|| {
        Error::InvalidInput("negative-correlation check requires a pair potential".into())
    })?;
    if pair.c2_minus() <= 0.0 {
        return Err(Error::InvalidInput(
            "negative-correlation check requires a strictly convex pair potential".into(),
        ));
    }
    if !spec.graph().are_adjacent(x, y) {
        return Err(Error::InvalidInput(format!("{x} and {y} are not neighbors")));
    }
    let gap = spectral_report(spec.graph())?.lambda_env * spec.site().c_minus();
    let burn_in_steps = (20.0 / gap / cfg.dt).ceil() as usize;
    let t_end = burn_in_steps as f64 * cfg.dt;
    let run_cfg = IntegratorConfig {
        dt: cfg.dt,
        t_end,
        observation_times: vec![t_end],
        seed: cfg.seed,
    };
    let set = sample_replicas(spec, &run_cfg, n_replicas, None)?;
    let est = set.neighbor_moment(x, y, t_end)?;
    require_positive_sigma(est.stderr)?;
    let margin = -est.value / est.stderr - 3.0;
    let oracle = matches!(spec.site().family(), crate::potential::Family::Gaussian)
        .then(|| gaussian_pair_covariance(spec.graph(), pair))
        .transpose()?
        .map(|m| m[(x, y)]);
    let oracle_sign_ok = oracle.is_none_or(|o| o < 0.0);
    Ok(Verdict {
        claim_tag: "negative_correlation".into(),
        pass: margin > 0.0 && oracle_sign_ok,
        margin_in_sigmas: margin,
        inputs: vec![est],
        oracle,
    })
}

/// Least-squares decay rate of log(value - floor) against t. The floor is
/// the conserved-mode plateau, supplied by the caller. Refuses series with
/// fewer than 4 points or points within 5 standard errors of the floor.
pub fn decay_rate_fit(series: &[(f64, Estimate)], floor: f64) -> Result<f64> {
    if series.len() < 4 {
        return Err(Error::InsufficientSignal(format!(
            "need at least 4 time points, got {}",
            series.len()
        )));
    }
    let mut xs = Vec::with_capacity(series.len());
    let mut ys = Vec::with_capacity(series.len());
    for (t, est) in series {
        let v = est.value - floor;
        if v <= 0.0 || v <= 5.0 * est.stderr {
            return Err(Error::InsufficientSignal(format!(
                "no signal above the floor at t = {t}: value - floor = {v}, stderr = {}",
                est.stderr
            )));
        }
        xs.push(*t);
        ys.push(v.ln());
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientSignal(
            "time points must be distinct".into(),
        ));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(-(sxy / sxx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_cycle;
    use crate::potential::{PairPotential, Potential};

    fn gaussian_cycle(n: usize) -> GibbsSpec {
        GibbsSpec::new(build_cycle(n).unwrap(), Potential::gaussian())
    }

    fn cfg(seed: u64) -> IntegratorConfig {
        IntegratorConfig::new(1e-3, 1.0, vec![1.0], seed)
    }

    #[test]
    fn time_zero_covariances() {
        let spec = gaussian_cycle(8);
        let c = cfg(42);
        let est = estimate_cov(&spec, &c, 0, 0, 0.0, 5_000, Observable::Mass).unwrap();
        assert!(
            (est.value - 1.0).abs() <= 3.0 * est.stderr,
            "Var(eta_0) = {} +- {}",
            est.value,
            est.stderr
        );
        let off = estimate_cov(&spec, &c, 0, 3, 0.0, 5_000, Observable::Mass).unwrap();
        assert!(off.value.abs() <= 3.0 * off.stderr);

        // integration by parts: Cov(V'(eta_0); eta_0) = 1 for any family
        let smoothed = GibbsSpec::new(
            build_cycle(8).unwrap(),
            Potential::smoothed_gaussian(0.5).unwrap(),
        );
        let est = estimate_cov(&smoothed, &c, 0, 0, 0.0, 5_000, Observable::VPrime).unwrap();
        assert!((est.value - 1.0).abs() <= 3.0 * est.stderr);
    }

    #[test]
    fn too_few_replicas_refused() {
        let spec = gaussian_cycle(8);
        assert!(matches!(
            estimate_cov(&spec, &cfg(1), 0, 0, 0.0, 99, Observable::Mass),
            Err(Error::InsufficientReplicas(99))
        ));
    }

    #[test]
    fn walker_prob_partition_and_t0() {
        let spec = gaussian_cycle(8);
        let c = IntegratorConfig::new(1e-3, 0.25, vec![0.25], 7);
        let set = sample_replicas(&spec, &c, 400, Some(2)).unwrap();
        // the counts partition the replica set exactly
        let counts: usize = (0..8)
            .map(|y| {
                (0..set.n_replicas())
                    .filter(|&i| set.walker_at(i, 0) == Some(y))
                    .count()
            })
            .sum();
        assert_eq!(counts, set.n_replicas());
        let total: f64 = (0..8)
            .map(|y| set.walker_prob(y, 0.25).unwrap().value)
            .sum();
        assert!((total - 1.0).abs() < 1e-12, "total = {total}");

        let c0 = IntegratorConfig::new(1e-3, 0.0, vec![0.0], 7);
        let set = sample_replicas(&spec, &c0, 400, Some(2)).unwrap();
        let at_start = set.walker_prob(2, 0.0).unwrap();
        assert_eq!(at_start.value, 1.0);
        assert_eq!(at_start.stderr, 0.0);
    }

    #[test]
    fn replica_set_is_deterministic_across_pool_sizes() {
        let spec = gaussian_cycle(8);
        let c = IntegratorConfig::new(1e-3, 0.1, vec![0.1], 99);
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| sample_replicas(&spec, &c, 200, Some(0)).unwrap())
        };
        let a = run(1);
        let b = run(2);
        assert_eq!(a.eta0, b.eta0);
        assert_eq!(a.snapshots, b.snapshots);
        assert_eq!(a.walker, b.walker);
    }

    #[test]
    fn fkg_rejects_decreasing_functions() {
        let spec = gaussian_cycle(8);
        let f = LipschitzSpec::linear(vec![(0, -1.0)]).unwrap();
        let g = LipschitzSpec::linear(vec![(0, 1.0)]).unwrap();
        assert!(matches!(
            fkg_check(&spec, &cfg(1), &f, &g, 0.0, 200),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn empty_support_rejected() {
        assert!(LipschitzSpec::linear(vec![(0, 0.0)]).is_err());
        assert!(LipschitzSpec::linear(vec![]).is_err());
    }

    #[test]
    fn fkg_variance_case_passes() {
        let spec = gaussian_cycle(8);
        let f = LipschitzSpec::linear(vec![(0, 1.0)]).unwrap();
        let v = fkg_check(&spec, &cfg(3), &f, &f, 0.0, 1_000).unwrap();
        assert!(v.pass, "Var >= 0 within noise: margin {}", v.margin_in_sigmas);
    }

    #[test]
    fn negcorr_requires_pair_and_adjacency() {
        let spec = gaussian_cycle(8);
        assert!(matches!(
            negative_correlation_check(&spec, &cfg(1), 0, 1, 200),
            Err(Error::InvalidInput(_))
        ));
        let with_pair = gaussian_cycle(8).with_pair(PairPotential::quadratic(0.25));
        assert!(matches!(
            negative_correlation_check(&with_pair, &cfg(1), 0, 4, 200),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn decay_fit_on_oracle_series() {
        // exact heat-kernel series on the cycle: late window isolates the gap
        let g = build_cycle(8).unwrap();
        let gap = crate::oracle::spectral_report(&g).unwrap().lambda_env;
        let series: Vec<(f64, Estimate)> = [4.0, 5.0, 6.0, 7.0]
            .iter()
            .map(|&t| {
                let v = crate::oracle::gaussian_covariance(&g, t, 0, 0).unwrap();
                (t, Estimate::exact(v, "p_t(0,0)", t))
            })
            .collect();
        let rate = decay_rate_fit(&series, 1.0 / 8.0).unwrap();
        assert!(
            (rate - gap).abs() / gap < 0.02,
            "fitted {rate} vs gap {gap}"
        );
    }

    #[test]
    fn decay_fit_refuses_flat_series() {
        let series: Vec<(f64, Estimate)> = (0..5)
            .map(|k| (k as f64, Estimate::exact(1.0, "flat", k as f64)))
            .collect();
        assert!(matches!(
            decay_rate_fit(&series, 1.0),
            Err(Error::InsufficientSignal(_))
        ));
    }

    #[test]
    fn estimates_are_bitwise_reproducible() {
        let spec = gaussian_cycle(8);
        let c = cfg(1234);
        let a = estimate_cov(&spec, &c, 0, 1, 0.1, 300, Observable::Mass).unwrap();
        let b = estimate_cov(&spec, &c, 0, 1, 0.1, 300, Observable::Mass).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
    }
}
