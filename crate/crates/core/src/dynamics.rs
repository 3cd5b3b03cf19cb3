//! Euler-Maruyama integration of the conservative mass SDE
//!
//! d eta_x = sum_{b in B->} sgn_x(b) ( dH/db dt + sqrt(2) dB_b ),
//!
//! with one Brownian motion per canonical oriented edge. Each edge transfers
//! mass antisymmetrically between its endpoints, so the total mass is
//! conserved to round-off. Shared-noise coupling of two environments and the
//! weighted order functional live here as well.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::potential::GibbsSpec;
use crate::rng::{RngPlan, Substream};

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// One configuration of masses; the SDE state.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    pub masses: Vec<f64>,
    pub time: f64,
}

impl Environment {
    pub fn new(masses: Vec<f64>) -> Environment {
        Environment { masses, time: 0.0 }
    }

    pub fn constant(n: usize, value: f64) -> Environment {
        Environment::new(vec![value; n])
    }

    /// Total mass by compensated (Kahan) summation.
    pub fn total_mass(&self) -> f64 {
        crate::stats::kahan_sum(self.masses.iter().copied())
    }

    pub fn is_finite(&self) -> bool {
        self.masses.iter().all(|m| m.is_finite())
    }
}

/// Fixed-step integration schedule. Observation times must sit on the step
/// grid; the stability guard dt <= 1 / (4 d c_plus) keeps the explicit
/// scheme contractive on the linearized drift.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_end: f64,
    pub observation_times: Vec<f64>,
    pub seed: u64,
}

impl IntegratorConfig {
    pub fn new(dt: f64, t_end: f64, observation_times: Vec<f64>, seed: u64) -> IntegratorConfig {
        IntegratorConfig {
            dt,
            t_end,
            observation_times,
            seed,
        }
    }

    pub fn validate(&self, spec: &GibbsSpec) -> Result<()> {
        if !self.dt.is_finite() || self.dt <= 0.0 {
            return Err(Error::InvalidParameter(format!("dt must be > 0, got {}", self.dt)));
        }
        if self.t_end < 0.0 || !self.t_end.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "t_end must be >= 0, got {}",
                self.t_end
            )));
        }
        let guard = 1.0 / (4.0 * spec.graph().degree_bound() as f64 * spec.site().c_plus());
        if self.dt > guard {
            return Err(Error::InvalidParameter(format!(
                "dt = {} exceeds the stability guard 1/(4 d c_plus) = {guard}",
                self.dt
            )));
        }
        let mut prev = -1.0;
        for &t in &self.observation_times {
            if t < 0.0 || t > self.t_end + 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "observation time {t} outside [0, {}]",
                    self.t_end
                )));
            }
            if t <= prev {
                return Err(Error::InvalidParameter(
                    "observation times must be strictly increasing".into(),
                ));
            }
            let k = (t / self.dt).round();
            if (t - k * self.dt).abs() > 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "observation time {t} is not a multiple of dt = {}",
                    self.dt
                )));
            }
            prev = t;
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn observation_steps(&self) -> Vec<usize> {
        self.observation_times
            .iter()
            .map(|&t| (t / self.dt).round() as usize)
            .collect()
    }
}

/// Reusable stepping kernel; owns the per-vertex gradient scratch buffer.
pub struct Stepper<'a> {
    spec: &'a GibbsSpec,
    grad: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(spec: &'a GibbsSpec) -> Stepper<'a> {
        Stepper {
            spec,
            grad: vec![0.0; spec.graph().n_vertices()],
        }
    }

    /// One explicit step. `noise` holds one N(0, dt) draw per canonical
    /// oriented edge.
    pub fn step(&mut self, env: &mut Environment, dt: f64, noise: &[f64]) {
        debug_assert_eq!(noise.len(), self.spec.graph().n_edges());
        let g = self.spec.graph();
        let site = self.spec.site();
        let masses = &mut env.masses;
        for x in 0..g.n_vertices() {
            let mut gx = site.grad(masses[x]);
            if let Some(pair) = self.spec.pair() {
                for &y in g.neighbors(x) {
                    gx += pair.grad(masses[x] + masses[y]);
                }
            }
            self.grad[x] = gx;
        }
        for (eid, &(tail, head)) in g.edges().iter().enumerate() {
            // dH/db dt + sqrt(2) dB_b, leaving the tail, entering the head
            let w = (self.grad[tail] - self.grad[head]) * dt + SQRT_2 * noise[eid];
            masses[tail] -= w;
            masses[head] += w;
        }
        env.time += dt;
    }

    /// Step with fresh Gaussian noise drawn from `rng`, filling `noise_buf`.
    pub fn step_with_rng<R: Rng + ?Sized>(
        &mut self,
        env: &mut Environment,
        dt: f64,
        noise_buf: &mut [f64],
        rng: &mut R,
    ) {
        let sqrt_dt = dt.sqrt();
        for n in noise_buf.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *n = sqrt_dt * z;
        }
        self.step(env, dt, noise_buf);
    }
}

/// Single explicit Euler-Maruyama step with caller-supplied noise.
///
/// Checks the post-step state for finiteness; trajectory drivers do this only
/// at observation times to keep the hot loop lean.
pub fn euler_step(
    env: &mut Environment,
    spec: &GibbsSpec,
    dt: f64,
    noise: &[f64],
) -> Result<()> {
    if env.masses.len() != spec.graph().n_vertices() {
        return Err(Error::InvalidInput(format!(
            "environment has {} entries, graph has {} vertices",
            env.masses.len(),
            spec.graph().n_vertices()
        )));
    }
    if noise.len() != spec.graph().n_edges() {
        return Err(Error::InvalidInput(format!(
            "need one noise entry per canonical edge ({}), got {}",
            spec.graph().n_edges(),
            noise.len()
        )));
    }
    let mut stepper = Stepper::new(spec);
    stepper.step(env, dt, noise);
    check_finite(env)
}

pub(crate) fn check_finite(env: &Environment) -> Result<()> {
    if env.is_finite() {
        Ok(())
    } else {
        let bad: Vec<String> = env
            .masses
            .iter()
            .enumerate()
            .filter(|(_, m)| !m.is_finite())
            .take(4)
            .map(|(x, m)| format!("eta[{x}] = {m}"))
            .collect();
        Err(Error::NumericalBlowup {
            time: env.time,
            detail: bad.join(", "),
        })
    }
}

/// Draw an initial environment from the product measure of the site
/// marginals.
pub fn sample_environment<R: Rng + ?Sized>(spec: &GibbsSpec, rng: &mut R) -> Result<Environment> {
    let masses = (0..spec.graph().n_vertices())
        .map(|_| spec.site().sample(rng))
        .collect::<Result<Vec<f64>>>()?;
    Ok(Environment::new(masses))
}

/// Integrate one trajectory, returning snapshots at the observation times.
/// The noise stream is replica 0 of the config seed; ensembles derive their
/// own per-replica streams.
pub fn run_trajectory(
    spec: &GibbsSpec,
    cfg: &IntegratorConfig,
    init: Environment,
) -> Result<Vec<Environment>> {
    cfg.validate(spec)?;
    let mut rng = RngPlan::new(cfg.seed).stream(0, Substream::EnvNoise);
    run_trajectory_with(spec, cfg, init, &mut rng)
}

pub fn run_trajectory_with<R: Rng + ?Sized>(
    spec: &GibbsSpec,
    cfg: &IntegratorConfig,
    mut env: Environment,
    rng: &mut R,
) -> Result<Vec<Environment>> {
    if env.masses.len() != spec.graph().n_vertices() {
        return Err(Error::InvalidInput(
            "initial environment length does not match the graph".into(),
        ));
    }
    let obs_steps = cfg.observation_steps();
    let n_steps = cfg.n_steps();
    let mut stepper = Stepper::new(spec);
    let mut noise = vec![0.0; spec.graph().n_edges()];
    let mut out = Vec::with_capacity(obs_steps.len());
    let mut next_obs = 0;
    for k in 0..=n_steps {
        if next_obs < obs_steps.len() && obs_steps[next_obs] == k {
            check_finite(&env)?;
            out.push(env.clone());
            next_obs += 1;
        }
        if k < n_steps {
            stepper.step_with_rng(&mut env, cfg.dt, &mut noise, rng);
        }
    }
    Ok(out)
}

/// Two environments driven by the same noise; upper >= lower at t = 0.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledPair {
    pub upper: Environment,
    pub lower: Environment,
}

impl CoupledPair {
    pub fn new(upper: Environment, lower: Environment) -> Result<CoupledPair> {
        if upper.masses.len() != lower.masses.len() {
            return Err(Error::InvalidInput(
                "coupled environments must have the same length".into(),
            ));
        }
        if upper
            .masses
            .iter()
            .zip(&lower.masses)
            .any(|(u, l)| u < l)
        {
            return Err(Error::InvalidInput(
                "coupled pair must be ordered (upper >= lower) at t = 0".into(),
            ));
        }
        Ok(CoupledPair { upper, lower })
    }

    /// Coordinate differences phi_x = upper_x - lower_x.
    pub fn differences(&self) -> Vec<f64> {
        self.upper
            .masses
            .iter()
            .zip(&self.lower.masses)
            .map(|(u, l)| u - l)
            .collect()
    }
}

/// Order functional: sum_x (2d)^{-|x|} phi_x^2 1{phi_x < 0}, with |x| the
/// graph distance to the origin and d the degree bound. Zero iff the
/// partial order holds (up to the weights' reach).
pub fn phi(pair: &CoupledPair, g: &Graph) -> f64 {
    let base = 2.0 * g.degree_bound() as f64;
    pair.upper
        .masses
        .iter()
        .zip(&pair.lower.masses)
        .enumerate()
        .filter_map(|(x, (u, l))| {
            let d = u - l;
            (d < 0.0).then(|| base.powi(-(g.distance_to_origin(x) as i32)) * d * d)
        })
        .sum()
}

/// Integrate a shared-noise pair, returning the pair and the order
/// functional at each observation time.
pub fn run_coupled(
    spec: &GibbsSpec,
    cfg: &IntegratorConfig,
    pair: CoupledPair,
) -> Result<Vec<(CoupledPair, f64)>> {
    cfg.validate(spec)?;
    let mut rng = RngPlan::new(cfg.seed).stream(0, Substream::EnvNoise);
    run_coupled_with(spec, cfg, pair, &mut rng)
}

pub fn run_coupled_with<R: Rng + ?Sized>(
    spec: &GibbsSpec,
    cfg: &IntegratorConfig,
    mut pair: CoupledPair,
    rng: &mut R,
) -> Result<Vec<(CoupledPair, f64)>> {
    let obs_steps = cfg.observation_steps();
    let n_steps = cfg.n_steps();
    let mut stepper = Stepper::new(spec);
    let mut noise = vec![0.0; spec.graph().n_edges()];
    let sqrt_dt = cfg.dt.sqrt();
    let mut out = Vec::with_capacity(obs_steps.len());
    let mut next_obs = 0;
    for k in 0..=n_steps {
        if next_obs < obs_steps.len() && obs_steps[next_obs] == k {
            check_finite(&pair.upper)?;
            check_finite(&pair.lower)?;
            let value = phi(&pair, spec.graph());
            out.push((pair.clone(), value));
            next_obs += 1;
        }
        if k < n_steps {
            for n in noise.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *n = sqrt_dt * z;
            }
            // identical noise array for both trajectories
            stepper.step(&mut pair.upper, cfg.dt, &noise);
            stepper.step(&mut pair.lower, cfg.dt, &noise);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_cycle;
    use crate::potential::Potential;

    fn gaussian_cycle(n: usize) -> GibbsSpec {
        GibbsSpec::new(build_cycle(n).unwrap(), Potential::gaussian())
    }

    #[test]
    fn single_step_matches_laplacian_drift() {
        let spec = gaussian_cycle(4);
        let mut env = Environment::new(vec![1.0, 0.0, 0.0, 0.0]);
        let noise = vec![0.0; 4];
        euler_step(&mut env, &spec, 0.01, &noise).unwrap();
        let expect = [1.0 - 2.0 * 0.01, 0.01, 0.0, 0.01];
        for (a, b) in env.masses.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
        assert!((env.total_mass() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn constant_environment_is_a_fixed_point_of_the_drift() {
        let spec = gaussian_cycle(6);
        let mut env = Environment::constant(6, 0.37);
        let noise = vec![0.0; 6];
        euler_step(&mut env, &spec, 0.01, &noise).unwrap();
        assert!(env.masses.iter().all(|&m| (m - 0.37).abs() < 1e-15));
    }

    #[test]
    fn mass_conserved_with_noise() {
        let spec = gaussian_cycle(8);
        let cfg = IntegratorConfig::new(1e-3, 1.0, vec![0.0, 0.5, 1.0], 42);
        let plan = RngPlan::new(42);
        let init = sample_environment(&spec, &mut plan.stream(0, Substream::Init)).unwrap();
        let m0 = init.total_mass();
        let snaps = run_trajectory(&spec, &cfg, init).unwrap();
        assert_eq!(snaps.len(), 3);
        for s in &snaps {
            assert!(
                (s.total_mass() - m0).abs() <= 1e-9 * spec.graph().n_vertices() as f64,
                "mass drift {}",
                s.total_mass() - m0
            );
        }
    }

    #[test]
    fn zero_time_returns_init_only() {
        let spec = gaussian_cycle(4);
        let cfg = IntegratorConfig::new(1e-3, 0.0, vec![0.0], 1);
        let init = Environment::new(vec![0.5, -0.5, 1.0, -1.0]);
        let snaps = run_trajectory(&spec, &cfg, init.clone()).unwrap();
        assert_eq!(snaps.len(), 1);
        assert_eq!(snaps[0].masses, init.masses);
    }

    #[test]
    fn stability_guard_enforced() {
        let spec = gaussian_cycle(4);
        let cfg = IntegratorConfig::new(0.2, 1.0, vec![1.0], 1);
        assert!(matches!(
            cfg.validate(&spec),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn off_grid_observation_rejected() {
        let spec = gaussian_cycle(4);
        let cfg = IntegratorConfig::new(1e-3, 1.0, vec![0.12345e-1 + 3e-5], 1);
        assert!(cfg.validate(&spec).is_err());
    }

    #[test]
    fn blowup_is_detected_with_diagnostics() {
        let spec = gaussian_cycle(4);
        let cfg = IntegratorConfig::new(1e-3, 0.1, vec![0.1], 1);
        let init = Environment::new(vec![1e308, -1e308, 1e308, -1e308]);
        match run_trajectory(&spec, &cfg, init) {
            Err(Error::NumericalBlowup { time, detail }) => {
                assert!(time > 0.0);
                assert!(detail.contains("eta["));
            }
            other => panic!("expected blowup, got {other:?}"),
        }
    }

    #[test]
    fn identical_pair_stays_bitwise_identical() {
        let spec = gaussian_cycle(8);
        let cfg = IntegratorConfig::new(1e-3, 0.5, vec![0.1, 0.5], 9);
        let plan = RngPlan::new(9);
        let env = sample_environment(&spec, &mut plan.stream(0, Substream::Init)).unwrap();
        let pair = CoupledPair::new(env.clone(), env).unwrap();
        for (p, phi_val) in run_coupled(&spec, &cfg, pair).unwrap() {
            assert_eq!(p.upper.masses, p.lower.masses);
            assert_eq!(phi_val, 0.0);
        }
    }

    #[test]
    fn phi_examples() {
        let g = build_cycle(8).unwrap();
        let zero = Environment::constant(8, 0.0);
        let pair = CoupledPair {
            upper: zero.clone(),
            lower: zero.clone(),
        };
        assert_eq!(phi(&pair, &g), 0.0);

        // phi at the origin = -1, others 0, d = 2: (2 d)^0 * 1 = 1
        let mut lower = zero.clone();
        lower.masses[0] = 1.0;
        let pair = CoupledPair {
            upper: zero.clone(),
            lower,
        };
        assert_eq!(phi(&pair, &g), 1.0);

        // positive differences never fire the indicator
        let upper = Environment::constant(8, 5.0);
        let pair = CoupledPair { upper, lower: zero };
        assert_eq!(phi(&pair, &g), 0.0);
    }

    #[test]
    fn unordered_pair_rejected() {
        let upper = Environment::new(vec![0.0, 1.0]);
        let lower = Environment::new(vec![0.5, 0.0]);
        assert!(CoupledPair::new(upper, lower).is_err());
    }

    #[test]
    fn trajectory_is_deterministic_in_the_seed() {
        let spec = gaussian_cycle(8);
        let cfg = IntegratorConfig::new(1e-3, 0.3, vec![0.3], 1234);
        let init = Environment::constant(8, 0.0);
        let a = run_trajectory(&spec, &cfg, init.clone()).unwrap();
        let b = run_trajectory(&spec, &cfg, init).unwrap();
        assert_eq!(a[0].masses, b[0].masses);
    }
}
