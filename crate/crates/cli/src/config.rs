//! Configuration ingestion: JSON with strict key checking, per-experiment
//! defaults, and override precedence config < GLHS_SEED < flags.

use serde::{Deserialize, Serialize};

use glhs_core::graph::{build_cycle, build_torus, Graph};
use glhs_core::potential::{GibbsSpec, PairPotential, Potential};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Theorem,
    LemmaEquality,
    Fkg,
    Corollary,
    Order,
    Negcorr,
    Kite,
    Gap,
    All,
}

impl Experiment {
    pub fn parse(s: &str) -> Result<Experiment, ConfigError> {
        Ok(match s {
            "theorem" => Experiment::Theorem,
            "lemma-equality" => Experiment::LemmaEquality,
            "fkg" => Experiment::Fkg,
            "corollary" => Experiment::Corollary,
            "order" => Experiment::Order,
            "negcorr" => Experiment::Negcorr,
            "kite" => Experiment::Kite,
            "gap" => Experiment::Gap,
            "all" => Experiment::All,
            other => {
                return Err(ConfigError::semantic(
                    "experiment",
                    &format!(
                        "unknown experiment {other:?}; expected one of theorem, \
                         lemma-equality, fkg, corollary, order, negcorr, kite, gap, all"
                    ),
                ))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Theorem => "theorem",
            Experiment::LemmaEquality => "lemma-equality",
            Experiment::Fkg => "fkg",
            Experiment::Corollary => "corollary",
            Experiment::Order => "order",
            Experiment::Negcorr => "negcorr",
            Experiment::Kite => "kite",
            Experiment::Gap => "gap",
            Experiment::All => "all",
        }
    }
}

/// The experiments `all` expands to, in execution order.
pub const ALL_EXPERIMENTS: [Experiment; 8] = [
    Experiment::Theorem,
    Experiment::LemmaEquality,
    Experiment::Fkg,
    Experiment::Corollary,
    Experiment::Order,
    Experiment::Negcorr,
    Experiment::Kite,
    Experiment::Gap,
];

/// Raw on-disk schema; unknown keys are rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub experiment: Option<String>,
    pub graph: Option<RawGraph>,
    pub potential: Option<RawPotential>,
    pub t_list: Option<Vec<f64>>,
    pub x: Option<usize>,
    pub y: Option<usize>,
    pub replicas: Option<usize>,
    pub dt: Option<f64>,
    pub seed: Option<u64>,
    pub output: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawGraph {
    pub kind: Option<String>,
    pub side: Option<usize>,
    pub dim: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPotential {
    pub family: Option<String>,
    pub epsilon: Option<f64>,
    pub pair_coupling: Option<f64>,
}

/// Command-line / environment overrides, highest precedence last applied.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub experiment: Option<String>,
    pub env_seed: Option<u64>,
    pub flag_seed: Option<u64>,
    pub replicas: Option<usize>,
    pub out: Option<String>,
}

#[derive(Debug)]
pub struct ConfigError {
    pub message: String,
}

impl ConfigError {
    fn parse(e: &serde_json::Error) -> ConfigError {
        ConfigError {
            message: format!(
                "config parse error at line {} column {}: {e}",
                e.line(),
                e.column()
            ),
        }
    }

    pub fn semantic(field: &str, msg: &str) -> ConfigError {
        ConfigError {
            message: format!("config error at `{field}`: {msg}"),
        }
    }
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for ConfigError {}

/// Fully resolved settings for one experiment; echoed into the summary.
#[derive(Debug, Clone, Serialize)]
pub struct EffectiveConfig {
    pub experiment: Experiment,
    pub graph_kind: String,
    pub side: usize,
    pub dim: usize,
    pub family: String,
    pub epsilon: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pair_coupling: Option<f64>,
    pub t_list: Vec<f64>,
    pub x: usize,
    pub y: usize,
    pub replicas: usize,
    pub dt: f64,
    pub seed: u64,
}

impl EffectiveConfig {
    pub fn build_graph(&self) -> Result<Graph, glhs_core::Error> {
        match self.graph_kind.as_str() {
            "cycle" => build_cycle(self.side),
            _ => build_torus(self.side, self.dim),
        }
    }

    pub fn build_spec(&self) -> Result<GibbsSpec, glhs_core::Error> {
        let site = match self.family.as_str() {
            "gaussian" => Potential::gaussian(),
            _ => Potential::smoothed_gaussian(self.epsilon)?,
        };
        let mut spec = GibbsSpec::new(self.build_graph()?, site);
        if let Some(a) = self.pair_coupling {
            spec = spec.with_pair(PairPotential::quadratic(a));
        }
        Ok(spec)
    }
}

/// The resolved run: output prefix plus one effective config per experiment.
#[derive(Debug, Clone)]
pub struct RunPlan {
    pub output: String,
    pub seed: u64,
    pub experiments: Vec<EffectiveConfig>,
}

/// Parse a config document (inline JSON text) and resolve it against the
/// overrides into a validated run plan.
pub fn load_config(text: &str, overrides: &Overrides) -> Result<RunPlan, ConfigError> {
    let raw: RawConfig = serde_json::from_str(text).map_err(|e| ConfigError::parse(&e))?;
    resolve(raw, overrides)
}

fn resolve(raw: RawConfig, ov: &Overrides) -> Result<RunPlan, ConfigError> {
    let experiment_name = ov
        .experiment
        .clone()
        .or(raw.experiment.clone())
        .ok_or_else(|| {
            ConfigError::semantic("experiment", "no experiment given (argument or config)")
        })?;
    let experiment = Experiment::parse(&experiment_name)?;

    // precedence: config < environment < flag
    let seed = ov
        .flag_seed
        .or(ov.env_seed)
        .or(raw.seed)
        .unwrap_or(42);
    let output = ov
        .out
        .clone()
        .or(raw.output.clone())
        .unwrap_or_else(|| "glhs_out".to_string());
    let replicas_override = ov.replicas.or(raw.replicas);

    if experiment == Experiment::All {
        let has_specifics = raw.graph.is_some()
            || raw.potential.is_some()
            || raw.t_list.is_some()
            || raw.x.is_some()
            || raw.y.is_some();
        if has_specifics {
            return Err(ConfigError::semantic(
                "experiment",
                "`all` runs every experiment with its own defaults; only replicas, dt, \
                 seed and output may be overridden",
            ));
        }
        let experiments = ALL_EXPERIMENTS
            .iter()
            .map(|&e| {
                resolve_one(
                    e,
                    &RawConfig {
                        replicas: replicas_override,
                        dt: raw.dt,
                        ..RawConfig::default()
                    },
                    seed,
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        return Ok(RunPlan {
            output,
            seed,
            experiments,
        });
    }

    let mut raw = raw;
    raw.replicas = replicas_override;
    let cfg = resolve_one(experiment, &raw, seed)?;
    Ok(RunPlan {
        output,
        seed,
        experiments: vec![cfg],
    })
}

fn resolve_one(
    experiment: Experiment,
    raw: &RawConfig,
    seed: u64,
) -> Result<EffectiveConfig, ConfigError> {
    let default_family = match experiment {
        Experiment::LemmaEquality => "smoothed_gaussian",
        _ => "gaussian",
    };
    let default_replicas = match experiment {
        Experiment::Order => 1_000,
        Experiment::Negcorr => 10_000,
        Experiment::Gap => 200_000,
        _ => 100_000,
    };
    let default_t_list: Vec<f64> = match experiment {
        Experiment::Order => vec![0.5, 1.0, 2.0],
        Experiment::Kite => vec![0.1, 0.25, 0.5, 1.0, 1.5, 2.0],
        Experiment::Gap => vec![2.0, 3.0, 4.0, 5.0],
        _ => vec![0.5, 1.0],
    };
    let default_dt = match experiment {
        Experiment::Gap => 4e-3,
        _ => 1e-3,
    };
    let (default_kind, default_side, default_dim) = match experiment {
        Experiment::Kite => ("torus", 16, 2),
        _ => ("cycle", 8, 1),
    };

    let g = raw.graph.as_ref();
    let graph_kind = g
        .and_then(|g| g.kind.clone())
        .unwrap_or_else(|| default_kind.to_string());
    if graph_kind != "cycle" && graph_kind != "torus" {
        return Err(ConfigError::semantic(
            "graph.kind",
            &format!("unknown graph kind {graph_kind:?}; expected cycle or torus"),
        ));
    }
    let side = g.and_then(|g| g.side).unwrap_or(default_side);
    let dim = g
        .and_then(|g| g.dim)
        .unwrap_or(if graph_kind == "torus" { default_dim.max(2) } else { 1 });
    if side < 3 {
        return Err(ConfigError::semantic("graph.side", "side must be >= 3"));
    }
    if graph_kind == "cycle" && dim != 1 {
        return Err(ConfigError::semantic("graph.dim", "cycles have dim 1"));
    }
    if graph_kind == "torus" && !(1..=2).contains(&dim) {
        return Err(ConfigError::semantic("graph.dim", "dim must be 1 or 2"));
    }

    let p = raw.potential.as_ref();
    let family = p
        .and_then(|p| p.family.clone())
        .unwrap_or_else(|| default_family.to_string());
    let epsilon = match family.as_str() {
        "gaussian" => {
            let eps = p.and_then(|p| p.epsilon).unwrap_or(0.0);
            if eps != 0.0 {
                return Err(ConfigError::semantic(
                    "potential.epsilon",
                    "the gaussian family has no epsilon parameter",
                ));
            }
            0.0
        }
        "smoothed_gaussian" => {
            let eps = p.and_then(|p| p.epsilon).unwrap_or(0.5);
            if !(0.0..=10.0).contains(&eps) {
                return Err(ConfigError::semantic(
                    "potential.epsilon",
                    "epsilon must be in [0, 10]",
                ));
            }
            eps
        }
        other => {
            return Err(ConfigError::semantic(
                "potential.family",
                &format!("unknown family {other:?}; expected gaussian or smoothed_gaussian"),
            ))
        }
    };
    let pair_coupling = match experiment {
        Experiment::Negcorr => {
            let a = p.and_then(|p| p.pair_coupling).unwrap_or(0.25);
            if a <= 0.0 {
                return Err(ConfigError::semantic(
                    "potential.pair_coupling",
                    "the negcorr experiment needs a strictly positive pair coupling",
                ));
            }
            if family != "gaussian" {
                return Err(ConfigError::semantic(
                    "potential.family",
                    "the negcorr experiment requires the gaussian site family \
                     (its oracle is the dense quadratic-form inverse)",
                ));
            }
            Some(a)
        }
        _ => {
            if p.and_then(|p| p.pair_coupling).is_some() {
                return Err(ConfigError::semantic(
                    "potential.pair_coupling",
                    "pair potentials are only supported by the negcorr experiment",
                ));
            }
            None
        }
    };

    if experiment == Experiment::Kite && (graph_kind != "torus" || dim != 2 || side < 8) {
        return Err(ConfigError::semantic(
            "graph",
            "the kite experiment runs on a 2d torus with side >= 8",
        ));
    }

    let t_list = raw.t_list.clone().unwrap_or(default_t_list);
    if t_list.is_empty() {
        return Err(ConfigError::semantic("t_list", "must be nonempty"));
    }
    let mut prev = -1.0;
    for &t in &t_list {
        if !t.is_finite() || t < 0.0 {
            return Err(ConfigError::semantic("t_list", "times must be finite and >= 0"));
        }
        if t <= prev {
            return Err(ConfigError::semantic(
                "t_list",
                "times must be strictly increasing",
            ));
        }
        prev = t;
    }
    if experiment == Experiment::Kite {
        let guard = side as f64 / 8.0;
        if t_list.iter().any(|&t| t > guard) {
            return Err(ConfigError::semantic(
                "t_list",
                &format!("kite times must stay below the wraparound guard side/8 = {guard}"),
            ));
        }
    }

    let dt = raw.dt.unwrap_or(default_dt);
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(ConfigError::semantic("dt", "dt must be finite and > 0"));
    }
    let degree_bound = if graph_kind == "torus" && dim == 2 { 4.0 } else { 2.0 };
    let c_plus = if family == "gaussian" { 1.0 } else { 1.0 + epsilon };
    let guard = 1.0 / (4.0 * degree_bound * c_plus);
    if dt > guard {
        return Err(ConfigError::semantic(
            "dt",
            &format!("dt = {dt} exceeds the stability guard 1/(4 d c_plus) = {guard}"),
        ));
    }
    if experiment != Experiment::Kite {
        for &t in &t_list {
            let k = (t / dt).round();
            if (t - k * dt).abs() > 1e-12 {
                return Err(ConfigError::semantic(
                    "t_list",
                    &format!("t = {t} is not a multiple of dt = {dt}"),
                ));
            }
        }
    }

    let replicas = raw.replicas.unwrap_or(default_replicas);
    if replicas < 100 {
        return Err(ConfigError::semantic(
            "replicas",
            &format!("{replicas} is below the estimator minimum of 100"),
        ));
    }

    let n_vertices = if graph_kind == "torus" && dim == 2 {
        side * side
    } else {
        side
    };
    let x = raw.x.unwrap_or(0);
    let y = raw.y.unwrap_or(1);
    if x >= n_vertices {
        return Err(ConfigError::semantic(
            "x",
            &format!("{x} out of range for {n_vertices} vertices"),
        ));
    }
    if y >= n_vertices {
        return Err(ConfigError::semantic(
            "y",
            &format!("{y} out of range for {n_vertices} vertices"),
        ));
    }
    if experiment == Experiment::Negcorr {
        // defaults 0 and 1 are neighbors on every cycle and torus
        let adjacent_on_cycle = graph_kind == "cycle"
            && (x.abs_diff(y) == 1 || x.abs_diff(y) == side - 1);
        let adjacent_on_torus = graph_kind == "torus"; // validated at run time
        if x == y || (!adjacent_on_cycle && !adjacent_on_torus) {
            return Err(ConfigError::semantic(
                "x",
                "negcorr requires adjacent vertices x ~ y",
            ));
        }
    }

    Ok(EffectiveConfig {
        experiment,
        graph_kind,
        side,
        dim,
        family,
        epsilon,
        pair_coupling,
        t_list,
        x,
        y,
        replicas,
        dt,
        seed,
    })
}
