//! Single-site potential families, optional pair potentials, and exact
//! sampling from the single-site marginal ∝ exp(-V).
//!
//! Every family is normalized so that ∫ exp(-V) = 1 and satisfies the
//! uniform curvature bounds c_minus <= V'' <= c_plus with c_minus > 0.
//! The dynamics only reads V' and V''; the normalization matters for the
//! sampling diagnostics.

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::Graph;
use std::sync::Arc;

const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    Gaussian,
    /// V(t) = t^2/2 + epsilon ln cosh t, so V'' = 1 + epsilon sech^2 t
    /// ranges over [1, 1 + epsilon]. A minimal family with c_minus < c_plus.
    SmoothedGaussian { epsilon: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct Potential {
    family: Family,
    c_minus: f64,
    c_plus: f64,
    mean: f64,
    /// ln Z of the unnormalized density; added to eval so ∫ exp(-V) = 1.
    log_norm: f64,
}

/// Numerically stable ln cosh.
fn ln_cosh(t: f64) -> f64 {
    let a = t.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

fn raw_eval(family: Family, t: f64) -> f64 {
    match family {
        Family::Gaussian => 0.5 * t * t,
        Family::SmoothedGaussian { epsilon } => 0.5 * t * t + epsilon * ln_cosh(t),
    }
}

impl Potential {
    /// Standard Gaussian: V(t) = t^2/2 + ln sqrt(2 pi).
    pub fn gaussian() -> Potential {
        Potential {
            family: Family::Gaussian,
            c_minus: 1.0,
            c_plus: 1.0,
            mean: 0.0,
            log_norm: SQRT_2PI.ln(),
        }
    }

    /// Smoothed Gaussian with curvature in [1, 1 + epsilon], 0 <= epsilon <= 10.
    pub fn smoothed_gaussian(epsilon: f64) -> Result<Potential> {
        if !(0.0..=10.0).contains(&epsilon) {
            return Err(Error::InvalidParameter(format!(
                "smoothed_gaussian epsilon must be in [0, 10], got {epsilon}"
            )));
        }
        let family = Family::SmoothedGaussian { epsilon };
        let z = simpson(|t| (-raw_eval(family, t)).exp(), -50.0, 50.0, 40_000);
        let m = simpson(|t| t * (-raw_eval(family, t)).exp(), -50.0, 50.0, 40_000) / z;
        Ok(Potential {
            family,
            c_minus: 1.0,
            c_plus: 1.0 + epsilon,
            mean: m,
            log_norm: z.ln(),
        })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn eval(&self, t: f64) -> f64 {
        raw_eval(self.family, t) + self.log_norm
    }

    pub fn grad(&self, t: f64) -> f64 {
        match self.family {
            Family::Gaussian => t,
            Family::SmoothedGaussian { epsilon } => t + epsilon * t.tanh(),
        }
    }

    pub fn curv(&self, t: f64) -> f64 {
        match self.family {
            Family::Gaussian => 1.0,
            Family::SmoothedGaussian { epsilon } => {
                let th = t.tanh();
                1.0 + epsilon * (1.0 - th * th)
            }
        }
    }

    pub fn c_minus(&self) -> f64 {
        self.c_minus
    }

    pub fn c_plus(&self) -> f64 {
        self.c_plus
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Exact sample from the density exp(-V) by rejection from the Gaussian
    /// envelope that strong convexity provides: V(t) >= V(t0) + c_minus
    /// (t - t0)^2 / 2 at the minimizer t0, so N(t0, 1/c_minus) dominates.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        let t0 = self.minimizer();
        let v0 = raw_eval(self.family, t0);
        let sigma = 1.0 / self.c_minus.sqrt();
        for _ in 0..1_000_000 {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            let x = t0 + sigma * z;
            // log acceptance ratio; <= 0 by the quadratic minorant
            let log_acc = -(raw_eval(self.family, x) - v0) + 0.5 * self.c_minus * (x - t0) * (x - t0);
            let u: f64 = rng.random();
            if u.ln() < log_acc {
                return Ok(x);
            }
        }
        Err(Error::Internal(
            "rejection sampler exceeded 1e6 proposals".into(),
        ))
    }

    fn minimizer(&self) -> f64 {
        // both families are even with the minimum at 0; Newton from 0 keeps
        // the code path honest for future families
        let mut t = 0.0;
        for _ in 0..50 {
            let g = self.grad(t);
            if g.abs() < 1e-14 {
                break;
            }
            t -= g / self.curv(t);
        }
        t
    }
}

/// Composite Simpson rule with `n` (even) intervals.
pub(crate) fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    assert!(n >= 2 && n.is_multiple_of(2));
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Pair interaction V_{x,y}(eta_x + eta_y) on the sum of the endpoint masses.
#[derive(Debug, Clone, Copy)]
pub struct PairPotential {
    family: PairFamily,
    c2_minus: f64,
    c2_plus: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairFamily {
    /// V(s) = coupling * s^2, curvature 2 * coupling.
    Quadratic { coupling: f64 },
}

impl PairPotential {
    pub fn quadratic(coupling: f64) -> PairPotential {
        PairPotential {
            family: PairFamily::Quadratic { coupling },
            c2_minus: 2.0 * coupling,
            c2_plus: 2.0 * coupling,
        }
    }

    pub fn family(&self) -> PairFamily {
        self.family
    }

    pub fn eval(&self, s: f64) -> f64 {
        match self.family {
            PairFamily::Quadratic { coupling } => coupling * s * s,
        }
    }

    pub fn grad(&self, s: f64) -> f64 {
        match self.family {
            PairFamily::Quadratic { coupling } => 2.0 * coupling * s,
        }
    }

    pub fn curv(&self, _s: f64) -> f64 {
        match self.family {
            PairFamily::Quadratic { coupling } => 2.0 * coupling,
        }
    }

    pub fn c2_minus(&self) -> f64 {
        self.c2_minus
    }

    pub fn c2_plus(&self) -> f64 {
        self.c2_plus
    }
}

/// A graph together with its (translation-invariant) potential structure.
/// Without a pair potential the Gibbs measure is the product of the site
/// marginals.
#[derive(Debug, Clone)]
pub struct GibbsSpec {
    graph: Arc<Graph>,
    site: Potential,
    pair: Option<PairPotential>,
}

impl GibbsSpec {
    pub fn new(graph: Graph, site: Potential) -> GibbsSpec {
        GibbsSpec {
            graph: Arc::new(graph),
            site,
            pair: None,
        }
    }

    pub fn with_pair(mut self, pair: PairPotential) -> GibbsSpec {
        self.pair = Some(pair);
        self
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn site(&self) -> &Potential {
        &self.site
    }

    pub fn pair(&self) -> Option<&PairPotential> {
        self.pair.as_ref()
    }
}

/// Outcome of the order-preservation sufficient condition.
#[derive(Debug, Clone, Copy)]
pub struct OrderCondition {
    pub holds: bool,
    /// Left-hand margin inf_x inf_{y~x} [sum_{z~y} c2m] - c2p + c1m.
    pub margin: f64,
}

/// Sufficient condition for the shared-noise coupling to preserve the
/// coordinatewise partial order:
/// inf_x inf_{y~x} [sum_{z~y} C2-] - C2+ + C1- >= 0 and C2- >= 0.
pub fn order_preservation_condition(
    c1_minus: f64,
    c1_plus: f64,
    c2_minus: f64,
    c2_plus: f64,
    g: &Graph,
) -> Result<OrderCondition> {
    if c1_minus > c1_plus || c2_minus > c2_plus {
        return Err(Error::InvalidParameter(
            "curvature bounds must satisfy lower <= upper".into(),
        ));
    }
    let degrees = (0..g.n_vertices()).map(|x| g.degree(x));
    let inf_neighbor_sum = if c2_minus >= 0.0 {
        degrees.clone().min().unwrap() as f64 * c2_minus
    } else {
        degrees.clone().max().unwrap() as f64 * c2_minus
    };
    let margin = inf_neighbor_sum - c2_plus + c1_minus;
    Ok(OrderCondition {
        holds: margin >= 0.0 && c2_minus >= 0.0,
        margin,
    })
}
