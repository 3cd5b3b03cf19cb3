//! Closed-form and dense-linear-algebra ground truths at small scale.
//!
//! Everything here is an independent reference path: heat kernels by
//! symmetric eigendecomposition, stationary Gaussian covariances, the
//! intertwining identity checked by analytic differentiation, spectral gaps,
//! and the oriented-edge ("kite") representation with its compensated
//! return-probability difference.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{build_edge_graph, build_torus, laplacian, Graph};
use crate::potential::{GibbsSpec, PairPotential};

/// Threshold below which an eigenvalue counts as part of the conserved
/// (constant) mode rather than the decaying spectrum.
const NULL_SPACE_CUTOFF: f64 = 1e-9;

const MAX_VERTICES: usize = 2048;
const MAX_EDGE_NODES: usize = 4096;

/// A dense symmetric reference matrix with human-readable node labels.
#[derive(Debug, Clone)]
pub struct OracleMatrix {
    pub entries: DMatrix<f64>,
    pub labels: Vec<String>,
}

/// Symmetric eigendecomposition with eigenvalues sorted ascending.
fn sorted_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let n = m.nrows();
    let mut vectors = DMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

fn matrix_exp_neg(values: &[f64], vectors: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let weights = DVector::from_iterator(values.len(), values.iter().map(|&l| (-t * l).exp()));
    vectors * DMatrix::from_diagonal(&weights) * vectors.transpose()
}

/// exp(-t Laplacian): the transition matrix of the rate-1-per-edge simple
/// random walk, and the stationary mass covariance in the Gaussian case.
pub fn heat_kernel(g: &Graph, t: f64) -> Result<OracleMatrix> {
    if g.n_vertices() > MAX_VERTICES {
        return Err(Error::DimensionCap(format!(
            "heat_kernel supports at most {MAX_VERTICES} vertices, got {}",
            g.n_vertices()
        )));
    }
    if t.is_nan() || t < 0.0 {
        return Err(Error::InvalidParameter(format!("t must be >= 0, got {t}")));
    }
    let (values, vectors) = sorted_eigen(&laplacian(g));
    Ok(OracleMatrix {
        entries: matrix_exp_neg(&values, &vectors, t),
        labels: (0..g.n_vertices()).map(|x| x.to_string()).collect(),
    })
}

/// Exact Cov(eta_x; P_t eta_y) under the Gaussian product measure:
/// the heat kernel entry.
pub fn gaussian_covariance(g: &Graph, t: f64, x: usize, y: usize) -> Result<f64> {
    let hk = heat_kernel(g, t)?;
    Ok(hk.entries[(x, y)])
}

/// Test functions with analytic first and second derivatives, used by the
/// intertwining and integration-by-parts checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestFunction {
    /// g(eta) = eta_y
    Linear { y: usize },
    /// g(eta) = eta_y^2
    Quadratic { y: usize },
    /// g(eta) = eta_y eta_z, y != z
    Product { y: usize, z: usize },
}

impl TestFunction {
    fn validate(&self, g: &Graph) -> Result<()> {
        let n = g.n_vertices();
        match *self {
            TestFunction::Linear { y } | TestFunction::Quadratic { y } if y < n => Ok(()),
            TestFunction::Product { y, z } if y < n && z < n && y != z => Ok(()),
            _ => Err(Error::InvalidInput(format!(
                "test function {self:?} invalid on a graph with {n} vertices"
            ))),
        }
    }

    pub fn value(&self, masses: &[f64]) -> f64 {
        match *self {
            TestFunction::Linear { y } => masses[y],
            TestFunction::Quadratic { y } => masses[y] * masses[y],
            TestFunction::Product { y, z } => masses[y] * masses[z],
        }
    }

    /// d g / d eta_u
    pub fn grad(&self, masses: &[f64], u: usize) -> f64 {
        match *self {
            TestFunction::Linear { y } => f64::from(u == y),
            TestFunction::Quadratic { y } => {
                if u == y {
                    2.0 * masses[y]
                } else {
                    0.0
                }
            }
            TestFunction::Product { y, z } => {
                if u == y {
                    masses[z]
                } else if u == z {
                    masses[y]
                } else {
                    0.0
                }
            }
        }
    }

    /// d^2 g / d eta_u d eta_v; constant for these families.
    pub fn hess(&self, u: usize, v: usize) -> f64 {
        match *self {
            TestFunction::Linear { .. } => 0.0,
            TestFunction::Quadratic { y } => {
                if u == y && v == y {
                    2.0
                } else {
                    0.0
                }
            }
            TestFunction::Product { y, z } => {
                f64::from((u, v) == (y, z) || (u, v) == (z, y))
            }
        }
    }
}

/// The environment generator applied to a test function:
/// L_e g = sum_{b in B->} [ -d^2g/db^2 + dH/db * dg/db ].
fn generator_applied(spec: &GibbsSpec, f: &TestFunction, masses: &[f64]) -> f64 {
    let g = spec.graph();
    let site = spec.site();
    let mut acc = 0.0;
    for &(tail, head) in g.edges() {
        let dbg = f.grad(masses, tail) - f.grad(masses, head);
        let dbdbg = f.hess(tail, tail) - 2.0 * f.hess(tail, head) + f.hess(head, head);
        let dbh = site.grad(masses[tail]) - site.grad(masses[head]);
        acc += -dbdbg + dbh * dbg;
    }
    acc
}

/// Residual of the intertwining relation at one probe point:
///
///   d/d eta_x (L_e g) = L_e (dg/d eta_x) + V''(eta_x) sum_{y ~ x} (dg/d eta_x - dg/d eta_y),
///
/// the right-hand side being the joint generator acting on the derivative
/// field. Both sides are evaluated by analytic differentiation; the residual
/// is floating-point noise when the relation holds.
pub fn intertwining_residual(
    spec: &GibbsSpec,
    f: TestFunction,
    x: usize,
    env: &crate::dynamics::Environment,
) -> Result<f64> {
    let g = spec.graph();
    f.validate(g)?;
    if spec.pair().is_some() {
        return Err(Error::InvalidInput(
            "the intertwining check requires a site-only potential".into(),
        ));
    }
    if x >= g.n_vertices() || env.masses.len() != g.n_vertices() {
        return Err(Error::InvalidInput("probe point out of range".into()));
    }
    let masses = &env.masses;
    let site = spec.site();

    // d/dx (L_e g): third derivatives of g vanish for these families
    let mut lhs = 0.0;
    for &(tail, head) in g.edges() {
        let dbg = f.grad(masses, tail) - f.grad(masses, head);
        let dbh = site.grad(masses[tail]) - site.grad(masses[head]);
        let dx_dbh =
            site.curv(masses[x]) * (f64::from(tail == x) - f64::from(head == x));
        let dx_dbg = f.hess(x, tail) - f.hess(x, head);
        lhs += dx_dbh * dbg + dbh * dx_dbg;
    }

    // L_e applied to the (linear) derivative field h = dg/d eta_x ...
    let mut rhs = 0.0;
    for &(tail, head) in g.edges() {
        let dbh_field = f.hess(x, tail) - f.hess(x, head);
        let dbh = site.grad(masses[tail]) - site.grad(masses[head]);
        rhs += dbh * dbh_field;
    }
    // ... plus the walk part at rate V''(eta_x) toward each neighbor
    let curv = site.curv(masses[x]);
    for &y in g.neighbors(x) {
        rhs += curv * (f.grad(masses, x) - f.grad(masses, y));
    }

    Ok((lhs - rhs).abs())
}

/// Monte Carlo check of the integration-by-parts formula
/// E[f L_e g] = E[sum_{b in B->} df/db dg/db] under the product measure.
/// Returns the mean difference of the two integrands and its standard error.
pub fn integration_by_parts_check<R: Rng + ?Sized>(
    spec: &GibbsSpec,
    f: TestFunction,
    g_fun: TestFunction,
    n_samples: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    let g = spec.graph();
    f.validate(g)?;
    g_fun.validate(g)?;
    if spec.pair().is_some() {
        return Err(Error::InvalidInput(
            "the integration-by-parts check samples the product measure".into(),
        ));
    }
    let diffs: Vec<f64> = (0..n_samples)
        .map(|_| -> Result<f64> {
            let env = crate::dynamics::sample_environment(spec, rng)?;
            let masses = &env.masses;
            let lhs = f.value(masses) * generator_applied(spec, &g_fun, masses);
            let rhs: f64 = g
                .edges()
                .iter()
                .map(|&(t, h)| {
                    (f.grad(masses, t) - f.grad(masses, h))
                        * (g_fun.grad(masses, t) - g_fun.grad(masses, h))
                })
                .sum();
            Ok(lhs - rhs)
        })
        .collect::<Result<_>>()?;
    let est = crate::stats::mean_estimate(&diffs, "ibp_residual", 0.0)?;
    Ok((est.value, est.stderr))
}

/// One point of the compensated kite curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KitePoint {
    pub t: f64,
    /// c(t) = e^{kappa t} ( p_t(b, b) - p_t(b, reversal(b)) )
    pub c: f64,
}

/// Compensated return-probability difference of the simple random walk on
/// the oriented kite graph of the side x side torus, at a fixed reference
/// edge. The compensation constant is read off the constructed edge graph
/// (4 on the 2d torus).
pub fn kite_proposition_check(side: usize, t_grid: &[f64]) -> Result<Vec<KitePoint>> {
    if side < 8 {
        return Err(Error::InvalidParameter(format!(
            "kite check needs side >= 8, got {side}"
        )));
    }
    let guard = side as f64 / 8.0;
    for &t in t_grid {
        if !(0.0..=guard).contains(&t) {
            return Err(Error::InvalidParameter(format!(
                "t = {t} outside the wraparound guard [0, {guard}]"
            )));
        }
    }
    // 2|E| = 4 side^2 nodes on the 2d torus
    if 4 * side * side > MAX_EDGE_NODES {
        return Err(Error::DimensionCap(format!(
            "kite graph would have {} nodes, cap is {MAX_EDGE_NODES}",
            4 * side * side
        )));
    }
    let g = build_torus(side, 2)?;
    let eg = build_edge_graph(&g);
    let kappa = eg.compensation(0);
    // vertex transitivity forces a single compensation constant
    if (0..eg.n_nodes()).any(|i| eg.compensation(i) != kappa) {
        return Err(Error::Internal(
            "compensation constant is not uniform on the torus".into(),
        ));
    }
    let (values, vectors) = sorted_eigen(&eg.kite_laplacian());
    // reference edge: the canonical orientation of the first edge at the origin
    let b = eg.canonical_index(0);
    let b_rev = eg.reversal_index(b);
    let row_b = vectors.row(b).clone_owned();
    let row_rev = vectors.row(b_rev).clone_owned();
    Ok(t_grid
        .iter()
        .map(|&t| {
            let diff: f64 = (0..values.len())
                .map(|k| (-t * values[k]).exp() * row_b[k] * (row_b[k] - row_rev[k]))
                .sum();
            KitePoint {
                t,
                c: (kappa * t).exp() * diff,
            }
        })
        .collect())
}

/// Spectral gaps of the environment process and of the walk, both restricted
/// to the orthogonal complement of the conserved total-mass direction. Exact
/// for the Gaussian branch, where both generators reduce to the graph
/// Laplacian.
#[derive(Debug, Clone)]
pub struct SpectralReport {
    pub lambda_env: f64,
    pub lambda_walk: f64,
    pub method_env: String,
    pub method_walk: String,
}

pub fn spectral_report(g: &Graph) -> Result<SpectralReport> {
    if g.n_vertices() > MAX_VERTICES {
        return Err(Error::DimensionCap(format!(
            "spectral_report supports at most {MAX_VERTICES} vertices"
        )));
    }
    let (values, _) = sorted_eigen(&laplacian(g));
    let lambda = values
        .iter()
        .copied()
        .find(|&l| l > NULL_SPACE_CUTOFF)
        .ok_or_else(|| Error::Internal("no nonzero Laplacian eigenvalue found".into()))?;
    let report = SpectralReport {
        lambda_env: lambda,
        lambda_walk: lambda,
        method_env: "laplacian eigendecomposition, conserved mode removed".into(),
        method_walk: "gaussian walk generator equals the laplacian".into(),
    };
    debug_assert!(report.lambda_env >= report.lambda_walk);
    Ok(report)
}

/// Stationary covariance matrix for the Gaussian site potential with a
/// quadratic pair interaction: the inverse of the Hessian
/// Q = I + 2a (D + A), where D is the degree matrix and A the adjacency.
pub fn gaussian_pair_covariance(g: &Graph, pair: &PairPotential) -> Result<DMatrix<f64>> {
    let crate::potential::PairFamily::Quadratic { coupling } = pair.family();
    let n = g.n_vertices();
    let mut q = DMatrix::identity(n, n);
    for x in 0..n {
        q[(x, x)] += 2.0 * coupling * g.degree(x) as f64;
    }
    for &(t, h) in g.edges() {
        q[(t, h)] += 2.0 * coupling;
        q[(h, t)] += 2.0 * coupling;
    }
    q.try_inverse()
        .ok_or_else(|| Error::InvalidInput("pair Hessian is singular".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{sample_environment, Environment};
    use crate::graph::{build_cycle, build_path};
    use crate::potential::Potential;
    use crate::rng::{RngPlan, Substream};

    fn gaussian_cycle(n: usize) -> GibbsSpec {
        GibbsSpec::new(build_cycle(n).unwrap(), Potential::gaussian())
    }

    #[test]
    fn heat_kernel_identity_at_zero() {
        let g = build_cycle(6).unwrap();
        let hk = heat_kernel(&g, 0.0).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let expect = f64::from(i == j);
                assert!((hk.entries[(i, j)] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn heat_kernel_path_2_closed_form() {
        let g = build_path(2).unwrap();
        for t in [0.1, 0.5, 1.0, 3.0] {
            let hk = heat_kernel(&g, t).unwrap();
            let expect = 0.5 * (1.0 + (-2.0 * t).exp());
            assert!((hk.entries[(0, 0)] - expect).abs() < 1e-13);
        }
    }

    #[test]
    fn heat_kernel_rows_are_probabilities() {
        let g = build_cycle(8).unwrap();
        let hk = heat_kernel(&g, 0.7).unwrap();
        for i in 0..8 {
            let mut row_sum = 0.0;
            for j in 0..8 {
                assert!(hk.entries[(i, j)] >= -1e-12);
                row_sum += hk.entries[(i, j)];
            }
            assert!((row_sum - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn heat_kernel_semigroup_property() {
        let g = build_cycle(7).unwrap();
        let a = heat_kernel(&g, 0.4).unwrap().entries;
        let b = heat_kernel(&g, 0.9).unwrap().entries;
        let ab = heat_kernel(&g, 1.3).unwrap().entries;
        let prod = &a * &b;
        assert!((prod - ab).amax() < 1e-9);
    }

    #[test]
    fn heat_kernel_long_time_uniform() {
        let g = build_cycle(8).unwrap();
        let gap = spectral_report(&g).unwrap().lambda_env;
        let hk = heat_kernel(&g, 50.0 / gap).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                assert!((hk.entries[(i, j)] - 0.125).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn gaussian_covariance_at_zero() {
        let g = build_cycle(8).unwrap();
        assert!((gaussian_covariance(&g, 0.0, 3, 3).unwrap() - 1.0).abs() < 1e-12);
        assert!(gaussian_covariance(&g, 0.0, 3, 4).unwrap().abs() < 1e-12);
        // symmetric in (x, y)
        let a = gaussian_covariance(&g, 0.8, 1, 5).unwrap();
        let b = gaussian_covariance(&g, 0.8, 5, 1).unwrap();
        assert!((a - b).abs() < 1e-13);
    }

    #[test]
    fn intertwining_residual_is_numerical_noise() {
        let plan = RngPlan::new(123);
        let mut rng = plan.stream(0, Substream::Probe);
        for spec in [
            gaussian_cycle(6),
            GibbsSpec::new(
                build_cycle(6).unwrap(),
                Potential::smoothed_gaussian(0.5).unwrap(),
            ),
        ] {
            for probe in 0..100 {
                let env = sample_environment(&spec, &mut rng).unwrap();
                let x = probe % 6;
                for f in [
                    TestFunction::Linear { y: (probe + 1) % 6 },
                    TestFunction::Quadratic { y: (probe + 2) % 6 },
                    TestFunction::Product {
                        y: probe % 6,
                        z: (probe + 3) % 6,
                    },
                ] {
                    let r = intertwining_residual(&spec, f, x, &env).unwrap();
                    assert!(r <= 1e-8, "residual {r} for {f:?} at x = {x}");
                }
            }
        }
    }

    #[test]
    fn intertwining_linear_residual_is_tight() {
        let spec = gaussian_cycle(6);
        let env = Environment::new(vec![0.3, -1.2, 0.7, 2.0, -0.4, 0.1]);
        let r = intertwining_residual(&spec, TestFunction::Linear { y: 2 }, 4, &env).unwrap();
        assert!(r <= 1e-10, "linear residual {r}");
    }

    #[test]
    fn constant_like_degenerate_product_rejected() {
        let spec = gaussian_cycle(6);
        let env = Environment::constant(6, 0.0);
        assert!(intertwining_residual(
            &spec,
            TestFunction::Product { y: 2, z: 2 },
            0,
            &env
        )
        .is_err());
    }

    #[test]
    fn integration_by_parts_holds() {
        let spec = GibbsSpec::new(
            build_cycle(6).unwrap(),
            Potential::smoothed_gaussian(0.5).unwrap(),
        );
        let plan = RngPlan::new(321);
        let mut rng = plan.stream(0, Substream::Probe);
        let (diff, stderr) = integration_by_parts_check(
            &spec,
            TestFunction::Quadratic { y: 1 },
            TestFunction::Product { y: 0, z: 3 },
            20_000,
            &mut rng,
        )
        .unwrap();
        assert!(diff.abs() <= 3.0 * stderr, "diff {diff} stderr {stderr}");
    }

    #[test]
    fn spectral_report_cycle_8() {
        let g = build_cycle(8).unwrap();
        let r = spectral_report(&g).unwrap();
        let expect = 2.0 - 2.0 * (2.0 * std::f64::consts::PI / 8.0).cos();
        assert!((r.lambda_env - expect).abs() < 1e-12);
        assert_eq!(r.lambda_env, r.lambda_walk);
    }

    #[test]
    fn kite_curve_starts_at_one() {
        let pts = kite_proposition_check(8, &[0.0, 0.5, 1.0]).unwrap();
        assert!((pts[0].c - 1.0).abs() < 1e-10, "c(0) = {}", pts[0].c);
        // strictly decreasing toward the stationary value
        assert!(pts[1].c > pts[2].c);
        assert!(pts[2].c > 0.5);
    }

    #[test]
    fn kite_guard_and_caps() {
        assert!(kite_proposition_check(4, &[0.1]).is_err());
        assert!(kite_proposition_check(8, &[2.0]).is_err()); // beyond side/8
        assert!(matches!(
            kite_proposition_check(33, &[0.1]),
            Err(Error::DimensionCap(_))
        ));
    }

    #[test]
    fn heat_kernel_dimension_cap() {
        let g = crate::graph::build_path(2049).unwrap();
        assert!(matches!(heat_kernel(&g, 0.1), Err(Error::DimensionCap(_))));
    }

    #[test]
    fn corollary_bound_holds_in_the_oracle() {
        // f = eta_0 + eta_1 on the gaussian cycle: the exact
        // Cov(f; P_t f) = sum of four heat-kernel entries is dominated by
        // ||f||^2 max_x p_t(x, x) = 4 p_t(0, 0)
        let g = build_cycle(8).unwrap();
        for t in [0.25, 0.5, 1.0, 2.0] {
            let hk = heat_kernel(&g, t).unwrap();
            let exact: f64 = [(0, 0), (0, 1), (1, 0), (1, 1)]
                .iter()
                .map(|&(i, j)| hk.entries[(i, j)])
                .sum();
            let bound = 4.0 * hk.entries[(0, 0)];
            assert!(exact <= bound + 1e-12, "t={t}: {exact} vs {bound}");
        }
    }

    #[test]
    fn pair_covariance_neighbors_negative() {
        let g = build_cycle(8).unwrap();
        let cov = gaussian_pair_covariance(&g, &PairPotential::quadratic(0.25)).unwrap();
        assert!(cov[(0, 1)] < 0.0, "Cov(eta_0, eta_1) = {}", cov[(0, 1)]);
        assert!(cov[(0, 0)] > 0.0);
        // perturbative: Cov(eta_0, eta_1) = -2a + O(a^2)
        for a in [0.01, 0.02] {
            let c = gaussian_pair_covariance(&g, &PairPotential::quadratic(a)).unwrap()[(0, 1)];
            assert!(c < 0.0);
            assert!((c + 2.0 * a).abs() <= 16.0 * a * a, "a = {a}, cov = {c}");
        }
    }
}
