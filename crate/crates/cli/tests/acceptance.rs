//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//!
//! Heavy replica ensembles are shared between criteria through `OnceLock`
//! statics; sharing never weakens a check because every ensemble is already
//! common-random-number clean (fixed seed, counter-derived streams).

use std::sync::OnceLock;
use std::time::Instant;

use glhs_core::dynamics::IntegratorConfig;
use glhs_core::estimators::{
    decay_rate_fit, equality_from_set, fkg_from_set, negative_correlation_check,
    order_preservation_check, sample_replicas, sandwich_from_set, LipschitzSpec, Observable,
    ReplicaSet,
};
use glhs_core::graph::{build_cycle, build_edge_graph, build_torus};
use glhs_core::oracle::{
    gaussian_covariance, gaussian_pair_covariance, intertwining_residual, kite_proposition_check,
    spectral_report, TestFunction,
};
use glhs_core::potential::{GibbsSpec, PairPotential, Potential};
use glhs_core::rng::{RngPlan, Substream};
use glhs_core::stats::Estimate;

const SEED: u64 = 42;

fn report(criterion: &str, status: &str, detail: &str) {
    println!("ACCEPTANCE {criterion}: {status} - {detail}");
}

fn gaussian_cycle8() -> GibbsSpec {
    GibbsSpec::new(build_cycle(8).unwrap(), Potential::gaussian())
}

fn smoothed_cycle8() -> GibbsSpec {
    GibbsSpec::new(
        build_cycle(8).unwrap(),
        Potential::smoothed_gaussian(0.5).unwrap(),
    )
}

/// Gaussian cycle-8 environment ensemble at t in {0.25, 0.5, 1, 2},
/// 2e5 replicas; shared by the equality and FKG criteria.
fn gaussian_ensemble() -> &'static ReplicaSet {
    static SET: OnceLock<ReplicaSet> = OnceLock::new();
    SET.get_or_init(|| {
        let cfg = IntegratorConfig::new(1e-3, 2.0, vec![0.25, 0.5, 1.0, 2.0], SEED);
        let t0 = Instant::now();
        let set = sample_replicas(&gaussian_cycle8(), &cfg, 200_000, None).unwrap();
        // budget: under two minutes single-threaded per t value
        assert!(
            t0.elapsed().as_secs_f64() < 120.0 * 4.0,
            "gaussian ensemble exceeded the runtime budget"
        );
        set
    })
}

/// Smoothed-potential joint (environment + walker) ensemble at
/// t in {0, 0.5, 1}, walker started at 0, 2e5 replicas; shared by the
/// equality and sandwich criteria.
fn smoothed_joint_ensemble() -> &'static ReplicaSet {
    static SET: OnceLock<ReplicaSet> = OnceLock::new();
    SET.get_or_init(|| {
        let cfg = IntegratorConfig::new(1e-3, 1.0, vec![0.0, 0.5, 1.0], SEED);
        sample_replicas(&smoothed_cycle8(), &cfg, 200_000, Some(0)).unwrap()
    })
}

#[test]
fn a01_gaussian_equality_matches_heat_kernel() {
    let spec = gaussian_cycle8();
    let set = gaussian_ensemble();
    let mut worst = 0.0f64;
    for &t in &[0.25, 0.5, 1.0, 2.0] {
        for &(x, y) in &[(0usize, 0usize), (0, 1), (0, 4)] {
            let est = set
                .cov_estimate(Observable::Mass, spec.site(), x, y, t)
                .unwrap();
            let exact = gaussian_covariance(spec.graph(), t, x, y).unwrap();
            let sigmas = (est.value - exact).abs() / est.stderr;
            worst = worst.max(sigmas);
            assert!(
                sigmas <= 3.0,
                "Cov(eta_{x}; P_{t} eta_{y}) = {} vs exact {exact} ({sigmas:.2} sigma)",
                est.value
            );
        }
    }
    report(
        "01 gaussian equality",
        "PASS",
        &format!("12 grid points within 3 sigma of exp(-t Laplacian); worst {worst:.2} sigma"),
    );
}

#[test]
fn a02_walker_equality_smoothed() {
    let spec = smoothed_cycle8();
    let set = smoothed_joint_ensemble();
    let mut worst = f64::INFINITY;
    for &t in &[0.5, 1.0] {
        for &y in &[0usize, 1] {
            let v = equality_from_set(set, &spec, 0, y, t).unwrap();
            worst = worst.min(v.margin_in_sigmas);
            assert!(
                v.pass,
                "equality violated at (0,{y}) t={t}: margin {} sigma",
                v.margin_in_sigmas
            );
        }
    }
    report(
        "02 walker equality",
        "PASS",
        &format!("|Cov(V'(eta_x); P_t eta_y) - W| <= 3 sigma; smallest margin {worst:.2} sigma"),
    );
}

#[test]
fn a03_covariance_sandwich_smoothed() {
    let spec = smoothed_cycle8();
    let set = smoothed_joint_ensemble();
    let mut worst = f64::INFINITY;
    for &t in &[0.5, 1.0] {
        for &y in &[0usize, 1] {
            let v = sandwich_from_set(set, &spec, 0, y, t).unwrap();
            worst = worst.min(v.margin_in_sigmas);
            assert!(
                v.pass,
                "sandwich violated at (0,{y}) t={t}: margin {} sigma",
                v.margin_in_sigmas
            );
        }
    }
    // t = 0 diagonal: 1/c_plus - 3 sigma <= Var(eta_0) <= 1/c_minus + 3 sigma
    let var = set
        .cov_estimate(Observable::Mass, spec.site(), 0, 0, 0.0)
        .unwrap();
    let lo = 1.0 / spec.site().c_plus() - 3.0 * var.stderr;
    let hi = 1.0 / spec.site().c_minus() + 3.0 * var.stderr;
    assert!(
        var.value >= lo && var.value <= hi,
        "Var(eta_0) = {} outside [{lo}, {hi}]",
        var.value
    );
    report(
        "03 covariance sandwich",
        "PASS",
        &format!(
            "bounds hold at t in {{0.5, 1}}; smallest margin {worst:.2} sigma; \
             Var(eta_0) = {:.4} in [1/1.5, 1] band",
            var.value
        ),
    );
}

#[test]
fn a04_fkg_increasing_functionals() {
    let set = gaussian_ensemble();
    let plan = RngPlan::new(SEED);
    let n_vertices = 8;
    let mut worst = f64::INFINITY;
    for i in 0..10u64 {
        let mut rng = plan.stream(i, Substream::Functional);
        let f = random_increasing(&mut rng, n_vertices);
        let g = random_increasing(&mut rng, n_vertices);
        for &t in &[0.5, 1.0] {
            let v = fkg_from_set(set, &f, &g, t, "fkg_cov").unwrap();
            worst = worst.min(v.margin_in_sigmas);
            assert!(
                v.pass,
                "FKG violated for functional pair {i} at t={t}: margin {}",
                v.margin_in_sigmas
            );
        }
    }
    report(
        "04 fkg positivity",
        "PASS",
        &format!("20 increasing-pair covariances >= -3 sigma; smallest margin {worst:.2} sigma"),
    );
}

fn random_increasing<R: rand::Rng>(rng: &mut R, n_vertices: usize) -> LipschitzSpec {
    let k = rng.random_range(1..=3usize);
    let mut coeffs: Vec<(usize, f64)> = Vec::new();
    while coeffs.len() < k {
        let v = rng.random_range(0..n_vertices);
        if coeffs.iter().all(|&(u, _)| u != v) {
            coeffs.push((v, 1.0 - rng.random::<f64>()));
        }
    }
    LipschitzSpec::linear(coeffs).unwrap()
}

#[test]
fn a05_order_preservation_both_families() {
    let dt = 1e-3;
    let cfg = IntegratorConfig::new(dt, 2.0, vec![0.5, 1.0, 2.0], SEED);
    for (name, site) in [
        ("gaussian", Potential::gaussian()),
        ("smoothed(0.5)", Potential::smoothed_gaussian(0.5).unwrap()),
    ] {
        let spec = GibbsSpec::new(build_cycle(8).unwrap(), site);
        let run = order_preservation_check(&spec, &cfg, 1_000, 1.0).unwrap();
        assert!(
            run.min_difference >= -10.0 * dt,
            "{name}: min difference {} below -10 dt",
            run.min_difference
        );
        assert!(
            run.max_phi <= 1e-4,
            "{name}: order functional reached {}",
            run.max_phi
        );
    }
    report(
        "05 order preservation",
        "PASS",
        "1000 shared-noise couplings per family; differences never below -10 dt, Phi <= 1e-4",
    );
}

#[test]
fn a06_kite_compensation_constant() {
    let eg = build_edge_graph(&build_torus(16, 2).unwrap());
    for i in 0..eg.n_nodes() {
        assert_eq!(eg.compensation(i), 4.0, "node {i}");
        assert_eq!(eg.kite_neighbors(i).len(), 6, "node {i}");
    }
    report(
        "06a kite compensation",
        "PASS",
        "side-16 torus: kite degree 6 and compensation 4 at all 1024 nodes",
    );
}

#[test]
fn a06_kite_proposition_constancy() {
    let t0 = Instant::now();
    let grid = [0.1, 0.25, 0.5, 1.0, 1.5, 2.0];
    let pts = kite_proposition_check(16, &grid).unwrap();
    let elapsed = t0.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "kite check took {elapsed:.1} s, budget 60 s");

    let cs: Vec<f64> = pts.iter().map(|p| p.c).collect();
    let mean = cs.iter().sum::<f64>() / cs.len() as f64;
    let drift = (cs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - cs.iter().cloned().fold(f64::INFINITY, f64::min))
        / mean.abs();
    let max_dev = cs.iter().map(|c| (c - 0.5).abs()).fold(0.0f64, f64::max);

    let curve: Vec<String> = pts.iter().map(|p| format!("c({}) = {:.6}", p.t, p.c)).collect();
    let detail = format!(
        "measured curve {{{}}}; relative drift {drift:.3}, max |c - 0.5| = {max_dev:.3} \
         (tolerance 1e-3 each). The compensated difference equals \
         (1 - R_eff) + <u_b, exp(-t Laplacian) pinv(Laplacian) u_b>: it starts at 1, \
         decays polynomially, and reaches 1/2 only as t -> infinity, so the \
         constant-1/2 claim cannot hold on this grid under any sign convention \
         (c(t) >= exp(-2 t) by Jensen).",
        curve.join(", ")
    );
    let pass = drift <= 1e-3 && max_dev <= 1e-3;
    report(
        "06 kite proposition",
        if pass { "PASS" } else { "FAIL" },
        &detail,
    );
    assert!(drift <= 1e-3, "relative drift {drift} exceeds 1e-3; {detail}");
    assert!(max_dev <= 1e-3, "max |c - 0.5| = {max_dev} exceeds 1e-3; {detail}");
}

#[test]
fn a07_intertwining_residuals() {
    let plan = RngPlan::new(SEED);
    let mut rng = plan.stream(0, Substream::Probe);
    let mut worst = 0.0f64;
    for site in [
        Potential::gaussian(),
        Potential::smoothed_gaussian(0.5).unwrap(),
    ] {
        let spec = GibbsSpec::new(build_cycle(6).unwrap(), site);
        for probe in 0..100usize {
            let env = glhs_core::dynamics::sample_environment(&spec, &mut rng).unwrap();
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
                worst = worst.max(r);
                assert!(r <= 1e-8, "residual {r} at probe {probe}, {f:?}");
            }
        }
    }
    report(
        "07 intertwining",
        "PASS",
        &format!("600 probes across both families and three test functions; worst residual {worst:.2e}"),
    );
}

#[test]
fn a08_spectral_gap_exact_and_fitted() {
    // exact circulant gaps
    let mut ratio_64 = 0.0;
    for n in [16usize, 32, 64] {
        let rep = spectral_report(&build_cycle(n).unwrap()).unwrap();
        let exact = 2.0 - 2.0 * (2.0 * std::f64::consts::PI / n as f64).cos();
        assert!(
            (rep.lambda_env - exact).abs() <= 1e-12,
            "n={n}: {} vs {exact}",
            rep.lambda_env
        );
        assert_eq!(rep.lambda_env, rep.lambda_walk, "gaussian case: equal gaps");
        if n == 64 {
            ratio_64 = rep.lambda_env / ((2.0 * std::f64::consts::PI).powi(2) / (n * n) as f64);
        }
    }
    assert!(
        (ratio_64 - 1.0).abs() <= 0.05,
        "gap ratio to (2 pi)^2/n^2 at n=64: {ratio_64}"
    );

    // Monte Carlo decay-rate fit on the cycle of 8. A late window keeps the
    // faster modes' contamination of the slope near 3%, and the replica
    // count keeps the slope noise of the same size, well inside the 10% band.
    let spec = gaussian_cycle8();
    let ts = [2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0];
    let cfg = IntegratorConfig::new(4e-3, 5.0, ts.to_vec(), SEED);
    let set = sample_replicas(&spec, &cfg, 1_200_000, None).unwrap();
    let series: Vec<(f64, Estimate)> = ts
        .iter()
        .map(|&t| {
            (
                t,
                set.cov_estimate(Observable::Mass, spec.site(), 0, 0, t)
                    .unwrap(),
            )
        })
        .collect();
    let fitted = decay_rate_fit(&series, 1.0 / 8.0).unwrap();
    let exact_gap = spectral_report(spec.graph()).unwrap().lambda_env;
    let rel_err = (fitted - exact_gap).abs() / exact_gap;
    assert!(
        rel_err <= 0.10,
        "fitted rate {fitted} vs exact gap {exact_gap}: {:.1}% error",
        100.0 * rel_err
    );
    report(
        "08 spectral gap",
        "PASS",
        &format!(
            "circulant gaps exact to 1e-12; ratio at n=64 {ratio_64:.5}; \
             MC decay fit {fitted:.4} vs {exact_gap:.4} ({:.1}% error)",
            100.0 * rel_err
        ),
    );
}

#[test]
fn a09_negative_correlation_with_pair_potential() {
    let coupling = 0.25;
    let spec = gaussian_cycle8().with_pair(PairPotential::quadratic(coupling));
    let cfg = IntegratorConfig::new(2e-3, 0.0, vec![], SEED);
    let v = negative_correlation_check(&spec, &cfg, 0, 1, 20_000).unwrap();
    assert!(
        v.pass,
        "E[eta_0 eta_1] + 3 sigma not below 0: margin {}",
        v.margin_in_sigmas
    );
    let oracle = v.oracle.expect("gaussian site has the dense-inverse oracle");
    assert!(oracle < 0.0, "oracle sign");

    // stronger agreement check against the measure the conservative dynamics
    // actually reaches: the total-mass mode is frozen at its product-measure
    // law, which shifts the moment by (1 - 1/q0)/n on the constant mode
    let g = spec.graph();
    let q_inv = gaussian_pair_covariance(g, spec.pair().unwrap()).unwrap();
    let q0 = 1.0 + 4.0 * coupling * g.degree_bound() as f64;
    let reachable = q_inv[(0, 1)] + (1.0 - 1.0 / q0) / g.n_vertices() as f64;
    let est = &v.inputs[0];
    assert!(
        (est.value - reachable).abs() <= 3.0 * est.stderr,
        "moment {} vs conditioned-measure value {reachable} (3 sigma = {})",
        est.value,
        3.0 * est.stderr
    );
    report(
        "09 negative correlation",
        "PASS",
        &format!(
            "E[eta_0 eta_1] = {:.4} + 3 sigma < 0 (margin {:.1} sigma); \
             unconditioned oracle {oracle:.4} < 0; conditioned-measure value {reachable:.4} \
             matched within 3 sigma",
            est.value, v.margin_in_sigmas
        ),
    );
}

#[test]
fn a10_determinism_and_schema() {
    let bin = env!("CARGO_BIN_EXE_glhs");
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for run in 0..2 {
        let prefix = dir.path().join(format!("run{run}"));
        let status = std::process::Command::new(bin)
            .args(["all", "--seed", "42", "--out"])
            .arg(&prefix)
            .env_remove("GLHS_SEED")
            .stdout(std::process::Stdio::null())
            .status()
            .unwrap();
        // the kite verdicts fail (see a06), so `all` exits 1
        assert_eq!(status.code(), Some(1), "run {run} exit code");
        let csv = std::fs::read(format!("{}.csv", prefix.display())).unwrap();
        let summary = std::fs::read(format!("{}.summary.json", prefix.display())).unwrap();
        outputs.push((csv, summary));
    }
    assert_eq!(outputs[0].0, outputs[1].0, "CSV files differ between runs");
    assert_eq!(outputs[0].1, outputs[1].1, "summaries differ between runs");

    let text = String::from_utf8(outputs[0].0.clone()).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "experiment,graph,side,dim,potential,epsilon,t,x,y,quantity,value,stderr,replicas,\
         oracle,verdict,margin_sigmas,seed"
    );
    let body: Vec<&str> = lines.collect();
    assert!(!body.is_empty());
    for line in &body {
        assert_eq!(line.split(',').count(), 17, "column count in {line:?}");
    }
    assert!(text.ends_with('\n'), "line-feed terminated");
    report(
        "10 determinism and schema",
        "PASS",
        &format!(
            "two `glhs all --seed 42` runs bitwise identical ({} rows); schema matches",
            body.len()
        ),
    );
}
