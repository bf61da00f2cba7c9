//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on failure.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Discrete, Hypergeometric};

use spillbound::design::DesignDescriptor;
use spillbound::estimands::{
    expected_matched_weights, matched_contrast_weights, regression_weights, Estimand, RegressorSpec, Term,
};
use spillbound::exposure::{build_propensity_classes, ClassKey};
use spillbound::intervals::{
    analyze, tau1_half_width, AnalysisSpec, BetaAdjBounds, IntervalConfig, ThetaConstraint,
};
use spillbound::moments::{analytic_tau1_moments, bias_bound, mc_weight_moments};
use spillbound::sim::{
    adversarial_coverage, coverage_study, gen_generic, BetaAdjProcedure, CoverageReport, EffectModel,
    GeneralProcedure, GenericPopulation, GenericSpec, NetworkModel, Population, Tau1Procedure, ThetaModel,
};
use spillbound::solver::{brute_force, objective, solve_bnb, solve_relaxed};
use spillbound::split::{split, verify_split};
use spillbound::{
    expand_aggregate, AggregateTable, BoundProblem, ExperimentData, LinearConstraint, Network, Sense,
    SolveStatus, SolverConfig, SplitMethod, WeightScheme,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn random_psd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let cols = rng.random_range(1..=n + 2);
    let b = DMatrix::from_fn(n, cols, |_, _| rng.random::<f64>() * 2.0 - 1.0);
    let q = &b * b.transpose();
    let m = q.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    q / m
}

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let table = AggregateTable::load(&data_dir().join("cholera_table4.csv")).unwrap();
    let data = expand_aggregate(&table).unwrap();
    let spec = AnalysisSpec::load(&data_dir().join("cholera.json")).unwrap();
    let config = IntervalConfig {
        level: 0.90,
        constraints: vec![ThetaConstraint::MeanCap { cap: 0.007 }],
        ..IntervalConfig::default()
    };
    let results = analyze(&spec, &data, &config).unwrap();
    let elapsed = started.elapsed().as_secs_f64();
    let targets = [(-1.3, (-3.5, 0.9)), (-2.2, (-4.4, 0.0)), (-3.5, (-5.6, -1.4))];
    let mut pass = elapsed < 5.0;
    let mut parts = Vec::new();
    for (r, (pt, pi)) in results.iter().zip(targets) {
        let p = 1000.0 * r.point_estimate;
        let (lo, hi) = (1000.0 * r.interval.0, 1000.0 * r.interval.1);
        pass &= (p - pt).abs() <= 0.05;
        let soft = (lo - pi.0).abs() <= 0.5 && (hi - pi.1).abs() <= 0.5;
        parts.push(format!("{} {p:.3} PI [{lo:.2}, {hi:.2}]{}", r.estimand, if soft { "" } else { " (soft PI target missed)" }));
    }
    outcome(pass, format!("{}; {elapsed:.2}s", parts.join("; ")))
}

fn criterion_2() -> Outcome {
    // z_{0.975} to full double precision.
    let z = 1.959_963_984_540_054;
    let expected = z * ((100.0f64 / 99.0) * (100.0 / (50.0 * 50.0)) * 0.25).sqrt();
    let got = tau1_half_width(100, 50, 0.95, None).unwrap();
    let cap = 0.007;
    let expected_cap = z * ((100.0f64 / 99.0) * (100.0 / 2500.0) * cap * (1.0 - cap)).sqrt();
    let got_cap = tau1_half_width(100, 50, 0.95, Some(cap)).unwrap();
    let e1 = (got - expected).abs();
    let e2 = (got_cap - expected_cap).abs();
    outcome(
        e1 <= 1e-12 && e2 <= 1e-12 && (got - 0.1970).abs() < 5e-5,
        format!("half-width {got:.6} (err {e1:.1e}), capped {got_cap:.6} (err {e2:.1e})"),
    )
}

fn criterion_3() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let cfg = SolverConfig {
        node_budget: 10_000_000,
        time_budget: None,
        ..SolverConfig::default()
    };
    let zs = [0.0, 1.645, 1.96];
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    let mut statuses = 0;
    for case in 0..200 {
        let n = rng.random_range(2..=14);
        let bar_w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let q = random_psd(n, &mut rng) * rng.random_range(0.05..2.0);
        let z = zs[case % 3];
        let sense = if rng.random::<bool>() { Sense::Max } else { Sense::Min };
        let mut p = BoundProblem::binary(bar_w, q, z, sense).unwrap();
        if case % 2 == 1 {
            let cap = rng.random_range(0.2..0.8);
            p = p
                .with_constraints(vec![LinearConstraint::mean_cap(&vec![1.0; n], cap, n)])
                .unwrap();
        }
        let p = p.with_split(SplitMethod::ALL[(case / 3) % 3]).unwrap();
        let bf = brute_force(&p).unwrap();
        let bb = solve_bnb(&p, &cfg).unwrap();
        let rx = solve_relaxed(&p).unwrap();
        let err = (bb.value - bf.value).abs();
        worst = worst.max(err);
        if bb.status != SolveStatus::Exact {
            statuses += 1;
        }
        let dominated = match sense {
            Sense::Max => rx.value >= bf.value - 1e-12 * (1.0 + bf.value.abs()),
            Sense::Min => rx.value <= bf.value + 1e-12 * (1.0 + bf.value.abs()),
        };
        if err > 1e-9 || !dominated {
            failures.push(case);
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    outcome(
        failures.is_empty() && statuses == 0 && elapsed < 60.0,
        format!(
            "200 instances, max |bnb - brute| {worst:.1e}, non-exact {statuses}, failing cases {failures:?}, {elapsed:.1}s"
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst_lambda = f64::NEG_INFINITY;
    let mut worst_identity = 0.0f64;
    let mut sdp_violations = 0;
    let mut eig_gersh_violations = 0;
    for _ in 0..100 {
        let n = rng.random_range(2..=50);
        let q = random_psd(n, &mut rng);
        let bar_w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let mut traces = BTreeMap::new();
        for method in SplitMethod::ALL {
            let cert = split(&q, method).unwrap();
            let lam = verify_split(&q, &cert.d).unwrap();
            worst_lambda = worst_lambda.max(lam);
            traces.insert(method.name(), cert.trace);
            let p = BoundProblem::binary(bar_w.clone(), q.clone(), 1.96, Sense::Max).unwrap();
            let mut p = p;
            p.split = Some(cert);
            for _ in 0..5 {
                let t: Vec<f64> = (0..n).map(|_| f64::from(u8::from(rng.random::<bool>()))).collect();
                let direct = p.direct_objective(&t);
                let split_obj = objective(&t, &p).unwrap();
                worst_identity = worst_identity.max((direct - split_obj).abs());
            }
        }
        let (s, e, g) = (traces["sdp-lite"], traces["eig-shift"], traces["gershgorin"]);
        let slack = 1e-9 * (1.0 + g.max(e));
        if s > e.min(g) + slack {
            sdp_violations += 1;
        }
        if e > g + slack {
            eig_gersh_violations += 1;
        }
    }
    outcome(
        worst_lambda <= 1e-8 && worst_identity <= 1e-12 && sdp_violations == 0,
        format!(
            "max λ_max(Q−D) {worst_lambda:.1e}, max identity error {worst_identity:.1e}, sdp-lite > min(eig-shift, gershgorin) on {sdp_violations}/100; \
             eig-shift ≤ gershgorin failed on {eig_gersh_violations}/100 (not a theorem; reported only)"
        ),
    )
}

fn plain_data(n: usize, n1: usize) -> ExperimentData {
    let x: Vec<u8> = (0..n).map(|i| u8::from(i < n1)).collect();
    ExperimentData::new(vec![0.0; n], x, Network::empty(n), BTreeMap::new(), None).unwrap()
}

/// `(1/N₁)(N₀/N)σ²_u` with `u_i = (N₁/N) Σ_j (θ_j − θ̄_{class(j)}) A_ji`.
fn srs_exposure_variance(network: &Network, class_of: &[usize], theta: &[f64], n1: usize) -> f64 {
    let n = theta.len();
    let k = class_of.iter().max().unwrap() + 1;
    let mut sum = vec![0.0; k];
    let mut cnt = vec![0.0; k];
    for i in 0..n {
        sum[class_of[i]] += theta[i];
        cnt[class_of[i]] += 1.0;
    }
    let dev: Vec<f64> = (0..n).map(|j| theta[j] - sum[class_of[j]] / cnt[class_of[j]]).collect();
    let mut u = vec![0.0; n];
    for j in 0..n {
        for &i in network.neighbors(j) {
            u[i] += dev[j];
        }
    }
    let (nf, n1f) = (n as f64, n1 as f64);
    for v in u.iter_mut() {
        *v *= n1f / nf;
    }
    let mean = u.iter().sum::<f64>() / nf;
    let s2 = u.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    (1.0 / n1f) * ((nf - n1f) / nf) * s2
}

fn criterion_5() -> Outcome {
    // MC convergence of Q for τ₁ under srs.
    let n = 20;
    let data = plain_data(n, 10);
    let design = DesignDescriptor::srs(10, 0);
    let scheme = WeightScheme::new("tau1", Estimand::Tau1, &data).unwrap();
    let exact = analytic_tau1_moments(n, &design).unwrap().q.to_dense().unwrap();
    let rs = [1_000usize, 10_000, 100_000];
    let seeds = 8;
    let mut errs = Vec::new();
    for &r in &rs {
        let mut total = 0.0;
        for s in 0..seeds {
            let m = mc_weight_moments(&scheme, &data, &design, r, 1000 + s).unwrap();
            total += (m.q.to_dense().unwrap() - &exact).norm();
        }
        errs.push(total / seeds as f64);
    }
    let xs: Vec<f64> = rs.iter().map(|&r| (r as f64).ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 3.0, ys.iter().sum::<f64>() / 3.0);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();

    // Exposure-moment covariance against the sampling-without-replacement lemma.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 40;
    let n1 = 17;
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.random::<f64>() < 0.08 {
                edges.push((i, j));
            }
        }
    }
    let network = Network::from_edges(n, &edges).unwrap().0;
    let x: Vec<u8> = (0..n).map(|i| u8::from(i < n1)).collect();
    let data = ExperimentData::new(vec![0.0; n], x, network.clone(), BTreeMap::new(), None).unwrap();
    let classes = build_propensity_classes(&data, &[ClassKey::OutDegree]).unwrap();
    let bounds = BetaAdjBounds::new(&network, &classes, n1, &IntervalConfig::default()).unwrap();
    let mut worst_rel = 0.0f64;
    let mut thetas = Vec::new();
    for _ in 0..50 {
        let theta: Vec<f64> = (0..n).map(|_| f64::from(u8::from(rng.random::<bool>()))).collect();
        let t = DVector::from_column_slice(&theta);
        let analytic = t.dot(&(&bounds.q_v * &t));
        let lemma = srs_exposure_variance(&network, &classes.class_of, &theta, n1);
        worst_rel = worst_rel.max((analytic - lemma).abs() / lemma.abs().max(1e-300));
        thetas.push((theta, lemma));
    }
    // Monte Carlo of vᵀθ over srs draws.
    let reps = 20_000;
    let design = DesignDescriptor::srs(n1, 99);
    let draws: Vec<Vec<f64>> = (0..reps)
        .map(|r| {
            let x = design.draw(n, r as u64);
            let z = spillbound::compute_exposure(&network, &x).unwrap();
            let zf: Vec<f64> = z.iter().map(|&v| f64::from(v)).collect();
            classes.demean(&zf).iter().map(|v| v / n as f64).collect()
        })
        .collect();
    let mut mc_outside = 0;
    for (theta, lemma) in &thetas {
        let vals: Vec<f64> = draws.iter().map(|v| v.iter().zip(theta).map(|(a, b)| a * b).sum()).collect();
        let m = vals.iter().sum::<f64>() / reps as f64;
        let c2: Vec<f64> = vals.iter().map(|v| (v - m).powi(2)).collect();
        let var = c2.iter().sum::<f64>() / (reps as f64 - 1.0);
        let m4 = c2.iter().map(|v| v * v).sum::<f64>() / reps as f64;
        let se = ((m4 - var * var).max(0.0) / reps as f64).sqrt();
        if (var - lemma).abs() > 3.0 * se + 1e-15 {
            mc_outside += 1;
        }
    }
    // 50 comparisons at 3 SE: a few misses are expected by chance.
    outcome(
        (slope + 0.5).abs() <= 0.15 && worst_rel <= 1e-10 && mc_outside <= 2,
        format!(
            "slope {slope:.3} (errors {:.2e}, {:.2e}, {:.2e}); closed-form variance rel err {worst_rel:.1e}; MC outside 3 SE {mc_outside}/50",
            errs[0], errs[1], errs[2]
        ),
    )
}

/// Coverage with failed replications counted as misses.
fn strict_coverage(r: &CoverageReport) -> f64 {
    r.covered() as f64 / (r.rows.len() + r.failures.len()) as f64
}

fn report_line(label: &str, r: &CoverageReport) -> String {
    format!(
        "{label} {:.2}% (±{:.2}, {} reps, {} failed, p={:.3})",
        100.0 * strict_coverage(r),
        100.0 * r.standard_error(),
        r.rows.len(),
        r.failures.len(),
        r.binomial_p_value()
    )
}

fn coverage_ok(r: &CoverageReport) -> bool {
    strict_coverage(r) >= r.nominal - 0.015
}

/// Exact coverage of the closed-form interval when θ has `ones` ones: the number of treated ones
/// is hypergeometric under srs.
fn tau1_exact_coverage(n: usize, n1: usize, ones: usize, level: f64) -> f64 {
    let hw = tau1_half_width(n, n1, level, None).unwrap();
    let rv = Hypergeometric::new(n as u64, ones as u64, n1 as u64).unwrap();
    let (n1f, n0f) = (n1 as f64, (n - n1) as f64);
    (0..=ones.min(n1) as u64)
        .filter(|&k| {
            let err = k as f64 / n1f - (ones as f64 - k as f64) / n0f;
            err.abs() <= hw + 1e-12
        })
        .map(|k| rv.pmf(k))
        .sum()
}

fn er_population(n: usize, p: f64, theta: ThetaModel, effect: EffectModel, seed: u64) -> GenericPopulation {
    let spec = GenericSpec {
        network: NetworkModel::ErdosRenyi { n, p },
        theta,
        effect,
    };
    gen_generic(&spec, &DesignDescriptor::bernoulli(0.5, 0), seed).unwrap().0
}

fn criterion_6() -> Outcome {
    let started = Instant::now();
    let reps = 2_000;
    let mut pass = true;
    let mut lines = Vec::new();
    let half = ThetaModel::Block { period: 2, ones: 1 };

    // τ₁ with the closed-form interval, half-ones and adversarial θ.
    {
        let n = 200;
        let spec = GenericSpec {
            network: NetworkModel::KRing { n, k: 4 },
            theta: half.clone(),
            effect: EffectModel::CureOrExposure { z_min: 2 },
        };
        let design = DesignDescriptor::srs(n / 2, 0);
        let (pop, data) = gen_generic(&spec, &design, 1).unwrap();
        let level = 0.95;
        let proc_ = Tau1Procedure {
            level,
            theta_mean_cap: None,
        };
        let r = coverage_study(&pop, &design, &proc_, reps, level, 11).unwrap();
        pass &= coverage_ok(&r);
        lines.push(report_line("tau1/half-ones", &r));
        let scheme = WeightScheme::new("tau1", Estimand::Tau1, &data).unwrap();
        let general = GeneralProcedure::new(
            scheme,
            design.clone(),
            IntervalConfig {
                level,
                ..IntervalConfig::default()
            },
        );
        let theta = spillbound::sim::adversarial_theta(&general, &data).unwrap();
        let mean = theta.iter().map(|&t| f64::from(t)).sum::<f64>() / n as f64;
        let stressed = pop.with_theta(theta).unwrap();
        let r = coverage_study(&stressed, &design, &proc_, reps, level, 12).unwrap();
        pass &= coverage_ok(&r) && (mean - 0.5).abs() < 0.05;
        lines.push(format!("{} mean(theta) {mean:.2}", report_line("tau1/adversarial", &r)));
        lines.push(format!("tau1 exact coverage at this N {:.2}%", 100.0 * tau1_exact_coverage(n, n / 2, n / 2, level)));
    }

    // β_adj on an Erdős–Rényi network with out-degree classes.
    {
        let n = 300;
        let level = 0.90;
        let pop = er_population(n, 0.01, half.clone(), EffectModel::Threshold { z_min: 1 }, 3);
        let design = DesignDescriptor::srs(n / 2, 0);
        let data = pop.experiment(design.draw(n, 0)).unwrap();
        let classes = build_propensity_classes(&data, &[ClassKey::OutDegree]).unwrap();
        let config = IntervalConfig {
            level,
            solver: SolverConfig {
                node_budget: 40,
                time_budget: Some(60.0),
                ..SolverConfig::default()
            },
            ..IntervalConfig::default()
        };
        let bounds = BetaAdjBounds::new(pop.network(), &classes, n / 2, &config).unwrap();
        let adv = bounds.error_bounds_at(pop.network(), data.treatment()).unwrap().upper_theta.unwrap();
        let proc_ = BetaAdjProcedure {
            bounds,
            classes,
        };
        let r = coverage_study(&pop, &design, &proc_, reps, level, 21).unwrap();
        pass &= coverage_ok(&r);
        lines.push(report_line("beta_adj/half-ones", &r));
        let stressed = pop.with_theta(adv.iter().map(|&t| t as u8).collect()).unwrap();
        let r = coverage_study(&stressed, &design, &proc_, reps, level, 22).unwrap();
        pass &= coverage_ok(&r);
        lines.push(report_line("beta_adj/adversarial", &r));
    }

    // Weighted exposure contrast through moments and the bound solver.
    {
        let n = 300;
        let level = 0.90;
        let pop = er_population(n, 0.01, half, EffectModel::Threshold { z_min: 1 }, 4);
        let deg: Vec<f64> = pop.network().out_degrees().iter().map(|&d| d.min(4) as f64).collect();
        let pop = pop.with_covariate("degree_bin", deg).unwrap();
        let design = DesignDescriptor::bernoulli(0.5, 0);
        let data = pop.experiment(design.draw(n, 0)).unwrap();
        let estimand = Estimand::Weighted {
            z_min: 1,
            classes: vec![ClassKey::Covariate("degree_bin".into())],
        };
        let scheme = WeightScheme::new("tau_weight", estimand, &data).unwrap();
        let config = IntervalConfig {
            level,
            replications: 20_000,
            seed: 5,
            solver: SolverConfig {
                node_budget: 40,
                time_budget: Some(60.0),
                ..SolverConfig::default()
            },
            ..IntervalConfig::default()
        };
        let proc_ = GeneralProcedure::new(scheme, design.clone(), config);
        let r = coverage_study(&pop, &design, &proc_, reps, level, 31).unwrap();
        pass &= coverage_ok(&r);
        lines.push(report_line("weighted/half-ones", &r));
        let (_, r) = adversarial_coverage(&pop, &proc_, &data, reps, 32).unwrap();
        pass &= coverage_ok(&r);
        lines.push(report_line("weighted/adversarial", &r));
    }
    let elapsed = started.elapsed().as_secs_f64();
    pass &= elapsed < 900.0;
    outcome(pass, format!("{}; {elapsed:.0}s", lines.join("; ")))
}

/// Normal equations solved by Gauss–Jordan elimination with partial pivoting.
fn ols_contrast(xi: &DMatrix<f64>, y: &[f64], contrast: &[f64]) -> Option<f64> {
    let d = xi.ncols();
    let mut a = vec![vec![0.0; d + 1]; d];
    for r in 0..d {
        for c in 0..d {
            a[r][c] = (0..xi.nrows()).map(|i| xi[(i, r)] * xi[(i, c)]).sum();
        }
        a[r][d] = (0..xi.nrows()).map(|i| xi[(i, r)] * y[i]).sum();
    }
    for col in 0..d {
        let piv = (col..d).max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))?;
        if a[piv][col].abs() < 1e-9 {
            return None;
        }
        a.swap(col, piv);
        for r in 0..d {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=d {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    Some((0..d).map(|r| contrast[r] * a[r][d] / a[r][r]).sum())
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    // Regression weights against the normal equations.
    let mut checked = 0;
    let mut worst = 0.0f64;
    while checked < 100 {
        let n = rng.random_range(10..=30);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j && rng.random::<f64>() < 0.15 {
                    edges.push((i, j));
                }
            }
        }
        let network = Network::from_edges(n, &edges).unwrap().0;
        let x: Vec<u8> = (0..n).map(|_| u8::from(rng.random::<bool>())).collect();
        let cov: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let mut covs = BTreeMap::new();
        covs.insert("c".to_string(), cov);
        let data = match ExperimentData::new(vec![0.0; n], x.clone(), network, covs, None) {
            Ok(d) => d,
            Err(_) => continue,
        };
        let spec = RegressorSpec {
            terms: vec![
                Term::Constant,
                Term::Treatment,
                Term::Exposure,
                Term::Covariate("c".into()),
                Term::Interaction(Box::new(Term::Treatment), Box::new(Term::Exposure)),
            ],
            contrast: (0..5).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect(),
        };
        let xi = spec.design_matrix(&data, &x).unwrap();
        let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let Some(oracle) = ols_contrast(&xi, &y, &spec.contrast) else { continue };
        let Ok(w) = regression_weights(&spec, &data, &x) else { continue };
        let got: f64 = w.iter().zip(&y).map(|(a, b)| a * b).sum();
        worst = worst.max((got - oracle).abs());
        checked += 1;
    }

    // Expected matched weights against the matching Monte Carlo.
    let n = 24;
    let exposed: Vec<u8> = (0..n).map(|i| u8::from(i % 3 == 0 || i % 5 == 0)).collect();
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let classes = spillbound::PropensityClasses::from_labels(labels, "parity").unwrap();
    let expected = expected_matched_weights(&exposed, &classes).unwrap();
    let seeds = 100_000u64;
    let mut s1 = vec![0.0; n];
    let mut s2 = vec![0.0; n];
    for s in 0..seeds {
        let (w, _) = matched_contrast_weights(&exposed, &classes, s).unwrap();
        for i in 0..n {
            s1[i] += w[i];
            s2[i] += w[i] * w[i];
        }
    }
    let r = seeds as f64;
    let mut outside = 0;
    for i in 0..n {
        let m = s1[i] / r;
        let se = ((s2[i] / r - m * m).max(0.0) / r).sqrt();
        if (m - expected[i]).abs() > 3.0 * se + 1e-12 {
            outside += 1;
        }
    }

    // Bias bound against enumeration.
    let mut bias_mismatch = 0;
    for _ in 0..50 {
        let n = rng.random_range(1..=15);
        let mean_w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let (lo, hi) = bias_bound(&mean_w);
        let (mut elo, mut ehi) = (f64::INFINITY, f64::NEG_INFINITY);
        for mask in 0u32..(1 << n) {
            let v: f64 = (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| mean_w[i]).sum();
            elo = elo.min(v);
            ehi = ehi.max(v);
        }
        if (lo - elo).abs() > 1e-12 || (hi - ehi).abs() > 1e-12 {
            bias_mismatch += 1;
        }
    }
    outcome(
        worst <= 1e-9 && outside <= 1 && bias_mismatch == 0,
        format!(
            "OLS max err {worst:.1e} over {checked}; expected-matched outside 3 SE {outside}/{n}; bias mismatches {bias_mismatch}/50"
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("1 cholera point estimates", criterion_1),
        ("2 closed-form tau1 half-width", criterion_2),
        ("3 solver exactness", criterion_3),
        ("4 split validity", criterion_4),
        ("5 moment correctness", criterion_5),
        ("6 coverage", criterion_6),
        ("7 estimand oracles", criterion_7),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|p| name.starts_with(p.as_str())) {
            continue;
        }
        let o = f();
        println!("{} criterion {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
