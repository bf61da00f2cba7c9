use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spillbound::exposure::compute_exposure;
use spillbound::intervals::{BetaAdjBounds, IntervalConfig};
use spillbound::linalg::z_for_level;
use spillbound::{Network, PropensityClasses, SolverConfig};

fn random_network(n: usize, p: f64, rng: &mut ChaCha8Rng) -> Network {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    Network::from_edges(n, &edges).unwrap().0
}

/// Every assignment with exactly `k` of `n` units treated.
fn assignments(n: usize, k: usize) -> Vec<Vec<u8>> {
    (0u32..1 << n)
        .filter(|m| m.count_ones() as usize == k)
        .map(|m| (0..n).map(|i| (m >> i & 1) as u8).collect())
        .collect()
}

fn exact_config() -> IntervalConfig {
    IntervalConfig {
        level: 0.90,
        solver: SolverConfig {
            node_budget: 1_000_000,
            time_budget: None,
            ..SolverConfig::default()
        },
        ..IntervalConfig::default()
    }
}

fn labels(n: usize, k: usize, rng: &mut ChaCha8Rng) -> PropensityClasses {
    loop {
        let l: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        if (0..k).all(|c| l.contains(&c)) {
            return PropensityClasses::from_labels(l, "label").unwrap();
        }
    }
}

#[test]
fn design_moments_match_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for case in 0..6 {
        let n = 8 + case % 4;
        let n1 = 3 + case % 3;
        let net = random_network(n, 0.3, &mut rng);
        let classes = labels(n, 2, &mut rng);
        let b = BetaAdjBounds::new(&net, &classes, n1, &exact_config()).unwrap();

        let draws = assignments(n, n1);
        let m = draws.len() as f64;
        let mut mean = DVector::zeros(n);
        let mut second = DMatrix::zeros(n, n);
        let mut ss = 0.0;
        for x in &draws {
            let z: Vec<f64> = compute_exposure(&net, x).unwrap().iter().map(|&v| f64::from(v)).collect();
            let d = classes.demean(&z);
            ss += d.iter().map(|v| v * v).sum::<f64>();
            let v = DVector::from_iterator(n, d.iter().map(|v| v / n as f64));
            second += &v * v.transpose();
            mean += v;
        }
        mean /= m;
        let cov = second / m - &mean * mean.transpose();
        for i in 0..n {
            assert!((b.mean_v[i] - mean[i]).abs() < 1e-12, "case {case} mean {i}");
            for j in 0..n {
                assert!((b.q_v[(i, j)] - cov[(i, j)]).abs() < 1e-12, "case {case} cov ({i},{j})");
            }
        }
        let expected_ss = ss / m;
        assert!((b.a_bar - n as f64 / expected_ss).abs() < 1e-9 * b.a_bar);
        assert!((b.class_diagnostics.iter().sum::<f64>() - expected_ss).abs() < 1e-9 * expected_ss);
    }
}

/// Upper error bound by enumeration over every binary `θ`.
fn enumerated_upper(b: &BetaAdjBounds, a: f64, level: f64) -> (f64, bool) {
    let n = b.mean_v.len();
    let nf = n as f64;
    let z = z_for_level(level).unwrap();
    let floor = b.a_bar * z * nf.ln() / nf;
    let mut best = f64::NEG_INFINITY;
    let mut floor_wins = false;
    for mask in 0u32..1 << n {
        let t = DVector::from_iterator(n, (0..n).map(|i| f64::from((mask >> i & 1) as u8)));
        let lin = a * DVector::from_column_slice(&b.mean_v).dot(&t);
        let sd = t.dot(&(&b.q_v * &t)).max(0.0).sqrt();
        let u1 = lin + b.a_bar * z * sd;
        let u2 = lin + floor;
        if u1.max(u2) > best {
            best = u1.max(u2);
            floor_wins = u2 > u1;
        }
    }
    (best, floor_wins)
}

#[test]
fn upper_bound_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut floor_cases = 0;
    for case in 0..12 {
        let n = 8 + case % 5;
        let p = if case % 2 == 0 { 0.3 } else { 0.08 };
        let net = random_network(n, p, &mut rng);
        let classes = labels(n, 2, &mut rng);
        let n1 = n / 2;
        let cfg = exact_config();
        let Ok(b) = BetaAdjBounds::new(&net, &classes, n1, &cfg) else { continue };
        let x: Vec<u8> = (0..n).map(|i| u8::from(i < n1)).collect();
        let Ok(bounds) = b.error_bounds_at(&net, &x) else { continue };
        let z: Vec<f64> = compute_exposure(&net, &x).unwrap().iter().map(|&v| f64::from(v)).collect();
        let ss: f64 = classes.demean(&z).iter().map(|v| v * v).sum();
        let mean_scale = b.mean_v.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let a = if mean_scale <= 1e-14 { 1.0 } else { n as f64 / ss };
        let (u, floor) = enumerated_upper(&b, a, cfg.level);
        assert!(
            (bounds.upper.value - u).abs() < 1e-9 * (1.0 + u.abs()),
            "case {case}: {} vs {u}",
            bounds.upper.value
        );
        floor_cases += usize::from(floor);
    }
    assert!(floor_cases > 0, "no instance exercised the log N / N floor");
}
