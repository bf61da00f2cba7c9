//! Prediction intervals `wᵀY − [U, L]` for the estimand `wᵀ(Y − θ)`.
//!
//! Levels are coverage levels: a level-`c` interval uses `z = Φ⁻¹((1+c)/2)`,
//! so the one-sided `α` of each endpoint is `(1−c)/2`.

use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::ExperimentData;
use crate::design::DesignDescriptor;
use crate::error::{Error, Result};
use crate::estimands::{point_estimate, WeightScheme};
use crate::exposure::{compute_exposure, PropensityClasses};
use crate::linalg::z_for_level;
use crate::moments::{bias_bound, weight_moments, CovarianceMatrix, MomentMethod, WeightMoments};
use crate::solver::{
    brute_force, expand_counts, solve_bnb, BoundProblem, LinearConstraint, Sense, SolveResult,
    SolveStatus, SolverConfig,
};
use crate::split::{gershgorin_split, eig_shift_split, split, SplitCertificate, SplitMethod};
use crate::data::Network;

/// Above this many variables sdp-lite is replaced by the better seed split.
pub const SDP_LITE_LIMIT: usize = 1_000;

/// Constraint on the counterfactual `θ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaConstraint {
    /// `mean(θ) ≤ cap`.
    MeanCap { cap: f64 },
    /// `coefᵀθ ≤ rhs`.
    Linear { coef: Vec<f64>, rhs: f64 },
}

impl ThetaConstraint {
    pub fn to_linear(&self, n_units: usize) -> Result<LinearConstraint> {
        match self {
            ThetaConstraint::MeanCap { cap } => {
                if !(0.0..=1.0).contains(cap) {
                    return Err(Error::Config(format!("mean cap {cap} outside [0, 1]")));
                }
                Ok(LinearConstraint::mean_cap(&vec![1.0; n_units], *cap, n_units))
            }
            ThetaConstraint::Linear { coef, rhs } => {
                if coef.len() != n_units {
                    return Err(Error::LengthMismatch {
                        what: "theta constraint",
                        got: coef.len(),
                        expected: n_units,
                    });
                }
                Ok(LinearConstraint {
                    coef: coef.clone(),
                    rhs: *rhs,
                })
            }
        }
    }

    pub fn describe(&self) -> String {
        match self {
            ThetaConstraint::MeanCap { cap } => format!("mean(theta) <= {cap}"),
            ThetaConstraint::Linear { rhs, .. } => format!("linear(theta) <= {rhs}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntervalConfig {
    /// Coverage level of the interval, e.g. 0.90.
    pub level: f64,
    pub solver: SolverConfig,
    pub replications: usize,
    pub seed: u64,
    pub constraints: Vec<ThetaConstraint>,
    pub widen_by_bias: bool,
    /// Solve U and L by enumeration (small problems only).
    pub brute_force: bool,
}

impl Default for IntervalConfig {
    fn default() -> Self {
        IntervalConfig {
            level: 0.95,
            solver: SolverConfig::default(),
            replications: crate::moments::DEFAULT_REPLICATIONS,
            seed: 0,
            constraints: Vec::new(),
            widen_by_bias: false,
            brute_force: false,
        }
    }
}

/// One solved endpoint of the error range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Endpoint {
    pub value: f64,
    pub status: SolveStatus,
    pub nodes: usize,
    pub gap: f64,
}

impl Endpoint {
    fn closed_form(value: f64) -> Self {
        Endpoint {
            value,
            status: SolveStatus::Exact,
            nodes: 0,
            gap: 0.0,
        }
    }

    fn from_solve(r: &SolveResult) -> Self {
        Endpoint {
            value: r.value,
            status: r.status,
            nodes: r.nodes,
            gap: r.gap,
        }
    }
}

/// Range `[L, U]` of the estimation error `wᵀθ` at the requested level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBounds {
    pub upper: Endpoint,
    pub lower: Endpoint,
    pub bias: (f64, f64),
    pub z: f64,
    pub split: Option<SplitMethod>,
    pub moments: String,
    pub constraints: Vec<String>,
    /// Unit-level maximizer of the U problem (best integer point found).
    #[serde(skip)]
    pub upper_theta: Option<Vec<u64>>,
    /// Number of optimization variables after any count collapse.
    pub variables: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalResult {
    pub estimand: String,
    pub point_estimate: f64,
    pub bias_bound: (f64, f64),
    pub level: f64,
    pub alpha: f64,
    pub z: f64,
    pub upper: Endpoint,
    pub lower: Endpoint,
    pub interval: (f64, f64),
    pub widened_by_bias: bool,
    pub constraints: Vec<String>,
    pub split: Option<SplitMethod>,
    pub moments: String,
    /// Per-class expected within-class sums of squares (β_adj only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_diagnostics: Option<Vec<f64>>,
}

impl IntervalResult {
    pub fn assemble(name: &str, point: f64, bounds: &ErrorBounds, level: f64, widen_by_bias: bool) -> Self {
        let mut lo = point - bounds.upper.value;
        let mut hi = point - bounds.lower.value;
        if widen_by_bias {
            lo -= bounds.bias.1.max(0.0);
            hi -= bounds.bias.0.min(0.0);
        }
        IntervalResult {
            estimand: name.to_string(),
            point_estimate: point,
            bias_bound: bounds.bias,
            level,
            alpha: (1.0 - level) / 2.0,
            z: bounds.z,
            upper: bounds.upper.clone(),
            lower: bounds.lower.clone(),
            interval: (lo, hi),
            widened_by_bias: widen_by_bias,
            constraints: bounds.constraints.clone(),
            split: bounds.split,
            moments: bounds.moments.clone(),
            class_diagnostics: None,
        }
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.interval.1 - self.interval.0)
    }

    pub fn contains(&self, value: f64) -> bool {
        self.interval.0 <= value && value <= self.interval.1
    }
}

/// Closed-form interval for the difference in means under srs.
pub fn tau1_interval(data: &ExperimentData, level: f64, theta_mean_cap: Option<f64>) -> Result<IntervalResult> {
    let n = data.n_units();
    let n1 = data.n_treated();
    let w = crate::estimands::tau1_weights(data.treatment())?;
    let point = point_estimate(&w, data.outcomes())?;
    let hw = tau1_half_width(n, n1, level, theta_mean_cap)?;
    let z = z_for_level(level)?;
    let bounds = ErrorBounds {
        upper: Endpoint::closed_form(hw),
        lower: Endpoint::closed_form(-hw),
        bias: (0.0, 0.0),
        z,
        split: None,
        moments: "closed-form".into(),
        constraints: theta_mean_cap
            .map(|cap| vec![ThetaConstraint::MeanCap { cap }.describe()])
            .unwrap_or_default(),
        upper_theta: None,
        variables: 0,
    };
    Ok(IntervalResult::assemble("tau1", point, &bounds, level, false))
}

/// `z·√((N/(N−1))·(N/(N₁N₀))·σ̄²)` with `σ̄² = ¼`, or `cap(1−cap)` below ½.
pub fn tau1_half_width(n: usize, n1: usize, level: f64, theta_mean_cap: Option<f64>) -> Result<f64> {
    if n1 == 0 || n1 >= n {
        return Err(Error::DegenerateArms {
            n_treated: n1,
            n_units: n,
        });
    }
    let z = z_for_level(level)?;
    let sigma2 = match theta_mean_cap {
        Some(cap) if !(0.0..=1.0).contains(&cap) => {
            return Err(Error::Config(format!("mean cap {cap} outside [0, 1]")))
        }
        Some(cap) if cap < 0.5 => cap * (1.0 - cap),
        _ => 0.25,
    };
    let (nf, n1f, n0f) = (n as f64, n1 as f64, (n - n1) as f64);
    Ok(z * ((nf / (nf - 1.0)) * (nf / (n1f * n0f)) * sigma2).sqrt())
}

fn moments_label(m: &WeightMoments) -> String {
    match &m.method {
        MomentMethod::Analytic => "analytic".into(),
        MomentMethod::MonteCarlo {
            replications,
            seed,
            failed,
            ..
        } => format!("monte-carlo(R={replications}, seed={seed}, failed={failed})"),
    }
}

fn pick_split(q: &DMatrix<f64>, method: SplitMethod) -> Result<SplitCertificate> {
    if method == SplitMethod::SdpLite && q.nrows() > SDP_LITE_LIMIT {
        log::warn!(
            "sdp-lite skipped for {} variables; using the smaller-trace seed split",
            q.nrows()
        );
        let g = gershgorin_split(q)?;
        let e = eig_shift_split(q)?;
        return Ok(if e.trace <= g.trace { e } else { g });
    }
    split(q, method)
}

/// Count groups refining the covariance blocks so that `b̄`, constraint
/// coefficients and (optionally) a unit label are constant within each.
fn count_groups(
    block_of: &[usize],
    bar_w: &[f64],
    constraints: &[LinearConstraint],
    label: Option<&[u8]>,
) -> Vec<usize> {
    let mut ids: HashMap<(usize, u8, u64, Vec<u64>), usize> = HashMap::new();
    block_of
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            let key = (
                b,
                label.map_or(0, |l| l[i]),
                bar_w[i].to_bits(),
                constraints.iter().map(|c| c.coef[i].to_bits()).collect(),
            );
            let next = ids.len();
            *ids.entry(key).or_insert(next)
        })
        .collect()
}

/// The U problem (sense max) together with any count grouping.
pub struct BoundSetup {
    pub problem: BoundProblem,
    pub groups: Option<Vec<usize>>,
}

/// Builds the optimization over `ϑ`; block-structured moments are collapsed
/// to per-group counts.
pub fn bound_setup(
    moments: &WeightMoments,
    z: f64,
    constraints: &[LinearConstraint],
    label: Option<&[u8]>,
) -> Result<BoundSetup> {
    let n = moments.bar_w.len();
    match &moments.q {
        CovarianceMatrix::Dense(q) => Ok(BoundSetup {
            problem: BoundProblem::binary(moments.bar_w.clone(), q.clone(), z, Sense::Max)?
                .with_constraints(constraints.to_vec())?,
            groups: None,
        }),
        CovarianceMatrix::Blocked(b) => {
            let groups = count_groups(&b.block_of, &moments.bar_w, constraints, label);
            let k = groups.iter().max().map_or(0, |&g| g + 1);
            let mut rep = vec![usize::MAX; k];
            let mut sizes = vec![0u64; k];
            for (i, &g) in groups.iter().enumerate() {
                if rep[g] == usize::MAX {
                    rep[g] = i;
                }
                sizes[g] += 1;
            }
            let blk = |g: usize| b.block_of[rep[g]];
            let q = DMatrix::from_fn(k, k, |g, h| b.off[(blk(g), blk(h))]);
            let q = (&q + q.transpose()) * 0.5;
            let q_lin = (0..k).map(|g| b.diag[blk(g)] - b.off[(blk(g), blk(g))]).collect();
            let bar = (0..k).map(|g| moments.bar_w[rep[g]]).collect();
            let cons = constraints
                .iter()
                .map(|c| LinearConstraint {
                    coef: (0..k).map(|g| c.coef[rep[g]]).collect(),
                    rhs: c.rhs,
                })
                .collect();
            debug_assert_eq!(groups.len(), n);
            Ok(BoundSetup {
                problem: BoundProblem::new(bar, q, q_lin, sizes, z, Sense::Max, cons)?,
                groups: Some(groups),
            })
        }
    }
}

/// Solves both endpoints of the error range for given moments.
pub fn error_bounds(
    moments: &WeightMoments,
    config: &IntervalConfig,
    label: Option<&[u8]>,
) -> Result<ErrorBounds> {
    let n = moments.bar_w.len();
    let z = z_for_level(config.level)?;
    let constraints: Vec<LinearConstraint> = config
        .constraints
        .iter()
        .map(|c| c.to_linear(n))
        .collect::<Result<_>>()?;
    let setup = bound_setup(moments, z, &constraints, label)?;
    let (upper, lower, method) = if config.brute_force {
        let (u, l) = rayon::join(
            || brute_force(&setup.problem),
            || brute_force(&setup.problem.clone().with_sense(Sense::Min)),
        );
        (u?, l?, None)
    } else {
        let cert = pick_split(&setup.problem.q, config.solver.split)?;
        let mut p = setup.problem.clone();
        p.split = Some(cert.clone());
        let pl = p.clone().with_sense(Sense::Min);
        let (u, l) = rayon::join(|| solve_bnb(&p, &config.solver), || solve_bnb(&pl, &config.solver));
        (u?, l?, Some(cert.method))
    };
    let bias = if constraints.is_empty() {
        bias_bound(&moments.mean_w)
    } else {
        constrained_bias(&moments.mean_w, &constraints)?
    };
    let upper_theta = (!upper.incumbent.is_empty()).then(|| match &setup.groups {
        Some(g) => expand_counts(g, &upper.incumbent),
        None => upper.incumbent.clone(),
    });
    Ok(ErrorBounds {
        upper: Endpoint::from_solve(&upper),
        lower: Endpoint::from_solve(&lower),
        bias,
        z,
        split: method,
        moments: moments_label(moments),
        constraints: config.constraints.iter().map(ThetaConstraint::describe).collect(),
        upper_theta,
        variables: setup.problem.n(),
    })
}

/// Range of `E[w]ᵀϑ` over binary `ϑ` satisfying the constraints.
fn constrained_bias(mean_w: &[f64], constraints: &[LinearConstraint]) -> Result<(f64, f64)> {
    let n = mean_w.len();
    let zeros = crate::moments::BlockCovariance {
        block_of: vec![0; n],
        sizes: vec![n],
        diag: vec![0.0],
        off: DMatrix::zeros(1, 1),
    };
    let m = WeightMoments {
        mean_w: mean_w.to_vec(),
        bar_w: mean_w.to_vec(),
        q: CovarianceMatrix::Blocked(zeros),
        method: MomentMethod::Analytic,
        mean_w_se: None,
        q_diag_se: None,
    };
    let setup = bound_setup(&m, 0.0, constraints, None)?;
    let cfg = SolverConfig {
        split: SplitMethod::Gershgorin,
        ..SolverConfig::default()
    };
    let p = setup.problem.with_split(SplitMethod::Gershgorin)?;
    let hi = solve_bnb(&p, &cfg)?.value;
    let lo = solve_bnb(&p.with_sense(Sense::Min), &cfg)?.value;
    Ok((lo, hi))
}

/// General pipeline: moments of `w(X)`, then `U`/`L` over `ϑ`.
pub fn general_interval(
    scheme: &WeightScheme,
    data: &ExperimentData,
    design: &DesignDescriptor,
    config: &IntervalConfig,
) -> Result<IntervalResult> {
    let moments = weight_moments(scheme, data, design, config.replications, config.seed)?;
    let w = scheme.weights(data)?;
    let point = point_estimate(&w, data.outcomes())?;
    let bounds = error_bounds(&moments, config, Some(data.treatment()))?;
    Ok(IntervalResult::assemble(&scheme.name, point, &bounds, config.level, config.widen_by_bias))
}

/// How the randomization design is derived from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DesignSpec {
    /// Complete randomization with the observed number treated.
    Srs,
    /// Complete randomization within strata of a covariate, observed counts.
    StratifiedSrs { column: String },
    Bernoulli { rho: f64 },
    Explicit { descriptor: DesignDescriptor },
}

impl Default for DesignSpec {
    fn default() -> Self {
        DesignSpec::Srs
    }
}

impl DesignSpec {
    pub fn resolve(&self, data: &ExperimentData, seed: u64) -> Result<DesignDescriptor> {
        let d = match self {
            DesignSpec::Srs => DesignDescriptor::srs_like(data, seed),
            DesignSpec::StratifiedSrs { column } => DesignDescriptor::stratified_like(data, column, seed)?,
            DesignSpec::Bernoulli { rho } => DesignDescriptor::bernoulli(*rho, seed),
            DesignSpec::Explicit { descriptor } => descriptor.clone(),
        };
        d.validate(data.n_units())?;
        Ok(d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedEstimand {
    pub name: String,
    pub estimand: crate::estimands::Estimand,
}

/// Analysis description: estimands, design and optional θ constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSpec {
    #[serde(default)]
    pub design: DesignSpec,
    pub estimands: Vec<NamedEstimand>,
    #[serde(default)]
    pub constraints: Vec<ThetaConstraint>,
}

impl AnalysisSpec {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Runs every estimand of `spec` through [`general_interval`].
pub fn analyze(spec: &AnalysisSpec, data: &ExperimentData, config: &IntervalConfig) -> Result<Vec<IntervalResult>> {
    let design = spec.design.resolve(data, config.seed)?;
    let mut cfg = config.clone();
    cfg.constraints.extend(spec.constraints.iter().cloned());
    spec.estimands
        .iter()
        .map(|e| {
            let scheme = WeightScheme::new(&e.name, e.estimand.clone(), data)?;
            general_interval(&scheme, data, &design, &cfg)
        })
        .collect()
}

/// Point estimate and bias range without the `U`/`L` solves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub estimand: String,
    pub point_estimate: f64,
    pub bias_bound: (f64, f64),
    pub constraints: Vec<String>,
    pub moments: String,
}

/// Point estimates and bias bounds for every estimand of `spec`.
pub fn estimate(spec: &AnalysisSpec, data: &ExperimentData, config: &IntervalConfig) -> Result<Vec<PointSummary>> {
    let design = spec.design.resolve(data, config.seed)?;
    let constraints: Vec<ThetaConstraint> = config.constraints.iter().chain(&spec.constraints).cloned().collect();
    let linear: Vec<LinearConstraint> = constraints
        .iter()
        .map(|c| c.to_linear(data.n_units()))
        .collect::<Result<_>>()?;
    spec.estimands
        .iter()
        .map(|e| {
            let scheme = WeightScheme::new(&e.name, e.estimand.clone(), data)?;
            let moments = weight_moments(&scheme, data, &design, config.replications, config.seed)?;
            let point = point_estimate(&scheme.weights(data)?, data.outcomes())?;
            let bias_bound = if linear.is_empty() {
                bias_bound(&moments.mean_w)
            } else {
                constrained_bias(&moments.mean_w, &linear)?
            };
            Ok(PointSummary {
                estimand: e.name.clone(),
                point_estimate: point,
                bias_bound,
                constraints: constraints.iter().map(ThetaConstraint::describe).collect(),
                moments: moments_label(&moments),
            })
        })
        .collect()
}

/// Design-only quantities for the β_adj interval under srs.
#[derive(Debug, Clone)]
pub struct BetaAdjBounds {
    n_units: usize,
    classes: PropensityClasses,
    /// `ā = 1 / E[(1/N) Σ (Z_i − ζ_k)²]`.
    pub a_bar: f64,
    /// `E[v(X)]`.
    pub mean_v: Vec<f64>,
    /// `Cov(v(X))`.
    pub q_v: DMatrix<f64>,
    pub class_diagnostics: Vec<f64>,
    cached: Option<ErrorBounds>,
    config: IntervalConfig,
}

/// `(I − P)·M`: subtracts class means from the rows of `M`.
fn demean_rows(m: &DMatrix<f64>, classes: &PropensityClasses) -> DMatrix<f64> {
    let k = classes.n_classes();
    let mut sums = DMatrix::zeros(k, m.ncols());
    for i in 0..m.nrows() {
        let c = classes.class_of[i];
        let mut row = sums.row_mut(c);
        row += m.row(i);
    }
    let mut out = m.clone();
    for i in 0..m.nrows() {
        let c = classes.class_of[i];
        let mean = sums.row(c) / classes.sizes[c] as f64;
        let mut row = out.row_mut(i);
        row -= mean;
    }
    out
}

impl BetaAdjBounds {
    pub fn new(network: &Network, classes: &PropensityClasses, n_treated: usize, config: &IntervalConfig) -> Result<Self> {
        let n = network.n_units();
        if classes.n_units() != n {
            return Err(Error::LengthMismatch {
                what: "classes",
                got: classes.n_units(),
                expected: n,
            });
        }
        if n_treated == 0 || n_treated >= n {
            return Err(Error::DegenerateArms {
                n_treated,
                n_units: n,
            });
        }
        let nf = n as f64;
        let p = n_treated as f64 / nf;
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            for &j in network.neighbors(i) {
                a[(i, j)] = 1.0;
            }
        }
        let b = demean_rows(&a, classes);
        let b1: Vec<f64> = b.row_iter().map(|r| r.sum()).collect();
        let srs = p * (1.0 - p) * nf / (nf - 1.0);
        let mut class_diagnostics = vec![0.0; classes.n_classes()];
        for i in 0..n {
            let row_ss = b.row(i).norm_squared();
            class_diagnostics[classes.class_of[i]] +=
                srs * (row_ss - b1[i] * b1[i] / nf) + p * p * b1[i] * b1[i];
        }
        let expected_ss: f64 = class_diagnostics.iter().sum();
        if expected_ss <= 1e-12 {
            return Err(Error::ZeroWithinClassVariance);
        }
        let kappa = srs / (nf * nf);
        let b1v = nalgebra::DVector::from_vec(b1.clone());
        let mut q_v = (&b * b.transpose() - &b1v * b1v.transpose() / nf) * kappa;
        q_v = (&q_v + q_v.transpose()) * 0.5;
        let mut out = BetaAdjBounds {
            n_units: n,
            classes: classes.clone(),
            a_bar: nf / expected_ss,
            mean_v: b1.iter().map(|v| p / nf * v).collect(),
            q_v,
            class_diagnostics,
            cached: None,
            config: config.clone(),
        };
        let scale = out.mean_v.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale <= 1e-14 {
            out.cached = Some(out.bounds_for(1.0)?);
        }
        Ok(out)
    }

    /// `max/min a·E[v]ᵀϑ ± ā·z·max(√(ϑᵀQ_vϑ), log N / N)`.
    fn bounds_for(&self, a: f64) -> Result<ErrorBounds> {
        let n = self.n_units;
        let nf = n as f64;
        let z = z_for_level(self.config.level)?;
        let lin: Vec<f64> = self.mean_v.iter().map(|v| a * v).collect();
        // Scale so the square-root term carries ā·z: ā·√(ϑᵀQϑ) = √(ϑᵀ(ā²Q)ϑ).
        let q = &self.q_v * (self.a_bar * self.a_bar);
        let moments = WeightMoments {
            mean_w: lin.clone(),
            bar_w: lin.clone(),
            q: CovarianceMatrix::Dense(q),
            method: MomentMethod::Analytic,
            mean_w_se: None,
            q_diag_se: None,
        };
        let sqrt_part = error_bounds(&moments, &self.config, None)?;
        let mut zero_q = moments.clone();
        zero_q.q = CovarianceMatrix::Dense(DMatrix::zeros(n, n));
        let lin_cfg = IntervalConfig {
            level: 0.0,
            brute_force: false,
            ..self.config.clone()
        };
        let linear = error_bounds(&zero_q, &lin_cfg, None)?;
        let floor = self.a_bar * z * nf.ln() / nf;
        let u2 = linear.upper.value + floor;
        let l2 = linear.lower.value - floor;
        let mut out = sqrt_part;
        if u2 > out.upper.value {
            out.upper = Endpoint {
                value: u2,
                ..linear.upper.clone()
            };
        }
        if l2 < out.lower.value {
            out.lower = Endpoint {
                value: l2,
                ..linear.lower.clone()
            };
        }
        out.bias = linear.bias;
        out.moments = "analytic (srs exposure moments)".into();
        Ok(out)
    }

    /// Interval at an observed assignment.
    pub fn interval(&self, network: &Network, treatment: &[u8], outcomes: &[f64]) -> Result<IntervalResult> {
        let z = compute_exposure(network, treatment)?;
        let w = crate::estimands::beta_adj_weights(&z, &self.classes)?;
        let point = point_estimate(&w, outcomes)?;
        let zf: Vec<f64> = z.iter().map(|&v| f64::from(v)).collect();
        let ss: f64 = self.classes.demean(&zf).iter().map(|v| v * v).sum();
        let a = self.n_units as f64 / ss;
        let bounds = match &self.cached {
            Some(b) => b.clone(),
            None => self.bounds_for(a)?,
        };
        let mut r = IntervalResult::assemble("beta_adj", point, &bounds, self.config.level, self.config.widen_by_bias);
        r.class_diagnostics = Some(self.class_diagnostics.clone());
        Ok(r)
    }

    /// Error range at the given assignment (U and L before subtraction).
    pub fn error_bounds_at(&self, network: &Network, treatment: &[u8]) -> Result<ErrorBounds> {
        if let Some(b) = &self.cached {
            return Ok(b.clone());
        }
        let z = compute_exposure(network, treatment)?;
        let zf: Vec<f64> = z.iter().map(|&v| f64::from(v)).collect();
        let ss: f64 = self.classes.demean(&zf).iter().map(|v| v * v).sum();
        if ss <= 1e-12 {
            return Err(Error::ZeroWithinClassVariance);
        }
        self.bounds_for(self.n_units as f64 / ss)
    }
}

/// β_adj interval for an srs experiment.
pub fn beta_adj_interval(
    data: &ExperimentData,
    classes: &PropensityClasses,
    config: &IntervalConfig,
) -> Result<IntervalResult> {
    let b = BetaAdjBounds::new(data.network(), classes, data.n_treated(), config)?;
    b.interval(data.network(), data.treatment(), data.outcomes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::DesignDescriptor;
    use crate::estimands::Estimand;

    fn plain(n: usize, n1: usize) -> ExperimentData {
        let x: Vec<u8> = (0..n).map(|i| u8::from(i < n1)).collect();
        let y: Vec<f64> = (0..n).map(|i| (i % 3 == 0) as u8 as f64).collect();
        ExperimentData::new(y, x, Network::empty(n), Default::default(), None).unwrap()
    }

    #[test]
    fn closed_form_half_width() {
        let hw = tau1_half_width(100, 50, 0.95, None).unwrap();
        let z = crate::linalg::normal_quantile(0.975);
        let expected = z * ((100.0 / 99.0) * (100.0 / 2500.0) * 0.25f64).sqrt();
        assert!((hw - expected).abs() < 1e-12);
        assert!((hw - 0.1970).abs() < 1e-3);
        let capped = tau1_half_width(100, 50, 0.95, Some(0.007)).unwrap();
        assert!((capped / hw - (4.0 * 0.007 * 0.993f64).sqrt()).abs() < 1e-12);
        assert!(matches!(tau1_half_width(100, 0, 0.95, None), Err(Error::DegenerateArms { .. })));
    }

    #[test]
    fn general_tau1_agrees_with_closed_form() {
        let data = plain(40, 20);
        let scheme = WeightScheme::new("tau1", Estimand::Tau1, &data).unwrap();
        let design = DesignDescriptor::srs_like(&data, 0);
        let cfg = IntervalConfig::default();
        let g = general_interval(&scheme, &data, &design, &cfg).unwrap();
        let c = tau1_interval(&data, 0.95, None).unwrap();
        assert!((g.half_width() / c.half_width() - 1.0).abs() < 0.02, "{} vs {}", g.half_width(), c.half_width());
        assert_eq!(g.upper.status, SolveStatus::Exact);
    }

    #[test]
    fn zero_level_and_zero_q_gives_bias_endpoints() {
        let m = WeightMoments {
            mean_w: vec![0.2, -0.1, 0.3],
            bar_w: vec![0.2, -0.1, 0.3],
            q: CovarianceMatrix::Dense(DMatrix::zeros(3, 3)),
            method: MomentMethod::Analytic,
            mean_w_se: None,
            q_diag_se: None,
        };
        let cfg = IntervalConfig {
            level: 0.0,
            ..IntervalConfig::default()
        };
        let b = error_bounds(&m, &cfg, None).unwrap();
        let r = IntervalResult::assemble("x", 1.0, &b, 0.0, false);
        assert!((r.interval.0 - (1.0 - 0.5)).abs() < 1e-9);
        assert!((r.interval.1 - (1.0 + 0.1)).abs() < 1e-9);
    }
}
