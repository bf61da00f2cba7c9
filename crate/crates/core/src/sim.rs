//! Synthetic experiments with known counterfactuals and coverage studies.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ExperimentData, Network};
use crate::design::{derive_seed, DesignDescriptor};
use crate::error::{Error, Result};
use crate::estimands::{tau1_weights, WeightScheme};
use crate::exposure::{compute_exposure, PropensityClasses};
use crate::intervals::{
    error_bounds, tau1_interval, BetaAdjBounds, ErrorBounds, IntervalConfig, IntervalResult,
};
use crate::moments::weight_moments;

fn logistic(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutcomeCoefficients {
    pub intercept: f64,
    pub treatment: f64,
    pub rate: f64,
    pub age: f64,
    pub river: f64,
    pub interaction: f64,
}

impl Default for OutcomeCoefficients {
    fn default() -> Self {
        OutcomeCoefficients {
            intercept: 0.5,
            treatment: -0.788,
            rate: -2.953,
            age: -0.098,
            river: -0.145,
            interaction: 0.35,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParticipationCoefficients {
    pub intercept: f64,
    pub age: f64,
    pub river: f64,
    /// Standard deviation of the neighborhood random effect.
    pub effect_sd: f64,
}

impl Default for ParticipationCoefficients {
    fn default() -> Self {
        ParticipationCoefficients {
            intercept: 0.2727,
            age: -0.0387,
            river: 0.2179,
            effect_sd: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VaccineSimParams {
    pub outcome: OutcomeCoefficients,
    pub participation: ParticipationCoefficients,
    pub treatment_prob: f64,
    pub n_neighborhoods: usize,
    /// Neighborhood sizes are uniform on this inclusive range.
    pub neighborhood_size: (usize, usize),
    /// Age (decades) is normal with this mean and sd, truncated at 0.
    pub age_mean: f64,
    pub age_sd: f64,
    pub river_prob: f64,
}

impl Default for VaccineSimParams {
    fn default() -> Self {
        VaccineSimParams {
            outcome: OutcomeCoefficients::default(),
            participation: ParticipationCoefficients::default(),
            treatment_prob: 2.0 / 3.0,
            n_neighborhoods: 40,
            neighborhood_size: (10, 40),
            age_mean: 3.0,
            age_sd: 1.5,
            river_prob: 0.5,
        }
    }
}

impl VaccineSimParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.treatment_prob > 0.0 && self.treatment_prob < 1.0) {
            return Err(Error::Config("treatment_prob must lie in (0,1)".into()));
        }
        if !(0.0..=1.0).contains(&self.river_prob) {
            return Err(Error::Config("river_prob must lie in [0,1]".into()));
        }
        let (lo, hi) = self.neighborhood_size;
        if lo == 0 || hi < lo || self.n_neighborhoods == 0 {
            return Err(Error::Config("neighborhood sizes must be at least 1".into()));
        }
        if !(self.age_sd >= 0.0 && self.participation.effect_sd >= 0.0) {
            return Err(Error::Config("scale parameters must be nonnegative".into()));
        }
        Ok(())
    }

    /// `P(Y = 1)` given own treatment `a` and neighborhood rate `alpha`.
    pub fn outcome_probability(&self, a: f64, alpha: f64, age: f64, river: f64) -> f64 {
        let c = &self.outcome;
        logistic(
            c.intercept + c.treatment * a + c.rate * alpha + c.age * age + c.river * river
                + c.interaction * a * alpha,
        )
    }

    pub fn participation_probability(&self, age: f64, river: f64, effect: f64) -> f64 {
        let c = &self.participation;
        logistic(c.intercept + c.age * age + c.river * river + effect)
    }
}

/// Fixed population whose outcomes respond to the assignment.
pub trait Population: Sync {
    fn n_units(&self) -> usize;
    fn network(&self) -> &Network;
    fn theta(&self) -> &[u8];
    fn covariates(&self) -> &BTreeMap<String, Vec<f64>>;
    fn outcomes(&self, x: &[u8]) -> Vec<f64>;

    fn experiment(&self, x: Vec<u8>) -> Result<ExperimentData> {
        let y = self.outcomes(&x);
        ExperimentData::new(
            y,
            x,
            self.network().clone(),
            self.covariates().clone(),
            Some(self.theta().to_vec()),
        )
    }
}

/// Participants of a simulated vaccine trial. Outcomes are coupled to the
/// counterfactual through shared latent uniforms.
#[derive(Debug, Clone)]
pub struct VaccinePopulation {
    params: VaccineSimParams,
    network: Network,
    covariates: BTreeMap<String, Vec<f64>>,
    latent: Vec<f64>,
    theta: Vec<u8>,
}

impl VaccinePopulation {
    pub fn params(&self) -> &VaccineSimParams {
        &self.params
    }

    /// Neighborhood vaccination rate `V_i` (over all residents, including non-participants).
    pub fn rates(&self, x: &[u8]) -> Vec<f64> {
        let size = &self.covariates["nbhd_size"];
        (0..x.len())
            .map(|i| {
                let treated = f64::from(x[i]) + self.network.neighbors(i).iter().map(|&j| f64::from(x[j])).sum::<f64>();
                treated / size[i]
            })
            .collect()
    }
}

impl Population for VaccinePopulation {
    fn n_units(&self) -> usize {
        self.latent.len()
    }
    fn network(&self) -> &Network {
        &self.network
    }
    fn theta(&self) -> &[u8] {
        &self.theta
    }
    fn covariates(&self) -> &BTreeMap<String, Vec<f64>> {
        &self.covariates
    }
    fn outcomes(&self, x: &[u8]) -> Vec<f64> {
        let v = self.rates(x);
        let age = &self.covariates["age"];
        let river = &self.covariates["river"];
        (0..x.len())
            .map(|i| {
                let p = self.params.outcome_probability(f64::from(x[i]), v[i], age[i], river[i]);
                if self.latent[i] < p {
                    1.0
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// Samples a vaccine-trial population and its observed assignment.
pub fn gen_vaccinesim(params: &VaccineSimParams, seed: u64) -> Result<(VaccinePopulation, ExperimentData)> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let age_dist = Normal::new(params.age_mean, params.age_sd).map_err(|e| Error::Config(e.to_string()))?;
    let effect_dist =
        Normal::new(0.0, params.participation.effect_sd).map_err(|e| Error::Config(e.to_string()))?;
    let (lo, hi) = params.neighborhood_size;
    let mut age = Vec::new();
    let mut river = Vec::new();
    let mut nbhd = Vec::new();
    let mut nbhd_size = Vec::new();
    for h in 0..params.n_neighborhoods {
        let size = rng.random_range(lo..=hi);
        let effect: f64 = effect_dist.sample(&mut rng);
        for _ in 0..size {
            let a: f64 = age_dist.sample(&mut rng).max(0.0);
            let r = f64::from(u8::from(rng.random::<f64>() < params.river_prob));
            let joins = rng.random::<f64>() < params.participation_probability(a, r, effect);
            if joins {
                age.push(a);
                river.push(r);
                nbhd.push(h as f64);
                nbhd_size.push(size as f64);
            }
        }
    }
    let n = age.len();
    let mut edges = Vec::new();
    let mut start = 0;
    while start < n {
        let mut end = start;
        while end < n && nbhd[end] == nbhd[start] {
            end += 1;
        }
        for i in start..end {
            for j in start..end {
                if i != j {
                    edges.push((i, j));
                }
            }
        }
        start = end;
    }
    let (network, _) = Network::from_edges(n, &edges)?;
    let latent: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let x: Vec<u8> = (0..n).map(|_| u8::from(rng.random::<f64>() < params.treatment_prob)).collect();
    let theta: Vec<u8> = (0..n)
        .map(|i| u8::from(latent[i] < params.outcome_probability(0.0, 0.0, age[i], river[i])))
        .collect();
    let mut covariates = BTreeMap::new();
    covariates.insert("age".to_string(), age);
    covariates.insert("river".to_string(), river);
    covariates.insert("nbhd".to_string(), nbhd);
    covariates.insert("nbhd_size".to_string(), nbhd_size);
    let pop = VaccinePopulation {
        params: params.clone(),
        network,
        covariates,
        latent,
        theta,
    };
    let data = pop.experiment(x)?;
    Ok((pop, data))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NetworkModel {
    /// Directed Erdős–Rényi graph with edge probability `p`.
    ErdosRenyi { n: usize, p: f64 },
    /// Each unit points to its `k` nearest ring neighbors (`k/2` each side).
    KRing { n: usize, k: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThetaModel {
    Bernoulli { p: f64 },
    /// `θ_i = 1` when `i mod period < ones`.
    Block { period: usize, ones: usize },
    Fixed { theta: Vec<u8> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EffectModel {
    Null,
    /// Treated units lose the outcome: `Y = θ(1 − X)`.
    Cure,
    /// Units with at least `z_min` treated neighbors lose the outcome.
    Threshold { z_min: u32 },
    /// Own treatment or exposure cures.
    CureOrExposure { z_min: u32 },
}

impl EffectModel {
    fn apply(&self, theta: u8, x: u8, z: u32) -> f64 {
        let t = f64::from(theta);
        let effect = match *self {
            EffectModel::Null => 0.0,
            EffectModel::Cure => -t * f64::from(x),
            EffectModel::Threshold { z_min } => -t * f64::from(u8::from(z >= z_min)),
            EffectModel::CureOrExposure { z_min } => -t * f64::from(u8::from(x == 1 || z >= z_min)),
        };
        (t + effect).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenericSpec {
    pub network: NetworkModel,
    pub theta: ThetaModel,
    pub effect: EffectModel,
}

#[derive(Debug, Clone)]
pub struct GenericPopulation {
    network: Network,
    theta: Vec<u8>,
    effect: EffectModel,
    covariates: BTreeMap<String, Vec<f64>>,
}

impl GenericPopulation {
    pub fn new(network: Network, theta: Vec<u8>, effect: EffectModel) -> Result<Self> {
        if theta.len() != network.n_units() {
            return Err(Error::LengthMismatch {
                what: "theta",
                got: theta.len(),
                expected: network.n_units(),
            });
        }
        Ok(GenericPopulation {
            network,
            theta,
            effect,
            covariates: BTreeMap::new(),
        })
    }

    /// Same population with a different counterfactual.
    pub fn with_theta(&self, theta: Vec<u8>) -> Result<Self> {
        GenericPopulation::new(self.network.clone(), theta, self.effect).map(|mut p| {
            p.covariates = self.covariates.clone();
            p
        })
    }
    /// Attaches a unit-level covariate, e.g. for propensity classes.
    pub fn with_covariate(mut self, name: &str, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.theta.len() {
            return Err(Error::LengthMismatch {
                what: "covariate",
                got: values.len(),
                expected: self.theta.len(),
            });
        }
        self.covariates.insert(name.to_string(), values);
        Ok(self)
    }
}

impl Population for GenericPopulation {
    fn n_units(&self) -> usize {
        self.theta.len()
    }
    fn network(&self) -> &Network {
        &self.network
    }
    fn theta(&self) -> &[u8] {
        &self.theta
    }
    fn covariates(&self) -> &BTreeMap<String, Vec<f64>> {
        &self.covariates
    }
    fn outcomes(&self, x: &[u8]) -> Vec<f64> {
        let z = if matches!(self.effect, EffectModel::Null | EffectModel::Cure) {
            vec![0; x.len()]
        } else {
            compute_exposure(&self.network, x).expect("assignment matches the network")
        };
        (0..x.len()).map(|i| self.effect.apply(self.theta[i], x[i], z[i])).collect()
    }
}

/// Samples a generic population and an observed assignment from `design`.
pub fn gen_generic(
    spec: &GenericSpec,
    design: &DesignDescriptor,
    seed: u64,
) -> Result<(GenericPopulation, ExperimentData)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let network = match spec.network {
        NetworkModel::ErdosRenyi { n, p } => {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("edge probability {p} outside [0,1]")));
            }
            let mut edges = Vec::new();
            for i in 0..n {
                for j in 0..n {
                    if i != j && rng.random::<f64>() < p {
                        edges.push((i, j));
                    }
                }
            }
            Network::from_edges(n, &edges)?.0
        }
        NetworkModel::KRing { n, k } => {
            if k >= n {
                return Err(Error::Config(format!("ring degree {k} must be below {n}")));
            }
            let mut edges = Vec::new();
            for i in 0..n {
                for d in 1..=k / 2 {
                    edges.push((i, (i + d) % n));
                    edges.push((i, (i + n - d) % n));
                }
                if k % 2 == 1 {
                    edges.push((i, (i + k / 2 + 1) % n));
                }
            }
            Network::from_edges(n, &edges)?.0
        }
    };
    let n = network.n_units();
    let theta: Vec<u8> = match &spec.theta {
        ThetaModel::Bernoulli { p } => (0..n).map(|_| u8::from(rng.random::<f64>() < *p)).collect(),
        ThetaModel::Block { period, ones } => {
            if *period == 0 {
                return Err(Error::Config("block period must be positive".into()));
            }
            (0..n).map(|i| u8::from(i % period < *ones)).collect()
        }
        ThetaModel::Fixed { theta } => theta.clone(),
    };
    let pop = GenericPopulation::new(network, theta, spec.effect)?;
    design.validate(n)?;
    let x = design.sample(n, &mut rng);
    let data = pop.experiment(x)?;
    Ok((pop, data))
}

/// Produces an interval and the estimand weights at an observed experiment.
pub trait IntervalProcedure: Sync {
    fn name(&self) -> &str;
    fn run(&self, data: &ExperimentData) -> Result<(IntervalResult, Vec<f64>)>;
}

/// Closed-form difference-in-means interval.
pub struct Tau1Procedure {
    pub level: f64,
    pub theta_mean_cap: Option<f64>,
}

impl IntervalProcedure for Tau1Procedure {
    fn name(&self) -> &str {
        "tau1"
    }
    fn run(&self, data: &ExperimentData) -> Result<(IntervalResult, Vec<f64>)> {
        let r = tau1_interval(data, self.level, self.theta_mean_cap)?;
        Ok((r, tau1_weights(data.treatment())?))
    }
}

/// General pipeline with the scheme resolved once at a reference experiment;
/// the error range depends only on the design and is computed once.
pub struct GeneralProcedure {
    pub scheme: WeightScheme,
    pub design: DesignDescriptor,
    pub config: IntervalConfig,
    bounds: OnceLock<std::result::Result<ErrorBounds, String>>,
}

impl GeneralProcedure {
    pub fn new(scheme: WeightScheme, design: DesignDescriptor, config: IntervalConfig) -> Self {
        GeneralProcedure {
            scheme,
            design,
            config,
            bounds: OnceLock::new(),
        }
    }

    pub fn bounds(&self, data: &ExperimentData) -> Result<&ErrorBounds> {
        let b = self.bounds.get_or_init(|| {
            let m = weight_moments(&self.scheme, data, &self.design, self.config.replications, self.config.seed)
                .map_err(|e| e.to_string())?;
            error_bounds(&m, &self.config, None).map_err(|e| e.to_string())
        });
        b.as_ref().map_err(|e| Error::Config(format!("error bounds failed: {e}")))
    }
}

impl IntervalProcedure for GeneralProcedure {
    fn name(&self) -> &str {
        &self.scheme.name
    }
    fn run(&self, data: &ExperimentData) -> Result<(IntervalResult, Vec<f64>)> {
        let bounds = self.bounds(data)?;
        let w = self.scheme.weights(data)?;
        let point = crate::estimands::point_estimate(&w, data.outcomes())?;
        let r = IntervalResult::assemble(&self.scheme.name, point, bounds, self.config.level, self.config.widen_by_bias);
        Ok((r, w))
    }
}

/// β_adj interval with design quantities precomputed.
pub struct BetaAdjProcedure {
    pub bounds: BetaAdjBounds,
    pub classes: PropensityClasses,
}

impl IntervalProcedure for BetaAdjProcedure {
    fn name(&self) -> &str {
        "beta_adj"
    }
    fn run(&self, data: &ExperimentData) -> Result<(IntervalResult, Vec<f64>)> {
        let r = self.bounds.interval(data.network(), data.treatment(), data.outcomes())?;
        let z = compute_exposure(data.network(), data.treatment())?;
        let w = crate::estimands::beta_adj_weights(&z, &self.classes)?;
        Ok((r, w))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub rep: usize,
    pub realized: f64,
    pub lo: f64,
    pub hi: f64,
    pub covered: bool,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub procedure: String,
    pub nominal: f64,
    pub rows: Vec<CoverageRow>,
    /// `(rep, message)` for replications whose interval procedure failed.
    pub failures: Vec<(usize, String)>,
}

impl CoverageReport {
    pub fn covered(&self) -> usize {
        self.rows.iter().filter(|r| r.covered).count()
    }

    /// Fraction of successful replications whose interval covered the estimand.
    pub fn coverage(&self) -> f64 {
        self.covered() as f64 / self.rows.len().max(1) as f64
    }

    pub fn standard_error(&self) -> f64 {
        let p = self.coverage();
        (p * (1.0 - p) / self.rows.len().max(1) as f64).sqrt()
    }

    pub fn mean_width(&self) -> f64 {
        self.rows.iter().map(|r| r.width).sum::<f64>() / self.rows.len().max(1) as f64
    }

    /// One-sided binomial p-value for `coverage < nominal`.
    pub fn binomial_p_value(&self) -> f64 {
        use statrs::distribution::{Binomial, DiscreteCDF};
        let n = self.rows.len() as u64;
        if n == 0 {
            return 1.0;
        }
        let b = Binomial::new(self.nominal, n).expect("nominal in [0,1]");
        b.cdf(self.covered() as u64)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::Csv {
            path: "<coverage>".into(),
            message: e.to_string(),
        };
        w.write_record(["rep", "realized", "lo", "hi", "covered", "width"]).map_err(err)?;
        for r in &self.rows {
            w.write_record([
                r.rep.to_string(),
                format!("{:.10}", r.realized),
                format!("{:.10}", r.lo),
                format!("{:.10}", r.hi),
                u8::from(r.covered).to_string(),
                format!("{:.10}", r.width),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| Error::Csv {
            path: "<coverage>".into(),
            message: e.to_string(),
        })
    }
}

/// Re-randomizes the assignment `reps` times and records whether each
/// interval covers the realized estimand `w(X)ᵀ(Y − θ)`.
pub fn coverage_study(
    population: &dyn Population,
    design: &DesignDescriptor,
    procedure: &dyn IntervalProcedure,
    reps: usize,
    level: f64,
    seed: u64,
) -> Result<CoverageReport> {
    if reps < 100 {
        return Err(Error::Config(format!("coverage studies need at least 100 replications, got {reps}")));
    }
    let n = population.n_units();
    design.validate(n)?;
    let design = DesignDescriptor {
        seed: derive_seed(seed, 0x5EED),
        ..design.clone()
    };
    let theta: Vec<f64> = population.theta().iter().map(|&t| f64::from(t)).collect();
    let outcomes: Vec<std::result::Result<CoverageRow, (usize, String)>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let x = design.draw(n, rep as u64);
            let run = || -> Result<CoverageRow> {
                let data = population.experiment(x)?;
                let (r, w) = procedure.run(&data)?;
                let realized: f64 = w
                    .iter()
                    .zip(data.outcomes().iter().zip(&theta))
                    .map(|(wi, (y, t))| wi * (y - t))
                    .sum();
                Ok(CoverageRow {
                    rep,
                    realized,
                    lo: r.interval.0,
                    hi: r.interval.1,
                    covered: r.contains(realized),
                    width: r.interval.1 - r.interval.0,
                })
            };
            run().map_err(|e| (rep, e.to_string()))
        })
        .collect();
    let mut rows = Vec::with_capacity(reps);
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => rows.push(r),
            Err(f) => failures.push(f),
        }
    }
    if !failures.is_empty() {
        log::warn!("{}: {} of {reps} replications failed", procedure.name(), failures.len());
    }
    Ok(CoverageReport {
        procedure: procedure.name().to_string(),
        nominal: level,
        rows,
        failures,
    })
}

/// Stress counterfactual: the best integer maximizer of the `U` problem.
pub fn adversarial_theta(procedure: &GeneralProcedure, data: &ExperimentData) -> Result<Vec<u8>> {
    let b = procedure.bounds(data)?;
    b.upper_theta
        .as_ref()
        .map(|t| t.iter().map(|&v| v as u8).collect())
        .ok_or_else(|| Error::Config("U solve produced no integer point".into()))
}

/// Adversarial θ followed by a coverage study at that θ.
pub fn adversarial_coverage(
    population: &GenericPopulation,
    procedure: &GeneralProcedure,
    reference: &ExperimentData,
    reps: usize,
    seed: u64,
) -> Result<(Vec<u8>, CoverageReport)> {
    let theta = adversarial_theta(procedure, reference)?;
    let stressed = population.with_theta(theta.clone())?;
    let report = coverage_study(&stressed, &procedure.design, procedure, reps, procedure.config.level, seed)?;
    Ok((theta, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vaccinesim_reference_probabilities() {
        let p = VaccineSimParams::default();
        assert!((p.outcome_probability(0.0, 0.0, 0.0, 0.0) - 0.622_459_331_201_854_6).abs() < 1e-12);
        assert!((p.participation_probability(0.0, 0.0, 0.0) - logistic(0.2727)).abs() < 1e-15);
        assert!((logistic(0.2727) - 0.5678).abs() < 1e-4);
    }

    #[test]
    fn vaccinesim_treatment_rate() {
        let params = VaccineSimParams {
            n_neighborhoods: 2000,
            neighborhood_size: (80, 120),
            ..VaccineSimParams::default()
        };
        let (_, data) = gen_vaccinesim(&params, 5).unwrap();
        let n = data.n_units() as f64;
        assert!(n > 80_000.0);
        let mean = data.n_treated() as f64 / n;
        let se = (2.0 / 9.0 / n).sqrt();
        assert!((mean - 2.0 / 3.0).abs() < 3.0 * se, "{mean}");
    }

    #[test]
    fn vaccinesim_coupling_without_effects() {
        let mut params = VaccineSimParams::default();
        params.outcome.treatment = 0.0;
        params.outcome.rate = 0.0;
        params.outcome.interaction = 0.0;
        let (pop, data) = gen_vaccinesim(&params, 1).unwrap();
        let theta: Vec<f64> = pop.theta().iter().map(|&t| f64::from(t)).collect();
        assert_eq!(data.outcomes(), &theta[..]);
    }

    #[test]
    fn vaccinesim_is_reproducible() {
        let p = VaccineSimParams::default();
        let a = gen_vaccinesim(&p, 3).unwrap().1;
        let b = gen_vaccinesim(&p, 3).unwrap().1;
        assert_eq!(a.canonical_json(), b.canonical_json());
    }

    #[test]
    fn generic_effects() {
        let design = DesignDescriptor::bernoulli(0.5, 0);
        let spec = GenericSpec {
            network: NetworkModel::KRing { n: 50, k: 4 },
            theta: ThetaModel::Bernoulli { p: 0.5 },
            effect: EffectModel::Null,
        };
        let (pop, data) = gen_generic(&spec, &design, 2).unwrap();
        let theta: Vec<f64> = pop.theta().iter().map(|&t| f64::from(t)).collect();
        assert_eq!(data.outcomes(), &theta[..]);

        let cure = GenericSpec {
            effect: EffectModel::Cure,
            ..spec.clone()
        };
        let (pop, data) = gen_generic(&cure, &design, 2).unwrap();
        for i in 0..50 {
            let expect = f64::from(pop.theta()[i] * (1 - data.treatment()[i]));
            assert_eq!(data.outcomes()[i], expect);
        }

        let zero = GenericSpec {
            theta: ThetaModel::Bernoulli { p: 0.0 },
            effect: EffectModel::Cure,
            ..spec
        };
        let (_, data) = gen_generic(&zero, &design, 2).unwrap();
        assert!(data.outcomes().iter().all(|&y| y == 0.0));
    }

    #[test]
    fn zero_theta_always_covered() {
        let design = DesignDescriptor::srs(20, 0);
        let spec = GenericSpec {
            network: NetworkModel::KRing { n: 40, k: 2 },
            theta: ThetaModel::Block { period: 1, ones: 0 },
            effect: EffectModel::Null,
        };
        let (pop, _) = gen_generic(&spec, &design, 1).unwrap();
        let proc_ = Tau1Procedure {
            level: 0.9,
            theta_mean_cap: None,
        };
        let r = coverage_study(&pop, &design, &proc_, 200, 0.9, 4).unwrap();
        assert_eq!(r.coverage(), 1.0);
        assert!(r.failures.is_empty());
    }
}
