//! Estimand weight vectors `w(X)` and point estimates `w(X)ᵀY`.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::ExperimentData;
use crate::design::{derive_seed, draw_rng, FixedCounts};
use crate::error::{Error, Result};
use crate::exposure::{
    build_propensity_classes, compute_exposure, threshold_exposure, ClassKey, PropensityClasses,
};
use crate::linalg::solve_gram;

/// One regressor in a linear specification. Most terms produce a single
/// column; `ClassIndicators` produces one per class and `Interaction`
/// produces all pairwise products of its operands' columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Term {
    Constant,
    Treatment,
    /// `X_i − X̄`.
    CenteredTreatment,
    /// Treated out-neighbor count `Z_i`.
    Exposure,
    /// `1{Z_i ≥ z_min}`.
    Thresholded { z_min: u32 },
    /// `(Z_i + X_i·include_self) / denominator_i`; the denominator defaults
    /// to out-degree (plus one when `include_self`). Zero denominators give 0.
    ExposureRate {
        #[serde(default)]
        include_self: bool,
        #[serde(default)]
        denominator: Option<String>,
    },
    OutDegree,
    Covariate(String),
    Indicator { column: String, value: f64 },
    ClassIndicators(Vec<ClassKey>),
    Interaction(Box<Term>, Box<Term>),
}

impl Term {
    /// True when the term depends on the assignment only through `X_i`
    /// (and the fixed treated count).
    fn own_treatment_only(&self) -> bool {
        match self {
            Term::Exposure | Term::Thresholded { .. } | Term::ExposureRate { .. } => false,
            Term::Interaction(a, b) => a.own_treatment_only() && b.own_treatment_only(),
            _ => true,
        }
    }

    fn uses_network(&self) -> bool {
        match self {
            Term::Exposure | Term::Thresholded { .. } | Term::ExposureRate { .. } => true,
            Term::Interaction(a, b) => a.uses_network() || b.uses_network(),
            _ => false,
        }
    }

    fn columns(&self, ctx: &TermContext<'_>) -> Result<Vec<Vec<f64>>> {
        let n = ctx.x.len();
        Ok(match self {
            Term::Constant => vec![vec![1.0; n]],
            Term::Treatment => vec![ctx.x.iter().map(|&v| f64::from(v)).collect()],
            Term::CenteredTreatment => {
                vec![ctx.x.iter().map(|&v| f64::from(v) - ctx.xbar).collect()]
            }
            Term::Exposure => vec![ctx.z()?.iter().map(|&v| f64::from(v)).collect()],
            Term::Thresholded { z_min } => vec![threshold_exposure(&ctx.z()?, *z_min)
                .into_iter()
                .map(f64::from)
                .collect()],
            Term::ExposureRate {
                include_self,
                denominator,
            } => {
                let z = ctx.z()?;
                let own = u32::from(*include_self);
                let denom: Vec<f64> = match denominator {
                    Some(col) => ctx.data.covariate(col)?.to_vec(),
                    None => ctx
                        .data
                        .network()
                        .out_degrees()
                        .iter()
                        .map(|&d| (d as u32 + own) as f64)
                        .collect(),
                };
                vec![(0..n)
                    .map(|i| {
                        let num = f64::from(z[i] + own * u32::from(ctx.x[i]));
                        if denom[i] == 0.0 {
                            0.0
                        } else {
                            num / denom[i]
                        }
                    })
                    .collect()]
            }
            Term::OutDegree => vec![ctx
                .data
                .network()
                .out_degrees()
                .iter()
                .map(|&d| d as f64)
                .collect()],
            Term::Covariate(c) => vec![ctx.data.covariate(c)?.to_vec()],
            Term::Indicator { column, value } => vec![ctx
                .data
                .covariate(column)?
                .iter()
                .map(|&v| if v == *value { 1.0 } else { 0.0 })
                .collect()],
            Term::ClassIndicators(keys) => {
                let classes = build_propensity_classes(ctx.data, keys)?;
                (0..classes.n_classes())
                    .map(|k| {
                        classes
                            .class_of
                            .iter()
                            .map(|&c| if c == k { 1.0 } else { 0.0 })
                            .collect()
                    })
                    .collect()
            }
            Term::Interaction(a, b) => {
                let (ca, cb) = (a.columns(ctx)?, b.columns(ctx)?);
                let mut out = Vec::with_capacity(ca.len() * cb.len());
                for u in &ca {
                    for v in &cb {
                        out.push(u.iter().zip(v).map(|(p, q)| p * q).collect());
                    }
                }
                out
            }
        })
    }
}

struct TermContext<'a> {
    data: &'a ExperimentData,
    x: &'a [u8],
    xbar: f64,
    z: std::cell::OnceCell<Vec<u32>>,
}

impl<'a> TermContext<'a> {
    fn new(data: &'a ExperimentData, x: &'a [u8]) -> Self {
        let xbar = x.iter().map(|&v| f64::from(v)).sum::<f64>() / x.len().max(1) as f64;
        TermContext {
            data,
            x,
            xbar,
            z: std::cell::OnceCell::new(),
        }
    }

    fn z(&self) -> Result<Vec<u32>> {
        if let Some(z) = self.z.get() {
            return Ok(z.clone());
        }
        let z = compute_exposure(self.data.network(), self.x)?;
        Ok(self.z.get_or_init(|| z).clone())
    }
}

/// Linear specification `ξ_i(X)` plus the reported contrast `c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressorSpec {
    pub terms: Vec<Term>,
    pub contrast: Vec<f64>,
}

/// Columns of `term` at assignment `x`.
pub fn term_columns(term: &Term, data: &ExperimentData, x: &[u8]) -> Result<Vec<Vec<f64>>> {
    term.columns(&TermContext::new(data, x))
}

impl RegressorSpec {
    /// Design matrix (N × d) at assignment `x`.
    pub fn design_matrix(&self, data: &ExperimentData, x: &[u8]) -> Result<DMatrix<f64>> {
        self.design_with(&TermContext::new(data, x))
    }

    fn design_with(&self, ctx: &TermContext<'_>) -> Result<DMatrix<f64>> {
        let mut cols = Vec::new();
        for t in &self.terms {
            cols.extend(t.columns(ctx)?);
        }
        if cols.is_empty() {
            return Err(Error::Config("regressor spec has no terms".into()));
        }
        if cols.len() != self.contrast.len() {
            return Err(Error::LengthMismatch {
                what: "contrast vector",
                got: self.contrast.len(),
                expected: cols.len(),
            });
        }
        let n = ctx.x.len();
        Ok(DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]))
    }
}

/// `w = Ξ G⁻¹ c` with `G = ΞᵀΞ`.
fn ols_weights(xi: &DMatrix<f64>, contrast: &[f64]) -> Result<Vec<f64>> {
    let g = xi.transpose() * xi;
    let coef = solve_gram(&g, &DVector::from_column_slice(contrast))?;
    Ok((xi * coef).iter().copied().collect())
}

/// `w_i = X_i/N₁ − (1−X_i)/N₀`.
pub fn tau1_weights(treatment: &[u8]) -> Result<Vec<f64>> {
    let n = treatment.len();
    let n1 = treatment.iter().filter(|&&x| x == 1).count();
    if n1 == 0 || n1 == n {
        return Err(Error::DegenerateArms {
            n_treated: n1,
            n_units: n,
        });
    }
    let (a, b) = (1.0 / n1 as f64, 1.0 / (n - n1) as f64);
    Ok(treatment
        .iter()
        .map(|&x| if x == 1 { a } else { -b })
        .collect())
}

/// `w_i = cᵀ(Σ ξ_jξ_jᵀ)⁻¹ ξ_i`.
pub fn regression_weights(
    spec: &RegressorSpec,
    data: &ExperimentData,
    treatment: &[u8],
) -> Result<Vec<f64>> {
    ols_weights(&spec.design_matrix(data, treatment)?, &spec.contrast)
}

/// Partial regression coefficient of `v` on `Z` after class fixed effects.
pub fn beta_adj_weights(z: &[u32], classes: &PropensityClasses) -> Result<Vec<f64>> {
    let zf: Vec<f64> = z.iter().map(|&v| f64::from(v)).collect();
    let centered = classes.demean(&zf);
    let ss: f64 = centered.iter().map(|v| v * v).sum();
    if ss <= 1e-12 {
        return Err(Error::ZeroWithinClassVariance);
    }
    Ok(centered.iter().map(|v| v / ss).collect())
}

/// Level-indicator columns for every value `0..=max_level`, followed by
/// indicators for all classes but the last.
fn effect_curve_design(
    z: &[u32],
    classes: &PropensityClasses,
    max_level: u32,
) -> DMatrix<f64> {
    let n = z.len();
    let levels = max_level as usize + 1;
    let k = classes.n_classes();
    DMatrix::from_fn(n, levels + k - 1, |i, j| {
        let hit = if j < levels {
            z[i] as usize == j
        } else {
            classes.class_of[i] == j - levels
        };
        if hit {
            1.0
        } else {
            0.0
        }
    })
}

/// Contrast `γ_level − γ_0` from least squares on level indicators plus
/// class indicators (last class dropped). Unoccupied levels are omitted.
pub fn effect_curve_weights(
    z: &[u32],
    classes: &PropensityClasses,
    level: u32,
) -> Result<Vec<f64>> {
    if level == 0 {
        return Ok(vec![0.0; z.len()]);
    }
    let max_level = z.iter().copied().max().unwrap_or(0).max(level);
    let full = effect_curve_design(z, classes, max_level);
    let occupied = |l: u32| z.contains(&l);
    for l in [0, level] {
        if !occupied(l) {
            return Err(Error::LevelAbsent(l));
        }
    }
    let keep: Vec<usize> = (0..full.ncols())
        .filter(|&j| j > max_level as usize || occupied(j as u32))
        .collect();
    let xi = full.select_columns(&keep);
    let mut c = vec![0.0; keep.len()];
    c[keep.iter().position(|&j| j == level as usize).expect("occupied")] = 1.0;
    c[keep.iter().position(|&j| j == 0).expect("occupied")] = -1.0;
    ols_weights(&xi, &c)
}

/// Per-class arm counts of a binary exposure.
fn arm_counts(w: &[u8], classes: &PropensityClasses) -> (Vec<usize>, Vec<usize>) {
    let k = classes.n_classes();
    let (mut n1, mut n0) = (vec![0; k], vec![0; k]);
    for (&wi, &c) in w.iter().zip(&classes.class_of) {
        if wi == 1 {
            n1[c] += 1;
        } else {
            n0[c] += 1;
        }
    }
    (n1, n0)
}

/// Within-class exposed/unexposed contrast weighted by class size.
/// Classes lacking an arm are dropped and returned in the second slot.
pub fn weighted_contrast_weights(
    w_exposed: &[u8],
    classes: &PropensityClasses,
) -> Result<(Vec<f64>, Vec<usize>)> {
    let (n1, n0) = arm_counts(w_exposed, classes);
    let dropped: Vec<usize> = (0..classes.n_classes())
        .filter(|&k| n1[k] == 0 || n0[k] == 0)
        .collect();
    let retained = |k: usize| n1[k] > 0 && n0[k] > 0;
    let n_prime: usize = (0..classes.n_classes())
        .filter(|&k| retained(k))
        .map(|k| classes.sizes[k])
        .sum();
    if n_prime == 0 {
        return Err(Error::NoRetainableClass);
    }
    if !dropped.is_empty() {
        log::warn!(
            "weighted contrast: dropped {} class(es) lacking an exposure arm",
            dropped.len()
        );
    }
    let w = contrast_weights(w_exposed, classes, &n1, &n0, |k| {
        if retained(k) {
            classes.sizes[k] as f64 / n_prime as f64
        } else {
            0.0
        }
    });
    Ok((w, dropped))
}

fn contrast_weights(
    w_exposed: &[u8],
    classes: &PropensityClasses,
    n1: &[usize],
    n0: &[usize],
    class_weight: impl Fn(usize) -> f64,
) -> Vec<f64> {
    w_exposed
        .iter()
        .zip(&classes.class_of)
        .map(|(&wi, &k)| {
            let cw = class_weight(k);
            if cw == 0.0 {
                0.0
            } else if wi == 1 {
                cw / n1[k] as f64
            } else {
                -cw / n0[k] as f64
            }
        })
        .collect()
}

/// Pairs formed by a random matching.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matching {
    /// (exposed unit, unexposed unit) pairs.
    pub pairs: Vec<(usize, usize)>,
    pub per_class: Vec<usize>,
}

/// Random within-class matching of exposed to unexposed units without replacement.
pub fn matched_contrast_weights(
    w_exposed: &[u8],
    classes: &PropensityClasses,
    seed: u64,
) -> Result<(Vec<f64>, Matching)> {
    let mut rng = draw_rng(seed, 0);
    let mut pairs = Vec::new();
    let mut per_class = Vec::with_capacity(classes.n_classes());
    for members in classes.members() {
        let mut exposed: Vec<usize> = members.iter().copied().filter(|&i| w_exposed[i] == 1).collect();
        let mut unexposed: Vec<usize> = members.iter().copied().filter(|&i| w_exposed[i] == 0).collect();
        let m = exposed.len().min(unexposed.len());
        exposed.shuffle(&mut rng);
        unexposed.shuffle(&mut rng);
        pairs.extend(exposed.into_iter().zip(unexposed).take(m));
        per_class.push(m);
    }
    let m = pairs.len();
    if m == 0 {
        return Err(Error::NoMatches);
    }
    let mut w = vec![0.0; w_exposed.len()];
    for &(a, b) in &pairs {
        w[a] = 1.0 / m as f64;
        w[b] = -1.0 / m as f64;
    }
    Ok((w, Matching { pairs, per_class }))
}

/// Expectation of the matched contrast over random matchings.
pub fn expected_matched_weights(w_exposed: &[u8], classes: &PropensityClasses) -> Result<Vec<f64>> {
    let (n1, n0) = arm_counts(w_exposed, classes);
    let mk: Vec<usize> = n1.iter().zip(&n0).map(|(&a, &b)| a.min(b)).collect();
    let m: usize = mk.iter().sum();
    if m == 0 {
        return Err(Error::NoMatches);
    }
    Ok(contrast_weights(w_exposed, classes, &n1, &n0, |k| {
        mk[k] as f64 / m as f64
    }))
}

pub fn point_estimate(w: &[f64], outcomes: &[f64]) -> Result<f64> {
    if w.len() != outcomes.len() {
        return Err(Error::LengthMismatch {
            what: "outcomes",
            got: outcomes.len(),
            expected: w.len(),
        });
    }
    Ok(w.iter().zip(outcomes).map(|(a, b)| a * b).sum())
}

/// Configured estimand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimand {
    Tau1,
    Regression(RegressorSpec),
    BetaAdj {
        classes: Vec<ClassKey>,
    },
    EffectCurve {
        level: u32,
        classes: Vec<ClassKey>,
    },
    Weighted {
        z_min: u32,
        classes: Vec<ClassKey>,
    },
    Matched {
        z_min: u32,
        classes: Vec<ClassKey>,
        #[serde(default)]
        seed: u64,
    },
    ExpectedMatched {
        z_min: u32,
        classes: Vec<ClassKey>,
    },
}

impl Estimand {
    fn class_keys(&self) -> Option<&[ClassKey]> {
        match self {
            Estimand::Tau1 | Estimand::Regression(_) => None,
            Estimand::BetaAdj { classes }
            | Estimand::EffectCurve { classes, .. }
            | Estimand::Weighted { classes, .. }
            | Estimand::Matched { classes, .. }
            | Estimand::ExpectedMatched { classes, .. } => Some(classes),
        }
    }

    fn z_min(&self) -> Option<u32> {
        match self {
            Estimand::Weighted { z_min, .. }
            | Estimand::Matched { z_min, .. }
            | Estimand::ExpectedMatched { z_min, .. } => Some(*z_min),
            _ => None,
        }
    }
}

/// Extra per-draw quantities needed for the centering weights `b̄`.
#[derive(Debug, Clone)]
pub enum DrawAux {
    None,
    /// Design matrix of the draw (N × d).
    Regression { xi: DMatrix<f64> },
    /// Exposure indicator and per-class arm counts.
    Contrast {
        exposed: Vec<u8>,
        n1: Vec<usize>,
        n0: Vec<usize>,
    },
}

#[derive(Debug, Clone)]
pub struct WeightDraw {
    pub w: Vec<f64>,
    pub aux: DrawAux,
}

/// An estimand bound to a dataset: classes, retained classes and level
/// range are resolved once from the observed data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightScheme {
    pub name: String,
    pub estimand: Estimand,
    #[serde(skip)]
    classes: Option<PropensityClasses>,
    #[serde(skip)]
    retained: Option<Vec<bool>>,
    #[serde(skip)]
    max_level: u32,
}

impl WeightScheme {
    pub fn new(name: &str, estimand: Estimand, data: &ExperimentData) -> Result<Self> {
        let classes = match estimand.class_keys() {
            Some(keys) => Some(build_propensity_classes(data, keys)?),
            None => None,
        };
        let max_level = data.network().out_degrees().into_iter().max().unwrap_or(0) as u32;
        let mut scheme = WeightScheme {
            name: name.to_string(),
            estimand,
            classes,
            retained: None,
            max_level,
        };
        if let (Estimand::Weighted { z_min, .. }, Some(classes)) =
            (&scheme.estimand, &scheme.classes)
        {
            let w = threshold_exposure(&compute_exposure(data.network(), data.treatment())?, *z_min);
            let (n1, n0) = arm_counts(&w, classes);
            let retained: Vec<bool> = (0..classes.n_classes()).map(|k| n1[k] > 0 && n0[k] > 0).collect();
            if !retained.iter().any(|&r| r) {
                return Err(Error::NoRetainableClass);
            }
            let dropped = retained.iter().filter(|&&r| !r).count();
            if dropped > 0 {
                log::warn!("{}: dropped {dropped} class(es) lacking an exposure arm", scheme.name);
            }
            scheme.retained = Some(retained);
        }
        Ok(scheme)
    }

    pub fn classes(&self) -> Option<&PropensityClasses> {
        self.classes.as_ref()
    }

    /// Classes retained by the weighted contrast at the observed assignment.
    pub fn retained_classes(&self) -> Option<&[bool]> {
        self.retained.as_deref()
    }

    fn classes_or_err(&self) -> Result<&PropensityClasses> {
        self.classes
            .as_ref()
            .ok_or_else(|| Error::Config("scheme has no propensity classes".into()))
    }

    /// Weights at the observed assignment.
    pub fn weights(&self, data: &ExperimentData) -> Result<Vec<f64>> {
        Ok(self.build(data, data.treatment(), None)?.w)
    }

    /// Weights for design draw `index` (matching uses a per-draw seed).
    pub fn draw(&self, data: &ExperimentData, x: &[u8], index: u64) -> Result<WeightDraw> {
        self.build(data, x, Some(index))
    }

    /// Whether `w(X)` depends on the network.
    pub fn uses_network(&self) -> bool {
        match &self.estimand {
            Estimand::Tau1 => false,
            Estimand::Regression(spec) => spec.terms.iter().any(Term::uses_network),
            _ => true,
        }
    }

    fn build(&self, data: &ExperimentData, x: &[u8], index: Option<u64>) -> Result<WeightDraw> {
        match &self.estimand {
            Estimand::Tau1 => Ok(WeightDraw {
                w: tau1_weights(x)?,
                aux: DrawAux::None,
            }),
            Estimand::Regression(spec) => {
                let xi = spec.design_matrix(data, x)?;
                let w = ols_weights(&xi, &spec.contrast)?;
                Ok(WeightDraw {
                    w,
                    aux: DrawAux::Regression { xi },
                })
            }
            Estimand::BetaAdj { .. } => {
                let classes = self.classes_or_err()?;
                let z = compute_exposure(data.network(), x)?;
                let w = beta_adj_weights(&z, classes)?;
                let k = classes.n_classes();
                let xi = DMatrix::from_fn(x.len(), k + 1, |i, j| {
                    if j == k {
                        f64::from(z[i])
                    } else if classes.class_of[i] == j {
                        1.0
                    } else {
                        0.0
                    }
                });
                Ok(WeightDraw {
                    w,
                    aux: DrawAux::Regression { xi },
                })
            }
            Estimand::EffectCurve { level, .. } => {
                let classes = self.classes_or_err()?;
                let z = compute_exposure(data.network(), x)?;
                let w = effect_curve_weights(&z, classes, *level)?;
                let xi = effect_curve_design(&z, classes, self.max_level.max(*level));
                Ok(WeightDraw {
                    w,
                    aux: DrawAux::Regression { xi },
                })
            }
            Estimand::Weighted { .. } | Estimand::Matched { .. } | Estimand::ExpectedMatched { .. } => {
                let classes = self.classes_or_err()?;
                let z_min = self.estimand.z_min().expect("contrast estimand");
                let exposed = threshold_exposure(&compute_exposure(data.network(), x)?, z_min);
                let (n1, n0) = arm_counts(&exposed, classes);
                let w = match &self.estimand {
                    Estimand::Weighted { .. } => self.weighted_with_retained(&exposed, classes, &n1, &n0)?,
                    Estimand::Matched { seed, .. } => {
                        let s = match index {
                            None => *seed,
                            Some(r) => derive_seed(*seed, r.wrapping_add(1)),
                        };
                        matched_contrast_weights(&exposed, classes, s)?.0
                    }
                    _ => expected_matched_weights(&exposed, classes)?,
                };
                Ok(WeightDraw {
                    w,
                    aux: DrawAux::Contrast { exposed, n1, n0 },
                })
            }
        }
    }

    fn weighted_with_retained(
        &self,
        exposed: &[u8],
        classes: &PropensityClasses,
        n1: &[usize],
        n0: &[usize],
    ) -> Result<Vec<f64>> {
        let retained = self.retained.as_ref().expect("weighted scheme resolves retained classes");
        for k in 0..classes.n_classes() {
            if retained[k] && (n1[k] == 0 || n0[k] == 0) {
                return Err(Error::NoRetainableClass);
            }
        }
        let n_prime: usize = (0..classes.n_classes())
            .filter(|&k| retained[k])
            .map(|k| classes.sizes[k])
            .sum();
        Ok(contrast_weights(exposed, classes, n1, n0, |k| {
            if retained[k] {
                classes.sizes[k] as f64 / n_prime as f64
            } else {
                0.0
            }
        }))
    }

    /// Under a fixed-count design, schemes whose regressors depend only on
    /// `X_i` and are constant within blocks have weights `w_i = α_i + β_i X_i`
    /// with `α, β` constant per block. Returns `None` when that structure is absent.
    pub fn fixed_count_affine(
        &self,
        data: &ExperimentData,
        fc: &FixedCounts,
    ) -> Result<Option<(Vec<f64>, Vec<f64>)>> {
        let n = data.n_units();
        let n1_total: usize = fc.n_treated.iter().sum();
        match &self.estimand {
            Estimand::Tau1 => {
                if n1_total == 0 || n1_total == n {
                    return Err(Error::DegenerateArms {
                        n_treated: n1_total,
                        n_units: n,
                    });
                }
                let (n1, n0) = (n1_total as f64, (n - n1_total) as f64);
                Ok(Some((vec![-1.0 / n0; n], vec![1.0 / n1 + 1.0 / n0; n])))
            }
            Estimand::Regression(spec) if spec.terms.iter().all(Term::own_treatment_only) => {
                let xbar = n1_total as f64 / n as f64;
                let zeros = vec![0u8; n];
                let ones = vec![1u8; n];
                let mut c0 = TermContext::new(data, &zeros);
                c0.xbar = xbar;
                let mut c1 = TermContext::new(data, &ones);
                c1.xbar = xbar;
                let xi0 = spec.design_with(&c0)?;
                let xi1 = spec.design_with(&c1)?;
                let d = xi0.ncols();
                let mut rep: Vec<Option<usize>> = vec![None; fc.sizes.len()];
                for i in 0..n {
                    let b = fc.block_of[i];
                    match rep[b] {
                        None => rep[b] = Some(i),
                        Some(r) => {
                            for j in 0..d {
                                if xi0[(i, j)] != xi0[(r, j)] || xi1[(i, j)] != xi1[(r, j)] {
                                    return Ok(None);
                                }
                            }
                        }
                    }
                }
                let mut g = DMatrix::zeros(d, d);
                for (b, r) in rep.iter().enumerate() {
                    let Some(r) = *r else { continue };
                    let (t, c) = (fc.n_treated[b] as f64, (fc.sizes[b] - fc.n_treated[b]) as f64);
                    let r1 = xi1.row(r).transpose();
                    let r0 = xi0.row(r).transpose();
                    g += &r1 * r1.transpose() * t + &r0 * r0.transpose() * c;
                }
                let coef = solve_gram(&g, &DVector::from_column_slice(&spec.contrast))?;
                let alpha: Vec<f64> = (&xi0 * &coef).iter().copied().collect();
                let beta: Vec<f64> = ((&xi1 - &xi0) * &coef).iter().copied().collect();
                Ok(Some((alpha, beta)))
            }
            _ => Ok(None),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Network;
    use std::collections::BTreeMap;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    fn plain(x: Vec<u8>) -> ExperimentData {
        let n = x.len();
        ExperimentData::new(vec![0.0; n], x, Network::empty(n), BTreeMap::new(), None).unwrap()
    }

    #[test]
    fn tau1_examples() {
        let w = tau1_weights(&[1, 1, 0, 0]).unwrap();
        assert_eq!(w, vec![0.5, 0.5, -0.5, -0.5]);
        assert_eq!(point_estimate(&w, &[1.0, 0.0, 0.0, 0.0]).unwrap(), 0.5);
        assert_eq!(point_estimate(&w, &[1.0, 1.0, 0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(point_estimate(&[0.0; 4], &[1.0, 1.0, 0.0, 0.0]).unwrap(), 0.0);
        assert!(tau1_weights(&[1, 1, 1]).is_err());
    }

    #[test]
    fn centered_regression_equals_tau1() {
        let x = vec![1, 0, 0, 1, 1, 0, 0];
        let data = plain(x.clone());
        let spec = RegressorSpec {
            terms: vec![Term::Constant, Term::CenteredTreatment],
            contrast: vec![0.0, 1.0],
        };
        let w = regression_weights(&spec, &data, &x).unwrap();
        assert!(close(&w, &tau1_weights(&x).unwrap(), 1e-12));
        let intercept = RegressorSpec {
            terms: vec![Term::Constant],
            contrast: vec![1.0],
        };
        let w = regression_weights(&intercept, &data, &x).unwrap();
        assert!(w.iter().all(|&v| (v - 1.0 / 7.0).abs() < 1e-15));
    }

    #[test]
    fn duplicated_column_is_singular() {
        let x = vec![1, 0, 0, 1];
        let spec = RegressorSpec {
            terms: vec![Term::Constant, Term::Treatment, Term::Treatment],
            contrast: vec![0.0, 1.0, 0.0],
        };
        assert!(matches!(
            regression_weights(&spec, &plain(x.clone()), &x),
            Err(Error::SingularDesign { .. })
        ));
    }

    #[test]
    fn beta_adj_one_class() {
        let classes = PropensityClasses::single(4);
        let w = beta_adj_weights(&[0, 1, 2, 3], &classes).unwrap();
        assert!(close(&w, &[-0.3, -0.1, 0.1, 0.3], 1e-15));
        let two = PropensityClasses::from_labels(vec![0, 0, 1, 1], "k").unwrap();
        assert!(matches!(
            beta_adj_weights(&[1, 1, 2, 2], &two),
            Err(Error::ZeroWithinClassVariance)
        ));
    }

    #[test]
    fn effect_curve_two_levels() {
        let classes = PropensityClasses::single(4);
        let w = effect_curve_weights(&[0, 0, 1, 1], &classes, 1).unwrap();
        assert!(close(&w, &[-0.5, -0.5, 0.5, 0.5], 1e-12));
        assert_eq!(effect_curve_weights(&[0, 0, 1, 1], &classes, 0).unwrap(), vec![0.0; 4]);
        assert!(matches!(
            effect_curve_weights(&[0, 0, 1, 1], &classes, 2),
            Err(Error::LevelAbsent(2))
        ));
    }

    #[test]
    fn weighted_examples() {
        let one = PropensityClasses::single(4);
        let (w, dropped) = weighted_contrast_weights(&[1, 1, 0, 0], &one).unwrap();
        assert_eq!(w, vec![0.5, 0.5, -0.5, -0.5]);
        assert!(dropped.is_empty());

        let two = PropensityClasses::from_labels(vec![0, 0, 0, 0, 1, 1], "k").unwrap();
        let (w, _) = weighted_contrast_weights(&[1, 0, 1, 0, 1, 0], &two).unwrap();
        // class 0: (4/6)(±1/2); class 1: (2/6)(±1)
        let expect = [1.0 / 3.0, -1.0 / 3.0, 1.0 / 3.0, -1.0 / 3.0, 1.0 / 3.0, -1.0 / 3.0];
        assert!(close(&w, &expect, 1e-15));

        let (w, dropped) = weighted_contrast_weights(&[1, 0, 1, 0, 1, 1], &two).unwrap();
        assert_eq!(dropped, vec![1]);
        assert!(close(&w, &[0.5, -0.5, 0.5, -0.5, 0.0, 0.0], 1e-15));
        let single = PropensityClasses::single(3);
        assert!(matches!(
            weighted_contrast_weights(&[1, 1, 1], &single),
            Err(Error::NoRetainableClass)
        ));
    }

    #[test]
    fn matched_forced_pair() {
        let classes = PropensityClasses::single(3);
        let (w, m) = matched_contrast_weights(&[1, 1, 0], &classes, 5).unwrap();
        assert_eq!(m.pairs.len(), 1);
        assert_eq!(w.iter().filter(|&&v| v == 1.0).count(), 1);
        assert_eq!(w[2], -1.0);
        assert!(matches!(
            matched_contrast_weights(&[1, 1, 1], &classes, 5),
            Err(Error::NoMatches)
        ));
        assert!(matches!(
            expected_matched_weights(&[0, 0, 0], &classes),
            Err(Error::NoMatches)
        ));
    }

    #[test]
    fn matched_selection_is_uniform() {
        let classes = PropensityClasses::single(3);
        let mut first = 0;
        for seed in 0..10_000u64 {
            let (w, _) = matched_contrast_weights(&[1, 1, 0], &classes, seed).unwrap();
            if w[0] > 0.0 {
                first += 1;
            }
        }
        assert!((first as i64 - 5000).abs() <= 200, "{first}");
    }

    #[test]
    fn expected_matched_single_class_equals_weighted() {
        let classes = PropensityClasses::single(5);
        let w = [1, 0, 1, 1, 0];
        let a = expected_matched_weights(&w, &classes).unwrap();
        let (b, _) = weighted_contrast_weights(&w, &classes).unwrap();
        assert!(close(&a, &b, 1e-15));
    }

    #[test]
    fn estimand_serde_shape() {
        let e = Estimand::Regression(RegressorSpec {
            terms: vec![
                Term::Treatment,
                Term::Interaction(
                    Box::new(Term::Treatment),
                    Box::new(Term::Indicator {
                        column: "group".into(),
                        value: 1.0,
                    }),
                ),
            ],
            contrast: vec![1.0, 0.0],
        });
        let s = serde_json::to_string(&e).unwrap();
        assert_eq!(serde_json::from_str::<Estimand>(&s).unwrap(), e);
        let w: Estimand =
            serde_json::from_str(r#"{"weighted":{"z_min":1,"classes":["out_degree"]}}"#).unwrap();
        assert_eq!(
            w,
            Estimand::Weighted {
                z_min: 1,
                classes: vec![ClassKey::OutDegree]
            }
        );
    }
}
