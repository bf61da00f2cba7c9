//! Randomization moments of weight vectors: `E[w]`, `Q = Cov(w)` and the
//! centering weights `b̄`, analytic where the design allows, otherwise by
//! re-randomization.

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::ExperimentData;
use crate::design::{draw_rng, DesignDescriptor, FixedCounts};
use crate::error::{Error, Result};
use crate::estimands::{term_columns, DrawAux, Estimand, Term, WeightScheme};
use crate::linalg::{solve_gram, symmetrize_and_clip};

pub const DEFAULT_REPLICATIONS: usize = 20_000;
/// Largest unit count for which a dense Monte Carlo covariance is formed.
pub const MAX_DENSE_UNITS: usize = 5_000;
const CHUNK: usize = 256;

/// Covariance with equal diagonal and off-diagonal entries inside blocks.
/// `Q_ii = diag[b(i)]`, `Q_ij = off[b(i), b(j)]` for `i ≠ j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockCovariance {
    pub block_of: Vec<usize>,
    pub sizes: Vec<usize>,
    pub diag: Vec<f64>,
    pub off: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceMatrix {
    Dense(DMatrix<f64>),
    Blocked(BlockCovariance),
}

impl CovarianceMatrix {
    pub fn n_units(&self) -> usize {
        match self {
            CovarianceMatrix::Dense(m) => m.nrows(),
            CovarianceMatrix::Blocked(b) => b.block_of.len(),
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match self {
            CovarianceMatrix::Dense(m) => m[(i, j)],
            CovarianceMatrix::Blocked(b) => {
                if i == j {
                    b.diag[b.block_of[i]]
                } else {
                    b.off[(b.block_of[i], b.block_of[j])]
                }
            }
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_units()).map(|i| self.entry(i, i)).collect()
    }

    /// `θᵀQθ`.
    pub fn quad_form(&self, theta: &[f64]) -> f64 {
        match self {
            CovarianceMatrix::Dense(m) => {
                let t = DVector::from_column_slice(theta);
                t.dot(&(m * &t))
            }
            CovarianceMatrix::Blocked(b) => {
                let k = b.sizes.len();
                let (mut s, mut ss) = (vec![0.0; k], vec![0.0; k]);
                for (&blk, &t) in b.block_of.iter().zip(theta) {
                    s[blk] += t;
                    ss[blk] += t * t;
                }
                let mut v = 0.0;
                for g in 0..k {
                    v += (b.diag[g] - b.off[(g, g)]) * ss[g];
                    for h in 0..k {
                        v += b.off[(g, h)] * s[g] * s[h];
                    }
                }
                v
            }
        }
    }

    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        match self {
            CovarianceMatrix::Dense(m) => Ok(m.clone()),
            CovarianceMatrix::Blocked(_) => {
                let n = self.n_units();
                if n > MAX_DENSE_UNITS {
                    return Err(Error::TooLarge(format!(
                        "{n} units exceed the dense limit of {MAX_DENSE_UNITS}"
                    )));
                }
                Ok(DMatrix::from_fn(n, n, |i, j| self.entry(i, j)))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MomentMethod {
    Analytic,
    MonteCarlo {
        replications: usize,
        seed: u64,
        failed: usize,
        /// Smallest eigenvalue of the symmetrized sample covariance before clipping.
        min_eigenvalue: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightMoments {
    pub mean_w: Vec<f64>,
    pub q: CovarianceMatrix,
    pub bar_w: Vec<f64>,
    pub method: MomentMethod,
    /// Monte Carlo standard errors of `mean_w`.
    #[serde(default)]
    pub mean_w_se: Option<Vec<f64>>,
    /// Monte Carlo standard errors of `diag(Q)`.
    #[serde(default)]
    pub q_diag_se: Option<Vec<f64>>,
}

/// Range of `E[w]ᵀϑ` over binary `ϑ`.
pub fn bias_bound(mean_w: &[f64]) -> (f64, f64) {
    mean_w.iter().fold((0.0, 0.0), |(lo, hi), &m| {
        (lo + m.min(0.0), hi + m.max(0.0))
    })
}

/// Moments of `w_i = α_i + β_i X_i` under a fixed-count design; `α` and `β`
/// must be constant within blocks.
pub fn fixed_count_moments(alpha: &[f64], beta: &[f64], fc: &FixedCounts) -> Result<WeightMoments> {
    let k = fc.sizes.len();
    let mut a = vec![f64::NAN; k];
    let mut b = vec![f64::NAN; k];
    for (i, &blk) in fc.block_of.iter().enumerate() {
        if a[blk].is_nan() {
            a[blk] = alpha[i];
            b[blk] = beta[i];
        } else {
            let tol = 1e-12 * (1.0 + a[blk].abs() + b[blk].abs());
            if (a[blk] - alpha[i]).abs() > tol || (b[blk] - beta[i]).abs() > tol {
                return Err(Error::Unsupported(
                    "weights are not affine with block-constant coefficients".into(),
                ));
            }
        }
    }
    let mut diag = vec![0.0; k];
    let mut off = DMatrix::zeros(k, k);
    let mut mean_block = vec![0.0; k];
    for g in 0..k {
        if a[g].is_nan() {
            continue;
        }
        let p = fc.prob(g);
        let v = b[g] * b[g] * p * (1.0 - p);
        mean_block[g] = a[g] + b[g] * p;
        diag[g] = v;
        if fc.sizes[g] > 1 {
            off[(g, g)] = -v / (fc.sizes[g] - 1) as f64;
        }
    }
    let mean_w: Vec<f64> = fc.block_of.iter().map(|&g| mean_block[g]).collect();
    Ok(WeightMoments {
        bar_w: mean_w.clone(),
        mean_w,
        q: CovarianceMatrix::Blocked(BlockCovariance {
            block_of: fc.block_of.clone(),
            sizes: fc.sizes.clone(),
            diag,
            off,
        }),
        method: MomentMethod::Analytic,
        mean_w_se: None,
        q_diag_se: None,
    })
}

/// Exact moments of the difference-in-means weights under srs.
pub fn analytic_tau1_moments(n_units: usize, design: &DesignDescriptor) -> Result<WeightMoments> {
    if !design.is_srs() {
        return Err(Error::Unsupported("analytic tau1 moments need an srs design".into()));
    }
    design.validate(n_units)?;
    let fc = design.fixed_counts(n_units).expect("srs has fixed counts");
    let n1 = fc.n_treated[0] as f64;
    let n0 = n_units as f64 - n1;
    let alpha = vec![-1.0 / n0; n_units];
    let beta = vec![1.0 / n1 + 1.0 / n0; n_units];
    fixed_count_moments(&alpha, &beta, &fc)
}

/// Closed-form moments when the scheme is affine in own treatment under a
/// fixed-count design; `None` otherwise.
pub fn analytic_moments(
    scheme: &WeightScheme,
    data: &ExperimentData,
    design: &DesignDescriptor,
) -> Result<Option<WeightMoments>> {
    design.validate(data.n_units())?;
    let Some(fc) = design.fixed_counts(data.n_units()) else {
        return Ok(None);
    };
    match scheme.fixed_count_affine(data, &fc)? {
        None => Ok(None),
        Some((alpha, beta)) => match fixed_count_moments(&alpha, &beta, &fc) {
            Ok(m) => Ok(Some(m)),
            Err(Error::Unsupported(_)) => Ok(None),
            Err(e) => Err(e),
        },
    }
}

/// Analytic moments when available, Monte Carlo otherwise.
pub fn weight_moments(
    scheme: &WeightScheme,
    data: &ExperimentData,
    design: &DesignDescriptor,
    replications: usize,
    seed: u64,
) -> Result<WeightMoments> {
    match analytic_moments(scheme, data, design)? {
        Some(m) => Ok(m),
        None => mc_weight_moments_cached(scheme, data, design, replications, seed),
    }
}

#[derive(Clone)]
enum AuxAcc {
    None,
    Regression {
        gram: DMatrix<f64>,
        xi: DMatrix<f64>,
    },
    Contrast {
        exposed: Vec<f64>,
        n1: Vec<f64>,
        n0: Vec<f64>,
        m: Vec<f64>,
    },
}

impl AuxAcc {
    fn add(&mut self, aux: &DrawAux) {
        match (self, aux) {
            (AuxAcc::None, DrawAux::None) => {}
            (acc @ AuxAcc::None, DrawAux::Regression { xi }) => {
                *acc = AuxAcc::Regression {
                    gram: xi.transpose() * xi,
                    xi: xi.clone(),
                }
            }
            (AuxAcc::Regression { gram, xi: sum }, DrawAux::Regression { xi }) => {
                gram.gemm_tr(1.0, xi, xi, 1.0);
                *sum += xi;
            }
            (acc @ AuxAcc::None, DrawAux::Contrast { exposed, n1, n0 }) => {
                *acc = AuxAcc::Contrast {
                    exposed: exposed.iter().map(|&v| f64::from(v)).collect(),
                    n1: n1.iter().map(|&v| v as f64).collect(),
                    n0: n0.iter().map(|&v| v as f64).collect(),
                    m: n1.iter().zip(n0).map(|(&a, &b)| a.min(b) as f64).collect(),
                }
            }
            (
                AuxAcc::Contrast {
                    exposed: se,
                    n1: s1,
                    n0: s0,
                    m: sm,
                },
                DrawAux::Contrast { exposed, n1, n0 },
            ) => {
                for (a, &v) in se.iter_mut().zip(exposed) {
                    *a += f64::from(v);
                }
                for k in 0..n1.len() {
                    s1[k] += n1[k] as f64;
                    s0[k] += n0[k] as f64;
                    sm[k] += n1[k].min(n0[k]) as f64;
                }
            }
            _ => unreachable!("aux kind is fixed per scheme"),
        }
    }

    fn merge(&mut self, other: AuxAcc) {
        match (self, other) {
            (_, AuxAcc::None) => {}
            (acc @ AuxAcc::None, o) => *acc = o,
            (AuxAcc::Regression { gram, xi }, AuxAcc::Regression { gram: g2, xi: x2 }) => {
                *gram += g2;
                *xi += x2;
            }
            (
                AuxAcc::Contrast { exposed, n1, n0, m },
                AuxAcc::Contrast {
                    exposed: e2,
                    n1: a2,
                    n0: b2,
                    m: m2,
                },
            ) => {
                for (a, b) in exposed.iter_mut().zip(e2) {
                    *a += b;
                }
                for k in 0..n1.len() {
                    n1[k] += a2[k];
                    n0[k] += b2[k];
                    m[k] += m2[k];
                }
            }
            _ => unreachable!("aux kind is fixed per scheme"),
        }
    }
}

struct Acc {
    ok: usize,
    failed: usize,
    sum: Vec<f64>,
    // Central-moment bookkeeping for diag(Q) standard errors.
    pow2: Vec<f64>,
    pow3: Vec<f64>,
    pow4: Vec<f64>,
    cross: DMatrix<f64>,
    aux: AuxAcc,
}

impl Acc {
    fn new(n: usize) -> Self {
        Acc {
            ok: 0,
            failed: 0,
            sum: vec![0.0; n],
            pow2: vec![0.0; n],
            pow3: vec![0.0; n],
            pow4: vec![0.0; n],
            cross: DMatrix::zeros(n, n),
            aux: AuxAcc::None,
        }
    }

    fn merge(&mut self, o: Acc) {
        self.ok += o.ok;
        self.failed += o.failed;
        for i in 0..self.sum.len() {
            self.sum[i] += o.sum[i];
            self.pow2[i] += o.pow2[i];
            self.pow3[i] += o.pow3[i];
            self.pow4[i] += o.pow4[i];
        }
        self.cross += o.cross;
        self.aux.merge(o.aux);
    }
}

fn run_chunk(
    scheme: &WeightScheme,
    data: &ExperimentData,
    design: &DesignDescriptor,
    seed: u64,
    range: std::ops::Range<usize>,
) -> Acc {
    let n = data.n_units();
    let mut acc = Acc::new(n);
    let mut rows: Vec<f64> = Vec::with_capacity(range.len() * n);
    for r in range {
        let x = match &design.kind {
            crate::design::DesignKind::External { draws } => draws[r % draws.len()].clone(),
            _ => design.sample(n, &mut draw_rng(seed, r as u64)),
        };
        match scheme.draw(data, &x, r as u64) {
            Ok(d) => {
                acc.ok += 1;
                for (i, &w) in d.w.iter().enumerate() {
                    acc.sum[i] += w;
                    let w2 = w * w;
                    acc.pow2[i] += w2;
                    acc.pow3[i] += w2 * w;
                    acc.pow4[i] += w2 * w2;
                }
                rows.extend_from_slice(&d.w);
                acc.aux.add(&d.aux);
            }
            Err(_) => acc.failed += 1,
        }
    }
    if acc.ok > 0 {
        // rows is (ok × n) row-major, i.e. an n × ok column-major matrix.
        let w = DMatrix::from_column_slice(n, acc.ok, &rows);
        acc.cross.gemm(1.0, &w, &w.transpose(), 0.0);
    }
    acc
}

/// Sample moments over `replications` design draws seeded from `seed`.
/// Draw `r` uses an RNG derived from `(seed, r)`, and chunks are reduced in
/// a fixed order, so results do not depend on the worker count.
pub fn mc_weight_moments(
    scheme: &WeightScheme,
    data: &ExperimentData,
    design: &DesignDescriptor,
    replications: usize,
    seed: u64,
) -> Result<WeightMoments> {
    if replications < 2 {
        return Err(Error::TooFewReplications(replications));
    }
    let n = data.n_units();
    if n > MAX_DENSE_UNITS {
        return Err(Error::TooLarge(format!(
            "Monte Carlo moments need a dense {n}x{n} covariance"
        )));
    }
    design.validate(n)?;
    let chunks: Vec<std::ops::Range<usize>> = (0..replications)
        .step_by(CHUNK)
        .map(|s| s..(s + CHUNK).min(replications))
        .collect();
    let wave = rayon::current_num_threads().max(1) * 2;
    let mut total = Acc::new(n);
    for group in chunks.chunks(wave) {
        let parts: Vec<Acc> = group
            .par_iter()
            .map(|r| run_chunk(scheme, data, design, seed, r.clone()))
            .collect();
        for p in parts {
            total.merge(p);
        }
    }
    if total.failed * 2 > replications {
        return Err(Error::BuilderFailureRate {
            failed: total.failed,
            total: replications,
        });
    }
    if total.ok < 2 {
        return Err(Error::TooFewReplications(total.ok));
    }
    let r = total.ok as f64;
    let mean_w: Vec<f64> = total.sum.iter().map(|s| s / r).collect();
    let mean = DVector::from_column_slice(&mean_w);
    let raw = (&total.cross - &mean * mean.transpose() * r) / (r - 1.0);
    let (q, min_eigenvalue) = symmetrize_and_clip(&raw)?;

    let mut mean_se = Vec::with_capacity(n);
    let mut diag_se = Vec::with_capacity(n);
    for i in 0..n {
        let m = mean_w[i];
        let e2 = total.pow2[i] / r;
        let e3 = total.pow3[i] / r;
        let e4 = total.pow4[i] / r;
        let c2 = (e2 - m * m).max(0.0);
        let c4 = (e4 - 4.0 * m * e3 + 6.0 * m * m * e2 - 3.0 * m.powi(4)).max(0.0);
        mean_se.push((c2 / r).sqrt());
        diag_se.push(((c4 - c2 * c2).max(0.0) / r).sqrt());
    }
    let bar_w = centering_weights(scheme, &total.aux, total.ok, &mean_w)?;
    Ok(WeightMoments {
        mean_w,
        q: CovarianceMatrix::Dense(q),
        bar_w,
        method: MomentMethod::MonteCarlo {
            replications,
            seed,
            failed: total.failed,
            min_eigenvalue,
        },
        mean_w_se: Some(mean_se),
        q_diag_se: Some(diag_se),
    })
}

fn regression_contrast(scheme: &WeightScheme, d: usize) -> Result<Vec<f64>> {
    Ok(match &scheme.estimand {
        Estimand::Regression(spec) => spec.contrast.clone(),
        Estimand::BetaAdj { .. } => {
            let mut c = vec![0.0; d];
            c[d - 1] = 1.0;
            c
        }
        Estimand::EffectCurve { level, .. } => {
            let mut c = vec![0.0; d];
            if *level > 0 {
                c[*level as usize] = 1.0;
                c[0] = -1.0;
            }
            c
        }
        _ => unreachable!("regression aux only for regression estimands"),
    })
}

fn centering_weights(
    scheme: &WeightScheme,
    aux: &AuxAcc,
    ok: usize,
    mean_w: &[f64],
) -> Result<Vec<f64>> {
    let r = ok as f64;
    match aux {
        AuxAcc::None => Ok(mean_w.to_vec()),
        AuxAcc::Regression { gram, xi } => {
            // b̄_i = cᵀ (Σ_j E ξ_jξ_jᵀ)⁻¹ E ξ_i, dropping columns that never vary from zero.
            let d = gram.nrows();
            let c = regression_contrast(scheme, d)?;
            let scale = gram.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let keep: Vec<usize> = (0..d).filter(|&j| gram[(j, j)] > 1e-14 * scale).collect();
            for j in 0..d {
                if !keep.contains(&j) && c[j] != 0.0 {
                    return Err(Error::SingularDesign {
                        condition: f64::INFINITY,
                    });
                }
            }
            let g = gram.select_rows(&keep).select_columns(&keep) / r;
            let ck = DVector::from_iterator(keep.len(), keep.iter().map(|&j| c[j]));
            let coef = solve_gram(&g, &ck)?;
            let e_xi = xi.select_columns(&keep) / r;
            Ok((e_xi * coef).iter().copied().collect())
        }
        AuxAcc::Contrast { exposed, n1, n0, m } => {
            let classes = scheme.classes().expect("contrast schemes carry classes");
            let k = classes.n_classes();
            let class_weight: Vec<f64> = match &scheme.estimand {
                Estimand::Weighted { .. } => {
                    let retained = scheme.retained_classes().expect("weighted scheme");
                    let n_prime: usize = (0..k).filter(|&c| retained[c]).map(|c| classes.sizes[c]).sum();
                    (0..k)
                        .map(|c| {
                            if retained[c] {
                                classes.sizes[c] as f64 / n_prime as f64
                            } else {
                                0.0
                            }
                        })
                        .collect()
                }
                _ => {
                    let total: f64 = m.iter().sum();
                    m.iter().map(|v| v / total).collect()
                }
            };
            Ok(exposed
                .iter()
                .zip(&classes.class_of)
                .map(|(&e, &c)| {
                    if class_weight[c] == 0.0 {
                        return 0.0;
                    }
                    let p = e / r;
                    let (e1, e0) = (n1[c] / r, n0[c] / r);
                    let mut v = 0.0;
                    if e1 > 0.0 {
                        v += p / e1;
                    }
                    if e0 > 0.0 {
                        v -= (1.0 - p) / e0;
                    }
                    class_weight[c] * v
                })
                .collect())
        }
    }
}

fn cache_path(
    scheme: &WeightScheme,
    data: &ExperimentData,
    design: &DesignDescriptor,
    replications: usize,
    seed: u64,
) -> Option<PathBuf> {
    let dir = std::env::var_os("SPILLBOUND_CACHE_DIR")?;
    let mut h = Sha256::new();
    h.update(data.canonical_json().as_bytes());
    h.update(serde_json::to_string(scheme).ok()?.as_bytes());
    h.update(serde_json::to_string(design).ok()?.as_bytes());
    h.update(replications.to_le_bytes());
    h.update(seed.to_le_bytes());
    let digest = h.finalize();
    let name: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    Some(PathBuf::from(dir).join(format!("moments-{name}.json")))
}

/// [`mc_weight_moments`] with a disk cache in `$SPILLBOUND_CACHE_DIR`.
pub fn mc_weight_moments_cached(
    scheme: &WeightScheme,
    data: &ExperimentData,
    design: &DesignDescriptor,
    replications: usize,
    seed: u64,
) -> Result<WeightMoments> {
    let path = cache_path(scheme, data, design, replications, seed);
    if let Some(p) = &path {
        if let Ok(text) = std::fs::read_to_string(p) {
            if let Ok(m) = serde_json::from_str(&text) {
                return Ok(m);
            }
            log::warn!("ignoring unreadable moment cache {}", p.display());
        }
    }
    let m = mc_weight_moments(scheme, data, design, replications, seed)?;
    if let Some(p) = &path {
        let write = std::fs::create_dir_all(p.parent().expect("cache file has a parent"))
            .and_then(|_| std::fs::write(p, serde_json::to_string(&m).expect("moments serialize")));
        if let Err(e) = write {
            log::warn!("could not write moment cache {}: {e}", p.display());
        }
    }
    Ok(m)
}

/// Monte Carlo means of per-unit functionals, with standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlColumns {
    pub names: Vec<String>,
    pub means: Vec<Vec<f64>>,
    pub standard_errors: Vec<Vec<f64>>,
}

/// Per-unit expectations of the given terms over design draws (e.g. `E[V_i]`,
/// `E[X_i V_i]`), for use as regression controls.
pub fn expectation_controls(
    data: &ExperimentData,
    design: &DesignDescriptor,
    terms: &[Term],
    replications: usize,
    seed: u64,
) -> Result<ControlColumns> {
    if replications < 2 {
        return Err(Error::TooFewReplications(replications));
    }
    let n = data.n_units();
    design.validate(n)?;
    let names: Vec<String> = terms
        .iter()
        .map(|t| serde_json::to_string(t).expect("terms serialize"))
        .collect();
    let chunks: Vec<std::ops::Range<usize>> = (0..replications)
        .step_by(CHUNK)
        .map(|s| s..(s + CHUNK).min(replications))
        .collect();
    type Sums = (Vec<Vec<f64>>, Vec<Vec<f64>>);
    let parts: Vec<Result<Sums>> = chunks
        .par_iter()
        .map(|range| {
            let mut s = vec![vec![0.0; n]; terms.len()];
            let mut s2 = vec![vec![0.0; n]; terms.len()];
            for r in range.clone() {
                let x = design.sample(n, &mut draw_rng(seed, r as u64));
                for (t, term) in terms.iter().enumerate() {
                    let col = term_columns(term, data, &x)?;
                    if col.len() != 1 {
                        return Err(Error::Config(format!(
                            "control term {} must produce one column",
                            names[t]
                        )));
                    }
                    for (i, v) in col[0].iter().enumerate() {
                        s[t][i] += v;
                        s2[t][i] += v * v;
                    }
                }
            }
            Ok((s, s2))
        })
        .collect();
    let mut sum = vec![vec![0.0; n]; terms.len()];
    let mut sum2 = vec![vec![0.0; n]; terms.len()];
    for p in parts {
        let (s, s2) = p?;
        for t in 0..terms.len() {
            for i in 0..n {
                sum[t][i] += s[t][i];
                sum2[t][i] += s2[t][i];
            }
        }
    }
    let r = replications as f64;
    let means: Vec<Vec<f64>> = sum.iter().map(|c| c.iter().map(|v| v / r).collect()).collect();
    let standard_errors = (0..terms.len())
        .map(|t| {
            (0..n)
                .map(|i| {
                    let m = means[t][i];
                    ((sum2[t][i] / r - m * m).max(0.0) * r / (r - 1.0) / r).sqrt()
                })
                .collect()
        })
        .collect();
    Ok(ControlColumns {
        names,
        means,
        standard_errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Network;
    use crate::estimands::tau1_weights;
    use std::collections::BTreeMap;

    fn plain(n: usize, n1: usize) -> ExperimentData {
        let x = (0..n).map(|i| u8::from(i < n1)).collect();
        ExperimentData::new(vec![0.0; n], x, Network::empty(n), BTreeMap::new(), None).unwrap()
    }

    #[test]
    fn bias_bound_examples() {
        let (lo, hi) = bias_bound(&[0.1, -0.2, 0.05]);
        assert!((lo + 0.2).abs() < 1e-15 && (hi - 0.15).abs() < 1e-15);
        assert_eq!(bias_bound(&[0.0; 4]), (0.0, 0.0));
    }

    #[test]
    fn analytic_tau1_entries() {
        let m = analytic_tau1_moments(4, &DesignDescriptor::srs(2, 0)).unwrap();
        assert!(m.mean_w.iter().all(|&v| v == 0.0));
        assert!((m.q.entry(0, 0) - 0.25).abs() < 1e-15);
        assert!((m.q.entry(0, 1) + 1.0 / 12.0).abs() < 1e-15);
        assert_eq!(bias_bound(&m.mean_w), (0.0, 0.0));
        assert!(m.q.quad_form(&[1.0; 4]).abs() < 1e-15);
        assert!(analytic_tau1_moments(4, &DesignDescriptor::bernoulli(0.5, 0)).is_err());
    }

    #[test]
    fn analytic_tau1_matches_enumeration() {
        // All C(4,2) assignments are equally likely.
        let theta = [1.0, 1.0, 0.0, 0.0];
        let mut vals = Vec::new();
        for a in 0..4 {
            for b in (a + 1)..4 {
                let mut x = [0u8; 4];
                x[a] = 1;
                x[b] = 1;
                let w = tau1_weights(&x).unwrap();
                vals.push(w.iter().zip(&theta).map(|(p, q)| p * q).sum::<f64>());
            }
        }
        let mean = vals.iter().sum::<f64>() / 6.0;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 6.0;
        let m = analytic_tau1_moments(4, &DesignDescriptor::srs(2, 0)).unwrap();
        assert!((m.q.quad_form(&theta) - var).abs() < 1e-14);
    }

    #[test]
    fn blocked_quad_form_matches_dense() {
        let m = analytic_tau1_moments(7, &DesignDescriptor::srs(3, 0)).unwrap();
        let dense = CovarianceMatrix::Dense(m.q.to_dense().unwrap());
        let t = [1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0];
        assert!((m.q.quad_form(&t) - dense.quad_form(&t)).abs() < 1e-15);
    }

    #[test]
    fn mc_tau1_small() {
        let data = plain(4, 2);
        let scheme = WeightScheme::new("tau1", Estimand::Tau1, &data).unwrap();
        let design = DesignDescriptor::srs(2, 0);
        let m = mc_weight_moments(&scheme, &data, &design, 100_000, 3).unwrap();
        let se = m.mean_w_se.as_ref().unwrap();
        let dse = m.q_diag_se.as_ref().unwrap();
        for i in 0..4 {
            assert!(m.mean_w[i].abs() <= 3.0 * se[i] + 1e-15);
            // w_i² is constant, so only the centering term moves the diagonal.
            assert!((m.q.entry(i, i) - 0.25).abs() <= 3.0 * dse[i] + 1e-4);
            for j in 0..i {
                assert!((m.q.entry(i, j) + 1.0 / 12.0).abs() < 0.01);
            }
        }
    }

    #[test]
    fn mc_is_thread_count_independent() {
        let data = plain(6, 3);
        let scheme = WeightScheme::new("tau1", Estimand::Tau1, &data).unwrap();
        let design = DesignDescriptor::srs(3, 0);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| mc_weight_moments(&scheme, &data, &design, 3000, 9).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn too_few_replications() {
        let data = plain(4, 2);
        let scheme = WeightScheme::new("tau1", Estimand::Tau1, &data).unwrap();
        assert!(matches!(
            mc_weight_moments(&scheme, &data, &DesignDescriptor::srs(2, 0), 1, 0),
            Err(Error::TooFewReplications(1))
        ));
    }
}
