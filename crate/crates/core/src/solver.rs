//! Bounds `max/min b̄ᵀt ± z·√(tᵀQt + qᵀt)` over integer boxes `0 ≤ t ≤ u`
//! (binary when `u = 1`) with optional linear constraints.
//!
//! The relaxation replaces `t_i²` by its secant over the node box, which is
//! concave once a diagonal split `D` with `Q − D ⪯ 0` is subtracted. Node
//! values are certified upper bounds built from a tangent of the radicand,
//! so a loosely converged ascent still yields a valid bound.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::split::{split, SplitCertificate, SplitMethod};

/// Largest number of enumerated points accepted by [`brute_force`].
pub const MAX_ENUMERATION: u128 = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Max,
    Min,
}

impl Sense {
    fn sign(self) -> f64 {
        match self {
            Sense::Max => 1.0,
            Sense::Min => -1.0,
        }
    }
}

/// `coefᵀt ≤ rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub coef: Vec<f64>,
    pub rhs: f64,
}

impl LinearConstraint {
    /// `Σ t_i ≤ cap · n_units`: the mean of the counterfactual is at most `cap`.
    pub fn mean_cap(weights: &[f64], cap: f64, n_units: usize) -> Self {
        LinearConstraint {
            coef: weights.to_vec(),
            rhs: cap * n_units as f64,
        }
    }

    fn value(&self, t: &[f64]) -> f64 {
        self.coef.iter().zip(t).map(|(a, b)| a * b).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProblemFile", into = "ProblemFile")]
pub struct BoundProblem {
    pub bar_w: Vec<f64>,
    pub q: DMatrix<f64>,
    /// Linear radicand term; zero for binary problems.
    pub q_lin: Vec<f64>,
    /// Integer upper bounds; all ones for binary problems.
    pub upper: Vec<u64>,
    pub z: f64,
    pub sense: Sense,
    pub constraints: Vec<LinearConstraint>,
    pub split: Option<SplitCertificate>,
}

/// On-disk problem format. `q` is row-major nested arrays; omitted `upper`
/// means binary, omitted `q_lin` means zero.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ProblemFile {
    bar_w: Vec<f64>,
    q: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    q_lin: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    upper: Option<Vec<u64>>,
    z: f64,
    sense: Sense,
    #[serde(default)]
    constraints: Vec<LinearConstraint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split: Option<SplitCertificate>,
}

impl TryFrom<ProblemFile> for BoundProblem {
    type Error = Error;
    fn try_from(f: ProblemFile) -> Result<Self> {
        let n = f.bar_w.len();
        if f.q.len() != n || f.q.iter().any(|r| r.len() != n) {
            return Err(Error::LengthMismatch {
                what: "q",
                got: f.q.len(),
                expected: n,
            });
        }
        let q = DMatrix::from_fn(n, n, |i, j| f.q[i][j]);
        BoundProblem::new(
            f.bar_w,
            q,
            f.q_lin.unwrap_or_else(|| vec![0.0; n]),
            f.upper.unwrap_or_else(|| vec![1; n]),
            f.z,
            f.sense,
            f.constraints,
        )
        .map(|mut p| {
            p.split = f.split;
            p
        })
    }
}

impl From<BoundProblem> for ProblemFile {
    fn from(p: BoundProblem) -> Self {
        let binary = p.upper.iter().all(|&u| u == 1);
        let no_lin = p.q_lin.iter().all(|&v| v == 0.0);
        ProblemFile {
            q: p.q.row_iter().map(|r| r.iter().copied().collect()).collect(),
            bar_w: p.bar_w,
            q_lin: (!no_lin).then_some(p.q_lin),
            upper: (!binary).then_some(p.upper),
            z: p.z,
            sense: p.sense,
            constraints: p.constraints,
            split: p.split,
        }
    }
}

impl BoundProblem {
    pub fn new(
        bar_w: Vec<f64>,
        q: DMatrix<f64>,
        q_lin: Vec<f64>,
        upper: Vec<u64>,
        z: f64,
        sense: Sense,
        constraints: Vec<LinearConstraint>,
    ) -> Result<Self> {
        let n = bar_w.len();
        if q.nrows() != n || q.ncols() != n {
            return Err(Error::LengthMismatch {
                what: "q",
                got: q.nrows(),
                expected: n,
            });
        }
        crate::linalg::check_symmetric(&q)?;
        for (what, len) in [("q_lin", q_lin.len()), ("upper", upper.len())] {
            if len != n {
                return Err(Error::LengthMismatch {
                    what,
                    got: len,
                    expected: n,
                });
            }
        }
        if !(z >= 0.0) {
            return Err(Error::Config(format!("z must be nonnegative, got {z}")));
        }
        for c in &constraints {
            if c.coef.len() != n {
                return Err(Error::LengthMismatch {
                    what: "constraint coefficients",
                    got: c.coef.len(),
                    expected: n,
                });
            }
        }
        Ok(BoundProblem {
            bar_w,
            q,
            q_lin,
            upper,
            z,
            sense,
            constraints,
            split: None,
        })
    }

    /// Binary problem `b̄ᵀϑ ± z√(ϑᵀQϑ)`.
    pub fn binary(bar_w: Vec<f64>, q: DMatrix<f64>, z: f64, sense: Sense) -> Result<Self> {
        let n = bar_w.len();
        Self::new(bar_w, q, vec![0.0; n], vec![1; n], z, sense, Vec::new())
    }

    pub fn with_constraints(mut self, constraints: Vec<LinearConstraint>) -> Result<Self> {
        let n = self.n();
        if let Some(c) = constraints.iter().find(|c| c.coef.len() != n) {
            return Err(Error::LengthMismatch {
                what: "constraint coefficients",
                got: c.coef.len(),
                expected: n,
            });
        }
        self.constraints = constraints;
        Ok(self)
    }

    pub fn with_sense(mut self, sense: Sense) -> Self {
        self.sense = sense;
        self
    }

    pub fn with_z(mut self, z: f64) -> Self {
        self.z = z;
        self
    }

    /// Computes and attaches a split of `q`.
    pub fn with_split(mut self, method: SplitMethod) -> Result<Self> {
        self.split = Some(split(&self.q, method)?);
        Ok(self)
    }

    fn ensure_split(&self) -> Result<SplitCertificate> {
        match &self.split {
            Some(s) => {
                if s.d.len() != self.n() {
                    return Err(Error::LengthMismatch {
                        what: "split diagonal",
                        got: s.d.len(),
                        expected: self.n(),
                    });
                }
                Ok(s.clone())
            }
            None => split(&self.q, SplitMethod::SdpLite),
        }
    }

    pub fn n(&self) -> usize {
        self.bar_w.len()
    }

    pub fn is_binary(&self) -> bool {
        self.upper.iter().all(|&u| u == 1)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// True radicand `tᵀQt + qᵀt` (no split).
    pub fn radicand(&self, t: &[f64]) -> f64 {
        let tv = DVector::from_column_slice(t);
        tv.dot(&(&self.q * &tv)) + self.q_lin.iter().zip(t).map(|(a, b)| a * b).sum::<f64>()
    }

    /// `b̄ᵀt ± z√(tᵀQt + qᵀt)` evaluated directly, clamping round-off negativity.
    pub fn direct_objective(&self, t: &[f64]) -> f64 {
        let lin: f64 = self.bar_w.iter().zip(t).map(|(a, b)| a * b).sum();
        lin + self.sense.sign() * self.z * self.radicand(t).max(0.0).sqrt()
    }

    pub fn is_feasible(&self, t: &[f64]) -> bool {
        self.constraints
            .iter()
            .all(|c| c.value(t) <= c.rhs + 1e-12 * (1.0 + c.rhs.abs()))
    }
}

/// Objective with the split radicand over the root box, as used by the
/// relaxation: `b̄ᵀt ± z√(tᵀ(Q−D)t + Σ D_i u_i t_i + qᵀt)`.
pub fn objective(t: &[f64], problem: &BoundProblem) -> Result<f64> {
    let split = problem.ensure_split()?;
    let prep = Prepared::new(problem, &split.d);
    let zeros = vec![0.0; prep.n];
    let (r, scale) = prep.relaxed_radicand_parts(t, &zeros, &prep.upper);
    if r < -1e-10 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::SplitViolated(r));
    }
    let lin: f64 = problem.bar_w.iter().zip(t).map(|(a, b)| a * b).sum();
    Ok(lin + problem.sense.sign() * problem.z * r.max(0.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Exact,
    RelaxationBound,
    BudgetExhaustedBound,
}

impl SolveStatus {
    pub fn name(self) -> &'static str {
        match self {
            SolveStatus::Exact => "exact",
            SolveStatus::RelaxationBound => "relaxation-bound",
            SolveStatus::BudgetExhaustedBound => "budget-exhausted-bound",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    /// Outer bound (exact optimum when `status` is exact).
    pub value: f64,
    /// Best integer point found; for relaxations, the rounded relaxed point.
    pub incumbent: Vec<u64>,
    /// Objective at the incumbent.
    pub incumbent_value: f64,
    pub status: SolveStatus,
    pub nodes: usize,
    pub gap: f64,
    /// Relaxed point of the root (relaxations only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relaxed_point: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub split: SplitMethod,
    pub node_budget: usize,
    /// Wall-clock limit in seconds.
    pub time_budget: Option<f64>,
    pub max_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            split: SplitMethod::SdpLite,
            node_budget: 20_000,
            time_budget: Some(60.0),
            max_iterations: 2_000,
        }
    }
}

/// The problem in internal max form `cᵀt + z√r(t)`.
struct Prepared<'a> {
    n: usize,
    c: Vec<f64>,
    q: &'a DMatrix<f64>,
    qd: DMatrix<f64>,
    d: Vec<f64>,
    q_lin: &'a [f64],
    z: f64,
    cons: &'a [LinearConstraint],
    upper: Vec<f64>,
    max_iterations: usize,
}

impl<'a> Prepared<'a> {
    fn new(p: &'a BoundProblem, d: &[f64]) -> Self {
        let s = p.sense.sign();
        let mut qd = p.q.clone();
        for (i, &di) in d.iter().enumerate() {
            qd[(i, i)] -= di;
        }
        Prepared {
            n: p.n(),
            c: p.bar_w.iter().map(|v| s * v).collect(),
            q: &p.q,
            qd,
            d: d.to_vec(),
            q_lin: &p.q_lin,
            z: p.z,
            cons: &p.constraints,
            upper: p.upper.iter().map(|&u| u as f64).collect(),
            max_iterations: SolverConfig::default().max_iterations,
        }
    }

    /// Relaxed radicand over box `[l, u]` and the magnitude of its parts.
    fn relaxed_radicand_parts(&self, x: &[f64], l: &[f64], u: &[f64]) -> (f64, f64) {
        let xv = DVector::from_column_slice(x);
        let quad = xv.dot(&(&self.qd * &xv));
        let mut lin = 0.0;
        let mut mag = quad.abs();
        for i in 0..self.n {
            let term = self.d[i] * ((l[i] + u[i]) * x[i] - l[i] * u[i]) + self.q_lin[i] * x[i];
            lin += term;
            mag += term.abs();
        }
        (quad + lin, mag)
    }

    fn relaxed_radicand(&self, x: &[f64], l: &[f64], u: &[f64]) -> f64 {
        self.relaxed_radicand_parts(x, l, u).0
    }

    fn radicand_grad(&self, x: &[f64], l: &[f64], u: &[f64]) -> Vec<f64> {
        let xv = DVector::from_column_slice(x);
        let qx = &self.qd * &xv;
        (0..self.n)
            .map(|i| 2.0 * qx[i] + self.d[i] * (l[i] + u[i]) + self.q_lin[i])
            .collect()
    }

    fn relaxed_value(&self, x: &[f64], l: &[f64], u: &[f64]) -> f64 {
        let lin: f64 = self.c.iter().zip(x).map(|(a, b)| a * b).sum();
        lin + self.z * self.relaxed_radicand(x, l, u).max(0.0).sqrt()
    }

    fn relaxed_grad(&self, x: &[f64], l: &[f64], u: &[f64]) -> Vec<f64> {
        if self.z == 0.0 {
            return self.c.clone();
        }
        let r = self.relaxed_radicand(x, l, u).max(1e-300);
        let gr = self.radicand_grad(x, l, u);
        let f = self.z / (2.0 * r.sqrt());
        self.c.iter().zip(&gr).map(|(c, g)| c + f * g).collect()
    }

    /// True objective at an integer point.
    fn true_value(&self, t: &[f64]) -> f64 {
        let tv = DVector::from_column_slice(t);
        let r = tv.dot(&(self.q * &tv)) + self.q_lin.iter().zip(t).map(|(a, b)| a * b).sum::<f64>();
        let lin: f64 = self.c.iter().zip(t).map(|(a, b)| a * b).sum();
        lin + self.z * r.max(0.0).sqrt()
    }

    fn feasible(&self, t: &[f64]) -> bool {
        self.cons
            .iter()
            .all(|c| c.value(t) <= c.rhs + 1e-12 * (1.0 + c.rhs.abs()))
    }

    fn project(&self, v: &[f64], l: &[f64], u: &[f64]) -> Vec<f64> {
        project_box_halfspaces(v, l, u, self.cons)
    }

    /// Projected-gradient ascent on the concave relaxation over `[l, u]`.
    fn ascend(&self, start: &[f64], l: &[f64], u: &[f64]) -> Vec<f64> {
        let tol = 1e-9 * (1.0 + u.iter().fold(0.0f64, |a, &b| a.max(b)));
        let mut x = self.project(start, l, u);
        if l == u {
            return x;
        }
        let mut fx = self.relaxed_value(&x, l, u);
        let mut g = self.relaxed_grad(&x, l, u);
        let gnorm = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let width = (0..self.n).map(|i| u[i] - l[i]).fold(0.0f64, f64::max);
        let mut alpha = if gnorm > 0.0 { width / gnorm } else { 1.0 };
        for _ in 0..self.max_iterations {
            let mut y;
            let mut fy;
            let mut tries = 0;
            loop {
                let trial: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a + alpha * b).collect();
                y = self.project(&trial, l, u);
                fy = self.relaxed_value(&y, l, u);
                let pred: f64 = g.iter().zip(y.iter().zip(&x)).map(|(gi, (yi, xi))| gi * (yi - xi)).sum();
                if fy >= fx + 1e-4 * pred || tries > 60 {
                    break;
                }
                alpha *= 0.5;
                tries += 1;
            }
            let step = y.iter().zip(&x).fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
            if fy < fx {
                break;
            }
            let g_new = self.relaxed_grad(&y, l, u);
            let mut ss = 0.0;
            let mut sy = 0.0;
            for i in 0..self.n {
                let s = y[i] - x[i];
                ss += s * s;
                sy += s * (g_new[i] - g[i]);
            }
            x = y;
            fx = fy;
            g = g_new;
            if step <= tol {
                break;
            }
            alpha = if sy < 0.0 { (ss / -sy).clamp(1e-12, 1e12) } else { (alpha * 2.0).min(1e12) };
        }
        x
    }

    /// Upper bound on the relaxed maximum over `[l, u]` from a tangent of the
    /// radicand at `x` and `√R ≤ R/(2s) + s/2`.
    fn certified_bound(&self, x: &[f64], l: &[f64], u: &[f64]) -> f64 {
        let primal: f64 = self.c.iter().zip(x).map(|(a, b)| a * b).sum();
        if self.z == 0.0 {
            return lp_box_max(&self.c, l, u, self.cons, primal);
        }
        let r = self.relaxed_radicand(x, l, u).max(0.0);
        let gr = self.radicand_grad(x, l, u);
        let const0 = r - gr.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        let target = self.relaxed_value(x, l, u);
        let eval = |s: f64| {
            let k = self.z / (2.0 * s);
            let g: Vec<f64> = self.c.iter().zip(&gr).map(|(c, v)| c + k * v).collect();
            lp_box_max(&g, l, u, self.cons, target - k * const0 - self.z * s / 2.0)
                + k * const0
                + self.z * s / 2.0
        };
        let mag = r.max(gr.iter().zip(u).map(|(a, b)| (a * b).abs()).sum::<f64>()).max(1e-300);
        let s0 = if r > 0.0 { r.sqrt() } else { mag.sqrt() * 1e-6 };
        let mut best = eval(s0);
        // Golden-section search over log s.
        let (mut a, mut b) = (s0.ln() - 14.0, s0.ln() + 4.0);
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        let mut c1 = b - phi * (b - a);
        let mut c2 = a + phi * (b - a);
        let mut f1 = eval(c1.exp());
        let mut f2 = eval(c2.exp());
        for _ in 0..70 {
            if f1 <= f2 {
                b = c2;
                c2 = c1;
                f2 = f1;
                c1 = b - phi * (b - a);
                f1 = eval(c1.exp());
            } else {
                a = c1;
                c1 = c2;
                f1 = f2;
                c2 = a + phi * (b - a);
                f2 = eval(c2.exp());
            }
            best = best.min(f1).min(f2);
        }
        best
    }
}

/// Projection onto `[l, u] ∩ {aᵀy ≤ b}`: clamping, exact bisection for one
/// halfspace, Dykstra's alternating projections for several.
pub fn project_box_halfspaces(v: &[f64], l: &[f64], u: &[f64], cons: &[LinearConstraint]) -> Vec<f64> {
    let clamp = |w: &[f64]| -> Vec<f64> {
        w.iter()
            .zip(l.iter().zip(u))
            .map(|(x, (lo, hi))| x.clamp(*lo, *hi))
            .collect()
    };
    match cons.len() {
        0 => clamp(v),
        1 => project_one(v, l, u, &cons[0]),
        _ => {
            let n = v.len();
            let mut x = v.to_vec();
            let mut incr = vec![vec![0.0; n]; cons.len() + 1];
            for _ in 0..500 {
                let prev = x.clone();
                let y: Vec<f64> = x.iter().zip(&incr[0]).map(|(a, b)| a + b).collect();
                let px = clamp(&y);
                incr[0] = y.iter().zip(&px).map(|(a, b)| a - b).collect();
                x = px;
                for (k, c) in cons.iter().enumerate() {
                    let y: Vec<f64> = x.iter().zip(&incr[k + 1]).map(|(a, b)| a + b).collect();
                    let viol = c.value(&y) - c.rhs;
                    let nn: f64 = c.coef.iter().map(|a| a * a).sum();
                    let px: Vec<f64> = if viol > 0.0 && nn > 0.0 {
                        y.iter().zip(&c.coef).map(|(a, b)| a - viol / nn * b).collect()
                    } else {
                        y.clone()
                    };
                    incr[k + 1] = y.iter().zip(&px).map(|(a, b)| a - b).collect();
                    x = px;
                }
                let change = x.iter().zip(&prev).fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
                if change < 1e-12 {
                    break;
                }
            }
            clamp(&x)
        }
    }
}

fn project_one(v: &[f64], l: &[f64], u: &[f64], c: &LinearConstraint) -> Vec<f64> {
    let at = |mu: f64| -> Vec<f64> {
        v.iter()
            .zip(&c.coef)
            .zip(l.iter().zip(u))
            .map(|((x, a), (lo, hi))| (x - mu * a).clamp(*lo, *hi))
            .collect()
    };
    let y0 = at(0.0);
    if c.value(&y0) <= c.rhs {
        return y0;
    }
    let min_possible: f64 = c
        .coef
        .iter()
        .zip(l.iter().zip(u))
        .map(|(a, (lo, hi))| (a * lo).min(a * hi))
        .sum();
    if min_possible > c.rhs {
        // Infeasible: return the point minimizing aᵀy.
        return c
            .coef
            .iter()
            .zip(l.iter().zip(u))
            .map(|(a, (lo, hi))| if *a > 0.0 { *lo } else { *hi })
            .collect();
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while c.value(&at(hi)) > c.rhs {
        hi *= 2.0;
        if hi > 1e300 {
            break;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if c.value(&at(mid)) > c.rhs {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    at(hi)
}

/// Upper bound on `max gᵀy` over `[l, u] ∩ {Ay ≤ b}` by Lagrangian duality:
/// exact for zero or one constraint, a subgradient dual bound otherwise.
/// Returns `-∞` when the dual proves infeasibility.
fn lp_box_max(g: &[f64], l: &[f64], u: &[f64], cons: &[LinearConstraint], target: f64) -> f64 {
    let dual = |lambda: &[f64]| -> (f64, Vec<f64>) {
        let mut val: f64 = lambda.iter().zip(cons).map(|(m, c)| m * c.rhs).sum();
        let mut y = vec![0.0; g.len()];
        for i in 0..g.len() {
            let mut gi = g[i];
            for (m, c) in lambda.iter().zip(cons) {
                gi -= m * c.coef[i];
            }
            y[i] = if gi > 0.0 { u[i] } else { l[i] };
            val += gi * y[i];
        }
        (val, y)
    };
    match cons.len() {
        0 => dual(&[]).0,
        1 => {
            let c = &cons[0];
            let min_possible: f64 = c
                .coef
                .iter()
                .zip(l.iter().zip(u))
                .map(|(a, (lo, hi))| (a * lo).min(a * hi))
                .sum();
            if min_possible > c.rhs + 1e-12 * (1.0 + c.rhs.abs()) {
                return f64::NEG_INFINITY;
            }
            // φ(λ) is convex piecewise linear with kinks at g_i/a_i.
            let (_, y0) = dual(&[0.0]);
            let mut slope = c.rhs - c.value(&y0);
            if slope >= 0.0 {
                return dual(&[0.0]).0;
            }
            let mut kinks: Vec<(f64, f64)> = (0..g.len())
                .filter(|&i| c.coef[i] != 0.0 && u[i] > l[i])
                .map(|i| (g[i] / c.coef[i], c.coef[i].abs() * (u[i] - l[i])))
                .filter(|&(k, _)| k > 0.0)
                .collect();
            kinks.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut lambda = 0.0;
            for (k, inc) in kinks {
                lambda = k;
                slope += inc;
                if slope >= 0.0 {
                    break;
                }
            }
            dual(&[lambda]).0
        }
        _ => {
            let mut lambda = vec![0.0; cons.len()];
            let (mut best, _) = dual(&lambda);
            for it in 0..400 {
                let (val, y) = dual(&lambda);
                best = best.min(val);
                let sub: Vec<f64> = cons.iter().map(|c| c.rhs - c.value(&y)).collect();
                let nn: f64 = sub.iter().map(|s| s * s).sum();
                if nn == 0.0 {
                    break;
                }
                let gap = (val - target).max(1e-12 * (1.0 + val.abs()));
                let step = gap / nn / (1.0 + it as f64 / 50.0);
                for (m, s) in lambda.iter_mut().zip(&sub) {
                    *m = (*m - step * s).max(0.0);
                }
            }
            best
        }
    }
}

struct Node {
    bound: f64,
    id: usize,
    l: Vec<f64>,
    u: Vec<f64>,
    x: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Node {
    fn cmp(&self, o: &Self) -> Ordering {
        self.bound
            .total_cmp(&o.bound)
            .then_with(|| o.id.cmp(&self.id))
    }
}

struct Incumbent {
    value: f64,
    t: Option<Vec<f64>>,
}

impl Incumbent {
    fn offer(&mut self, prep: &Prepared<'_>, t: Vec<f64>) {
        if !prep.feasible(&t) {
            return;
        }
        let v = prep.true_value(&t);
        if v > self.value {
            self.value = v;
            self.t = Some(t);
        }
    }
}

/// Improves an integer point by coordinate moves of shrinking size.
fn local_search(prep: &Prepared<'_>, t: &mut [f64], l: &[f64], u: &[f64]) -> f64 {
    let n = prep.n;
    let tv = DVector::from_column_slice(t);
    let mut qt: Vec<f64> = (prep.q * &tv).iter().copied().collect();
    let mut lin: f64 = prep.c.iter().zip(t.iter()).map(|(a, b)| a * b).sum();
    let mut rad: f64 = t.iter().zip(&qt).map(|(a, b)| a * b).sum::<f64>()
        + prep.q_lin.iter().zip(t.iter()).map(|(a, b)| a * b).sum::<f64>();
    let mut cons_val: Vec<f64> = prep.cons.iter().map(|c| c.value(t)).collect();
    let value = |lin: f64, rad: f64| lin + prep.z * rad.max(0.0).sqrt();
    let mut best = value(lin, rad);
    let max_width = (0..n).map(|i| u[i] - l[i]).fold(0.0f64, f64::max);
    let mut step = 1.0;
    while step * 2.0 <= max_width {
        step *= 2.0;
    }
    for _pass in 0..200 {
        let mut improved = false;
        for i in 0..n {
            for dir in [1.0, -1.0] {
                let delta = (dir * step).clamp(l[i] - t[i], u[i] - t[i]);
                if delta == 0.0 {
                    continue;
                }
                let new_lin = lin + prep.c[i] * delta;
                let new_rad = rad + 2.0 * delta * qt[i] + delta * delta * prep.q[(i, i)] + prep.q_lin[i] * delta;
                let ok = prep.cons.iter().zip(&cons_val).all(|(c, v)| {
                    v + c.coef[i] * delta <= c.rhs + 1e-12 * (1.0 + c.rhs.abs())
                });
                let cand = value(new_lin, new_rad);
                if ok && cand > best + 1e-15 * (1.0 + best.abs()) {
                    t[i] += delta;
                    for (k, q) in qt.iter_mut().enumerate() {
                        *q += prep.q[(k, i)] * delta;
                    }
                    for (v, c) in cons_val.iter_mut().zip(prep.cons) {
                        *v += c.coef[i] * delta;
                    }
                    lin = new_lin;
                    rad = new_rad;
                    best = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            if step <= 1.0 {
                break;
            }
            step = (step / 2.0).floor().max(1.0);
        }
    }
    best
}

/// Incumbent candidates from a relaxed point.
fn heuristics(prep: &Prepared<'_>, x: &[f64], l: &[f64], u: &[f64], inc: &mut Incumbent, sweep: bool) {
    let n = prep.n;
    let mut rounded: Vec<f64> = x.iter().zip(l.iter().zip(u)).map(|(v, (lo, hi))| v.round().clamp(*lo, *hi)).collect();
    if !prep.feasible(&rounded) {
        rounded = x.iter().zip(l.iter().zip(u)).map(|(v, (lo, hi))| v.floor().clamp(*lo, *hi)).collect();
    }
    if prep.feasible(&rounded) {
        local_search(prep, &mut rounded, l, u);
        inc.offer(prep, rounded);
    }
    let free: Vec<usize> = (0..n).filter(|&i| u[i] > l[i]).collect();
    if !free.is_empty() && free.len() <= 10 && u.iter().any(|&v| v > 1.0) {
        for mask in 0u32..(1 << free.len()) {
            let mut t: Vec<f64> = x.iter().map(|v| v.floor()).collect();
            for (b, &i) in free.iter().enumerate() {
                if mask >> b & 1 == 1 {
                    t[i] = x[i].ceil();
                }
                t[i] = t[i].clamp(l[i], u[i]);
            }
            for i in 0..n {
                t[i] = t[i].clamp(l[i], u[i]);
            }
            if prep.feasible(&t) {
                local_search(prep, &mut t, l, u);
                inc.offer(prep, t);
            }
        }
    }
    if sweep && u.iter().zip(l).all(|(hi, lo)| hi - lo <= 1.0) {
        // Threshold sweep: switch on free coordinates in decreasing relaxed value.
        let mut order = free.clone();
        order.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));
        let mut t: Vec<f64> = l.to_vec();
        let tv = DVector::from_column_slice(&t);
        let mut qt: Vec<f64> = (prep.q * &tv).iter().copied().collect();
        let mut lin: f64 = prep.c.iter().zip(&t).map(|(a, b)| a * b).sum();
        let mut rad: f64 = t.iter().zip(&qt).map(|(a, b)| a * b).sum::<f64>()
            + prep.q_lin.iter().zip(&t).map(|(a, b)| a * b).sum::<f64>();
        let mut cons_val: Vec<f64> = prep.cons.iter().map(|c| c.value(&t)).collect();
        let mut best = (f64::NEG_INFINITY, 0usize);
        let feasible_now = |cv: &[f64]| {
            prep.cons
                .iter()
                .zip(cv)
                .all(|(c, v)| *v <= c.rhs + 1e-12 * (1.0 + c.rhs.abs()))
        };
        if feasible_now(&cons_val) {
            best = (lin + prep.z * rad.max(0.0).sqrt(), 0);
        }
        for (k, &i) in order.iter().enumerate() {
            rad += 2.0 * qt[i] + prep.q[(i, i)] + prep.q_lin[i];
            lin += prep.c[i];
            for (j, q) in qt.iter_mut().enumerate() {
                *q += prep.q[(j, i)];
            }
            for (v, c) in cons_val.iter_mut().zip(prep.cons) {
                *v += c.coef[i];
            }
            t[i] = u[i];
            if feasible_now(&cons_val) {
                let v = lin + prep.z * rad.max(0.0).sqrt();
                if v > best.0 {
                    best = (v, k + 1);
                }
            }
        }
        if best.0 > f64::NEG_INFINITY {
            let mut cand = l.to_vec();
            for &i in &order[..best.1] {
                cand[i] = u[i];
            }
            local_search(prep, &mut cand, l, u);
            inc.offer(prep, cand);
        }
    }
}

fn to_u64(t: &[f64]) -> Vec<u64> {
    t.iter().map(|v| v.round().max(0.0) as u64).collect()
}

/// Relaxation value over the full box (certified outer bound).
pub fn solve_relaxed(problem: &BoundProblem) -> Result<SolveResult> {
    let split = problem.ensure_split()?;
    let prep = Prepared::new(problem, &split.d);
    let l = vec![0.0; prep.n];
    let u = prep.upper.clone();
    let x = root_point(&prep, &l, &u)?;
    let bound = prep.certified_bound(&x, &l, &u);
    if bound == f64::NEG_INFINITY {
        return Err(Error::Infeasible);
    }
    let mut inc = Incumbent {
        value: f64::NEG_INFINITY,
        t: None,
    };
    heuristics(&prep, &x, &l, &u, &mut inc, false);
    let s = problem.sense.sign();
    let (t, iv) = match inc.t {
        Some(t) => (to_u64(&t), s * inc.value),
        None => (to_u64(&x), f64::NAN),
    };
    Ok(SolveResult {
        value: s * bound,
        incumbent: t,
        incumbent_value: iv,
        status: SolveStatus::RelaxationBound,
        nodes: 1,
        gap: if iv.is_nan() { f64::INFINITY } else { bound - s * iv },
        relaxed_point: Some(x),
    })
}

fn root_point(prep: &Prepared<'_>, l: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    let mid: Vec<f64> = l.iter().zip(u).map(|(a, b)| 0.5 * (a + b)).collect();
    let x = prep.ascend(&mid, l, u);
    if !prep.feasible_relaxed(&x) {
        return Err(Error::Infeasible);
    }
    Ok(x)
}

impl Prepared<'_> {
    fn feasible_relaxed(&self, x: &[f64]) -> bool {
        self.cons.iter().all(|c| {
            let scale: f64 = c.coef.iter().zip(x).map(|(a, b)| (a * b).abs()).sum::<f64>() + c.rhs.abs();
            c.value(x) <= c.rhs + 1e-7 * (1.0 + scale)
        })
    }
}

/// Best-first branch-and-bound on the secant relaxation.
pub fn solve_bnb(problem: &BoundProblem, config: &SolverConfig) -> Result<SolveResult> {
    let split = problem.ensure_split()?;
    let mut prep = Prepared::new(problem, &split.d);
    prep.max_iterations = config.max_iterations;
    let n = prep.n;
    let started = Instant::now();
    let deadline = config.time_budget.map(|s| started + Duration::from_secs_f64(s));
    let s = problem.sense.sign();

    let l0 = vec![0.0; n];
    let u0 = prep.upper.clone();
    let x0 = root_point(&prep, &l0, &u0)?;
    let root_bound = prep.certified_bound(&x0, &l0, &u0);
    if root_bound == f64::NEG_INFINITY {
        return Err(Error::Infeasible);
    }
    let mut inc = Incumbent {
        value: f64::NEG_INFINITY,
        t: None,
    };
    inc.offer(&prep, l0.clone());
    heuristics(&prep, &x0, &l0, &u0, &mut inc, true);

    let mut heap = BinaryHeap::new();
    let mut next_id = 1;
    let mut nodes = 1;
    heap.push(Node {
        bound: root_bound,
        id: 0,
        l: l0,
        u: u0,
        x: x0,
    });
    let tol = |v: f64| 1e-9 * (1.0 + v.abs());
    let mut exhausted = false;
    while let Some(node) = heap.pop() {
        if inc.t.is_some() && node.bound <= inc.value + tol(inc.value) {
            // Best-first: every remaining node is dominated too.
            heap.clear();
            break;
        }
        if nodes >= config.node_budget || deadline.is_some_and(|d| Instant::now() >= d) {
            heap.push(node);
            exhausted = true;
            break;
        }
        // Branch on the most fractional free coordinate, else the widest.
        let mut pick: Option<(usize, f64)> = None;
        for i in 0..n {
            if node.u[i] <= node.l[i] {
                continue;
            }
            let frac = (node.x[i] - node.x[i].floor()).min(node.x[i].ceil() - node.x[i]);
            let score = if frac > 1e-9 { 1.0 + frac } else { (node.u[i] - node.l[i]) * 1e-12 };
            if pick.is_none_or(|(_, best)| score > best) {
                pick = Some((i, score));
            }
        }
        let Some((i, _)) = pick else { continue };
        let xi = node.x[i];
        let mut cut = xi.floor().clamp(node.l[i], node.u[i]);
        if cut >= node.u[i] {
            cut = node.u[i] - 1.0;
        }
        for (lo, hi) in [(node.l[i], cut), (cut + 1.0, node.u[i])] {
            let mut l = node.l.clone();
            let mut u = node.u.clone();
            l[i] = lo;
            u[i] = hi;
            let fixed = l == u;
            let (x, bound) = if fixed {
                if !prep.feasible(&l) {
                    continue;
                }
                let v = prep.true_value(&l);
                (l.clone(), v)
            } else {
                let x = prep.ascend(&node.x, &l, &u);
                let b = prep.certified_bound(&x, &l, &u);
                (x, b)
            };
            nodes += 1;
            if bound == f64::NEG_INFINITY {
                continue;
            }
            if fixed {
                inc.offer(&prep, x.clone());
                continue;
            }
            heuristics(&prep, &x, &l, &u, &mut inc, false);
            if inc.t.is_some() && bound <= inc.value + tol(inc.value) {
                continue;
            }
            heap.push(Node {
                bound,
                id: next_id,
                l,
                u,
                x,
            });
            next_id += 1;
        }
    }
    let Some(t) = inc.t else {
        if exhausted {
            let bound = heap.peek().map_or(root_bound, |n| n.bound);
            return Ok(SolveResult {
                value: s * bound,
                incumbent: Vec::new(),
                incumbent_value: f64::NAN,
                status: SolveStatus::BudgetExhaustedBound,
                nodes,
                gap: f64::INFINITY,
                relaxed_point: None,
            });
        }
        return Err(Error::Infeasible);
    };
    if exhausted && !heap.is_empty() {
        let open = heap.peek().map_or(f64::NEG_INFINITY, |n| n.bound);
        let value = open.max(inc.value);
        Ok(SolveResult {
            value: s * value,
            incumbent: to_u64(&t),
            incumbent_value: s * inc.value,
            status: SolveStatus::BudgetExhaustedBound,
            nodes,
            gap: value - inc.value,
            relaxed_point: None,
        })
    } else {
        Ok(SolveResult {
            value: s * inc.value,
            incumbent: to_u64(&t),
            incumbent_value: s * inc.value,
            status: SolveStatus::Exact,
            nodes,
            gap: 0.0,
            relaxed_point: None,
        })
    }
}

/// Exact optimum by enumeration, evaluating the objective directly (no split).
pub fn brute_force(problem: &BoundProblem) -> Result<SolveResult> {
    let n = problem.n();
    let count: u128 = problem.upper.iter().map(|&u| u as u128 + 1).product();
    if count > MAX_ENUMERATION {
        return Err(Error::TooLarge(format!("{count} points to enumerate")));
    }
    let s = problem.sense.sign();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut consider = |t: &[f64], internal: f64| {
        if problem.is_feasible(t) && best.as_ref().is_none_or(|(b, _)| internal > *b) {
            best = Some((internal, t.to_vec()));
        }
    };
    let mut t = vec![0.0; n];
    if problem.is_binary() {
        // Gray-code walk with incremental radicand.
        let mut qt = vec![0.0; n];
        let mut lin = 0.0;
        let mut rad = 0.0;
        let eval = |lin: f64, rad: f64| s * lin + problem.z * rad.max(0.0).sqrt();
        consider(&t, eval(lin, rad));
        for k in 1..(1u64 << n) {
            let i = k.trailing_zeros() as usize;
            let delta = if t[i] == 0.0 { 1.0 } else { -1.0 };
            rad += 2.0 * delta * qt[i] + problem.q[(i, i)] + problem.q_lin[i] * delta;
            lin += problem.bar_w[i] * delta;
            for (j, q) in qt.iter_mut().enumerate() {
                *q += problem.q[(j, i)] * delta;
            }
            t[i] += delta;
            consider(&t, eval(lin, rad));
        }
    } else {
        loop {
            let internal = s * problem.bar_w.iter().zip(&t).map(|(a, b)| a * b).sum::<f64>()
                + problem.z * problem.radicand(&t).max(0.0).sqrt();
            consider(&t, internal);
            let mut i = 0;
            while i < n {
                if (t[i] as u64) < problem.upper[i] {
                    t[i] += 1.0;
                    break;
                }
                t[i] = 0.0;
                i += 1;
            }
            if i == n {
                break;
            }
        }
    }
    let (v, t) = best.ok_or(Error::Infeasible)?;
    Ok(SolveResult {
        value: s * v,
        incumbent: to_u64(&t),
        incumbent_value: s * v,
        status: SolveStatus::Exact,
        nodes: count as usize,
        gap: 0.0,
        relaxed_point: None,
    })
}

/// Rewrites a binary problem whose units are exchangeable within `groups`
/// as an equivalent problem over per-group counts.
pub fn collapse_exchangeable(problem: &BoundProblem, groups: &[usize]) -> Result<BoundProblem> {
    let n = problem.n();
    if groups.len() != n {
        return Err(Error::LengthMismatch {
            what: "groups",
            got: groups.len(),
            expected: n,
        });
    }
    if !problem.is_binary() || problem.q_lin.iter().any(|&v| v != 0.0) {
        return Err(Error::NotExchangeable("only binary problems can be collapsed".into()));
    }
    let k = groups.iter().max().map_or(0, |&g| g + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &g) in groups.iter().enumerate() {
        members[g].push(i);
    }
    if members.iter().any(Vec::is_empty) {
        return Err(Error::NotExchangeable("group labels must be contiguous".into()));
    }
    let qscale = crate::linalg::max_abs(&problem.q).max(f64::MIN_POSITIVE);
    let bscale = problem.bar_w.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    let qtol = 1e-10 * qscale;
    let btol = 1e-10 * bscale;
    let mut diag = vec![0.0; k];
    let mut off = DMatrix::zeros(k, k);
    let mut have = DMatrix::from_element(k, k, false);
    let mut bar = vec![0.0; k];
    for g in 0..k {
        let r = members[g][0];
        bar[g] = problem.bar_w[r];
        diag[g] = problem.q[(r, r)];
    }
    for i in 0..n {
        let gi = groups[i];
        if (problem.bar_w[i] - bar[gi]).abs() > btol {
            return Err(Error::NotExchangeable(format!("b̄ differs within group {gi}")));
        }
        if (problem.q[(i, i)] - diag[gi]).abs() > qtol {
            return Err(Error::NotExchangeable(format!("Q diagonal differs within group {gi}")));
        }
        for j in 0..n {
            if i == j {
                continue;
            }
            let gj = groups[j];
            let v = problem.q[(i, j)];
            if !have[(gi, gj)] {
                off[(gi, gj)] = v;
                have[(gi, gj)] = true;
            } else if (v - off[(gi, gj)]).abs() > qtol {
                return Err(Error::NotExchangeable(format!(
                    "Q entries differ between groups {gi} and {gj}"
                )));
            }
        }
    }
    let mut constraints = Vec::with_capacity(problem.constraints.len());
    for c in &problem.constraints {
        let mut coef = vec![0.0; k];
        for g in 0..k {
            coef[g] = c.coef[members[g][0]];
        }
        let ctol = 1e-10 * c.coef.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
        if (0..n).any(|i| (c.coef[i] - coef[groups[i]]).abs() > ctol) {
            return Err(Error::NotExchangeable("constraint differs within a group".into()));
        }
        constraints.push(LinearConstraint { coef, rhs: c.rhs });
    }
    let q_lin: Vec<f64> = (0..k).map(|g| diag[g] - off[(g, g)]).collect();
    let q = (&off + off.transpose()) * 0.5;
    BoundProblem::new(
        bar,
        q,
        q_lin,
        members.iter().map(|m| m.len() as u64).collect(),
        problem.z,
        problem.sense,
        constraints,
    )
}

/// Expands a count solution to unit level: the first `t_g` members of each group.
pub fn expand_counts(groups: &[usize], counts: &[u64]) -> Vec<u64> {
    let mut used = vec![0u64; counts.len()];
    groups
        .iter()
        .map(|&g| {
            if used[g] < counts[g] {
                used[g] += 1;
                1
            } else {
                0
            }
        })
        .collect()
}
