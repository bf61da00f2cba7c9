//! Diagonal splits `Q = (Q − D) + D` with `D ≥ 0` and `Q − D ⪯ 0`.

use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::{check_symmetric, max_abs, max_eigenvalue};

/// Pass threshold for `λ_max(Q − D)`.
pub const SPLIT_TOLERANCE: f64 = 1e-8;
/// Above this size feasibility is checked by factorization instead of an eigensolve.
const EIG_VERIFY_LIMIT: usize = 600;
/// Per-step factorization checks in sdp-lite up to this size, per sweep above.
const STEPWISE_VERIFY_LIMIT: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitMethod {
    Gershgorin,
    EigShift,
    SdpLite,
}

impl SplitMethod {
    pub const ALL: [SplitMethod; 3] = [SplitMethod::Gershgorin, SplitMethod::EigShift, SplitMethod::SdpLite];

    pub fn name(self) -> &'static str {
        match self {
            SplitMethod::Gershgorin => "gershgorin",
            SplitMethod::EigShift => "eig-shift",
            SplitMethod::SdpLite => "sdp-lite",
        }
    }
}

impl std::str::FromStr for SplitMethod {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "gershgorin" => Ok(SplitMethod::Gershgorin),
            "eig-shift" => Ok(SplitMethod::EigShift),
            "sdp-lite" => Ok(SplitMethod::SdpLite),
            other => Err(format!("unknown split method `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitCertificate {
    pub d: Vec<f64>,
    pub method: SplitMethod,
    /// Largest eigenvalue of `Q − D`, or an upper bound on it when verified
    /// by factorization.
    pub lambda_max: f64,
    pub trace: f64,
}

impl SplitCertificate {
    pub fn passes(&self) -> bool {
        self.lambda_max <= SPLIT_TOLERANCE && self.d.iter().all(|&v| v >= 0.0)
    }
}

fn minus_diag(q: &DMatrix<f64>, d: &[f64]) -> DMatrix<f64> {
    let mut m = q.clone();
    for (i, &di) in d.iter().enumerate() {
        m[(i, i)] -= di;
    }
    m
}

/// `λ_max(Q − D)` by symmetric eigensolve.
pub fn verify_split(q: &DMatrix<f64>, d: &[f64]) -> Result<f64> {
    if q.nrows() == 0 {
        return Ok(0.0);
    }
    max_eigenvalue(&minus_diag(q, d))
}

/// True when `D + εI − Q` admits a Cholesky factorization.
fn feasible_by_cholesky(q: &DMatrix<f64>, d: &[f64], eps: f64) -> bool {
    let mut m = -q.clone();
    for (i, &di) in d.iter().enumerate() {
        m[(i, i)] += di + eps;
    }
    Cholesky::new(m).is_some()
}

fn scale_of(q: &DMatrix<f64>) -> f64 {
    max_abs(q)
}

/// Certifies `d`, inflating it until `Q − D` is verified negative semidefinite.
fn certify(q: &DMatrix<f64>, mut d: Vec<f64>, method: SplitMethod) -> Result<SplitCertificate> {
    let n = q.nrows();
    let scale = scale_of(q);
    if n == 0 || scale == 0.0 {
        let trace = d.iter().sum();
        return Ok(SplitCertificate {
            d,
            method,
            lambda_max: 0.0,
            trace,
        });
    }
    let lambda_max = if n <= EIG_VERIFY_LIMIT {
        let mut lam = verify_split(q, &d)?;
        let mut bump = 1e-12 * scale;
        while lam > 0.0 {
            let add = lam.max(bump);
            d.iter_mut().for_each(|v| *v += add);
            lam = verify_split(q, &d)?;
            bump *= 10.0;
        }
        lam
    } else {
        let mut eps = 1e-12 * scale;
        while !feasible_by_cholesky(q, &d, eps) {
            eps *= 10.0;
        }
        d.iter_mut().for_each(|v| *v += eps);
        0.0
    };
    let trace = d.iter().sum();
    Ok(SplitCertificate {
        d,
        method,
        lambda_max,
        trace,
    })
}

/// `D_ii = Σ_j |Q_ij|`.
pub fn gershgorin_split(q: &DMatrix<f64>) -> Result<SplitCertificate> {
    check_symmetric(q)?;
    let d: Vec<f64> = q.row_iter().map(|r| r.iter().map(|v| v.abs()).sum()).collect();
    certify(q, d, SplitMethod::Gershgorin)
}

/// `D = λ_max(Q)·I`, slightly inflated relative to the matrix scale.
pub fn eig_shift_split(q: &DMatrix<f64>) -> Result<SplitCertificate> {
    check_symmetric(q)?;
    let n = q.nrows();
    if n == 0 {
        return certify(q, Vec::new(), SplitMethod::EigShift);
    }
    let lam = max_eigenvalue(q)?.max(0.0);
    let inflated = if lam > 0.0 {
        lam + 1e-9 * lam.max(1e-3 * scale_of(q))
    } else {
        0.0
    };
    certify(q, vec![inflated; n], SplitMethod::EigShift)
}

/// Coordinate-descent shrinking of the better of the two seed splits,
/// keeping `D − Q + εI` positive definite throughout.
pub fn sdp_lite_split(q: &DMatrix<f64>, sweeps: usize) -> Result<SplitCertificate> {
    let g = gershgorin_split(q)?;
    let e = eig_shift_split(q)?;
    let seed = if e.trace <= g.trace { e } else { g };
    let n = q.nrows();
    let scale = scale_of(q);
    if n == 0 || scale == 0.0 {
        return Ok(SplitCertificate {
            method: SplitMethod::SdpLite,
            ..seed
        });
    }
    let eps = 1e-12 * scale;
    let eta = 1e-6;
    let mut d = seed.d.clone();
    // Work on M = D − Q + εI and its inverse.
    let build = |d: &[f64]| {
        let mut m = -q.clone();
        for (i, &di) in d.iter().enumerate() {
            m[(i, i)] += di + eps;
        }
        m
    };
    let Some(mut minv) = Cholesky::new(build(&d)).map(|c| c.inverse()) else {
        return Ok(SplitCertificate {
            method: SplitMethod::SdpLite,
            ..seed
        });
    };
    let stepwise = n <= STEPWISE_VERIFY_LIMIT;
    for _ in 0..sweeps {
        let start = d.clone();
        let start_trace: f64 = start.iter().sum();
        let mut rolled_back = false;
        for i in 0..n {
            let mii = minv[(i, i)];
            if !(mii > 0.0) || d[i] <= 0.0 {
                continue;
            }
            let delta = d[i].min((1.0 - eta) / mii);
            if delta <= 0.0 {
                continue;
            }
            let prev = d[i];
            d[i] -= delta;
            if stepwise && !feasible_by_cholesky(q, &d, eps) {
                d[i] = prev;
                continue;
            }
            // Sherman–Morrison for M − δ e_i e_iᵀ.
            let col = minv.column(i).clone_owned();
            let denom = 1.0 - delta * mii;
            minv.ger(delta / denom, &col, &col, 1.0);
        }
        if !stepwise && !feasible_by_cholesky(q, &d, eps) {
            d = start;
            rolled_back = true;
        }
        // Refresh the inverse to stop drift from repeated rank-one updates.
        match Cholesky::new(build(&d)) {
            Some(c) => minv = c.inverse(),
            None => {
                d = seed.d.clone();
                break;
            }
        }
        let trace: f64 = d.iter().sum();
        if rolled_back || start_trace - trace <= 1e-10 * start_trace.max(f64::MIN_POSITIVE) {
            break;
        }
    }
    let d: Vec<f64> = d.iter().map(|v| v + eps).collect();
    let cert = certify(q, d, SplitMethod::SdpLite)?;
    if cert.trace < seed.trace {
        Ok(cert)
    } else {
        Ok(SplitCertificate {
            method: SplitMethod::SdpLite,
            ..seed
        })
    }
}

pub fn split(q: &DMatrix<f64>, method: SplitMethod) -> Result<SplitCertificate> {
    match method {
        SplitMethod::Gershgorin => gershgorin_split(q),
        SplitMethod::EigShift => eig_shift_split(q),
        SplitMethod::SdpLite => sdp_lite_split(q, DEFAULT_SWEEPS),
    }
}

pub const DEFAULT_SWEEPS: usize = 50;

#[cfg(test)]
mod tests {
    use super::*;

    fn two() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0])
    }

    #[test]
    fn gershgorin_examples() {
        let c = gershgorin_split(&two()).unwrap();
        assert_eq!(c.d, vec![3.0, 3.0]);
        let mut ev = crate::linalg::eigenvalues(&minus_diag(&two(), &c.d)).unwrap();
        ev.sort_by(f64::total_cmp);
        assert!((ev[0] + 2.0).abs() < 1e-12 && ev[1].abs() < 1e-12);
        let diag = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0, 0.5]));
        assert_eq!(gershgorin_split(&diag).unwrap().d, vec![1.0, 2.0, 0.5]);
        assert_eq!(gershgorin_split(&DMatrix::zeros(3, 3)).unwrap().d, vec![0.0; 3]);
    }

    #[test]
    fn eig_shift_examples() {
        let c = eig_shift_split(&two()).unwrap();
        assert!(c.d.iter().all(|&v| (v - 3.0).abs() < 1e-8));
        let ci = eig_shift_split(&(DMatrix::identity(4, 4) * 0.7)).unwrap();
        assert!(ci.d.iter().all(|&v| (v - 0.7).abs() < 1e-8));
        let v = nalgebra::DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let r1 = eig_shift_split(&(&v * v.transpose())).unwrap();
        assert!(r1.d.iter().all(|&x| (x - 5.25).abs() < 1e-7));
    }

    #[test]
    fn sdp_lite_examples() {
        let c = sdp_lite_split(&two(), 50).unwrap();
        assert!(c.trace <= 6.0 && c.passes());
        let diag = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0, 0.5]));
        let c = sdp_lite_split(&diag, 50).unwrap();
        assert!((c.trace - 3.5).abs() < 1e-9, "{}", c.trace);
    }

    #[test]
    fn verify_cases() {
        let q = two();
        assert!((verify_split(&q, &[0.0, 0.0]).unwrap() - 3.0).abs() < 1e-12);
        let diag = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0]));
        assert!(verify_split(&diag, &[1.0, 2.0]).unwrap().abs() < 1e-15);
    }

    #[test]
    fn eig_shift_can_exceed_gershgorin() {
        // One dominant diagonal entry: N·λ_max > Σ row sums.
        let q = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]));
        let e = eig_shift_split(&q).unwrap();
        let g = gershgorin_split(&q).unwrap();
        assert!(e.trace > g.trace);
        assert!(sdp_lite_split(&q, 50).unwrap().trace <= g.trace);
    }

    #[test]
    fn asymmetric_rejected() {
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(gershgorin_split(&q).is_err());
    }
}
