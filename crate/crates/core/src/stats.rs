//! Chi-square quantiles, the covariance eigenvalue bound and the
//! deterministic outage surrogate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eigh, frob2, max_skew, CMat, CVec};

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, coef) in LANCZOS.iter().enumerate().skip(1) {
        a += coef / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

fn gamma_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut del = 1.0 / a;
    let mut sum = del;
    for _ in 0..10_000 {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * 1e-17 {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

fn gamma_cont_frac(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-17 {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x < a + 1.0 {
        gamma_series(a, x)
    } else {
        1.0 - gamma_cont_frac(a, x)
    }
}

/// Regularized upper incomplete gamma `Q(a, x) = 1 − P(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if x < a + 1.0 {
        1.0 - gamma_series(a, x)
    } else {
        gamma_cont_frac(a, x)
    }
}

pub fn chi2_cdf(dof: u32, x: f64) -> f64 {
    gamma_p(dof as f64 / 2.0, x / 2.0)
}

fn chi2_pdf(dof: u32, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let k = dof as f64 / 2.0;
    ((k - 1.0) * x.ln() - x / 2.0 - k * 2f64.ln() - ln_gamma(k)).exp()
}

/// Quantile of the chi-square distribution: `x` with `P(χ²_dof ≤ x) = p`.
pub fn chi2_inv_cdf(dof: u32, p: f64) -> Result<f64> {
    if dof == 0 {
        return Err(Error::Domain("chi-square needs at least one degree of freedom".into()));
    }
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Domain(format!("probability {p} outside [0, 1)")));
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    // residual in the better-conditioned tail
    let upper = p > 0.5;
    let f = |x: f64| {
        if upper {
            (1.0 - p) - gamma_q(dof as f64 / 2.0, x / 2.0)
        } else {
            chi2_cdf(dof, x) - p
        }
    };
    let mut lo = 0.0;
    let mut hi = (dof as f64).max(1.0);
    while f(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    // Newton polish, kept inside the bracket
    let mut x = 0.5 * (lo + hi);
    for _ in 0..3 {
        let d = chi2_pdf(dof, x);
        if d <= 0.0 {
            break;
        }
        let next = x - f(x) / d;
        if next <= lo || next >= hi {
            break;
        }
        x = next;
    }
    Ok(x)
}

/// Largest eigenvalue of a Hermitian matrix.
pub fn max_eigenvalue(sigma: &CMat) -> Result<f64> {
    if sigma.nrows() != sigma.ncols() {
        return Err(Error::DimensionMismatch("covariance must be square".into()));
    }
    if sigma.nrows() == 0 {
        return Ok(0.0);
    }
    let scale = sigma.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let skew = max_skew(sigma);
    if skew > 1e-12 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NonHermitian(skew));
    }
    let (vals, _) = eigh(sigma);
    Ok(*vals.last().unwrap())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutageBoundParams {
    /// `(N+1)·λ_max(Σ)`
    pub theta: f64,
    pub dof: u32,
    pub quantile: f64,
}

impl OutageBoundParams {
    /// Coefficient of `‖W‖²_F` in the surrogate.
    pub fn weight(&self) -> f64 {
        self.theta * self.quantile
    }
}

pub fn outage_params(sigma: &CMat, n: usize, m_t: usize, beta: f64) -> Result<OutageBoundParams> {
    if sigma.nrows() != (n + 1) * m_t {
        return Err(Error::DimensionMismatch(format!(
            "covariance of size {} for (N+1)·M_t = {}",
            sigma.nrows(),
            (n + 1) * m_t
        )));
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::InvalidBeta(beta));
    }
    let dof = (2 * (n + 1) * m_t) as u32;
    if beta == 0.0 {
        return Err(Error::Domain("β = 0 has no finite quantile".into()));
    }
    let quantile = chi2_inv_cdf(dof, 1.0 - beta)?;
    Ok(OutageBoundParams {
        theta: (n + 1) as f64 * max_eigenvalue(sigma)?.max(0.0),
        dof,
        quantile,
    })
}

/// `ϑ·q·‖W‖²_F + ‖φ̃ᴴĜW‖²`.
pub fn sta_it_lhs(params: &OutageBoundParams, w: &CMat, phi_ext: &CVec, g: &CMat) -> Result<f64> {
    if g.nrows() != phi_ext.len() || g.ncols() != w.nrows() {
        return Err(Error::DimensionMismatch("φ̃, Ĝ and W do not conform".into()));
    }
    let row = phi_ext.adjoint() * g * w;
    Ok(params.weight() * frob2(w) + row.iter().map(|z| z.norm_sqr()).sum::<f64>())
}
