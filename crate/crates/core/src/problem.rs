//! Normalized problem data shared by both schemes.
//!
//! Physical channels span many orders of magnitude (path loss alone is
//! 60 to 140 dB), which an interior-point solver does not tolerate well. The
//! problem is therefore rescaled so that every SU sees unit noise, every PR
//! has a unit threshold and the SINR-minimal power is of order one:
//!
//! * `W_int = s·W` with `s² = 1/P_ref`, `P_ref = Σ_k γ_k σ_k²/‖h_d,k‖²`;
//! * SU channels are divided by `σ_k·s`;
//! * PR channels and their error radii are divided by `√Γ_l·s`, covariances
//!   by `Γ_l·s²`.
//!
//! SINR and `IT/Γ` are invariant under this map and `‖W‖² = ‖W_int‖²/s²`.

use serde::{Deserialize, Serialize};

use crate::channels::{Scenario, UncertaintyModel};
use crate::error::{Error, Result};
use crate::linalg::{extend_phase, frob2, norm2, CMat, CVec};
use crate::serde_cx;
use crate::stats::{outage_params, OutageBoundParams};

#[derive(Clone, Debug)]
pub struct SuLink {
    pub h_d: CVec,
    /// `H_r,k = diag(h_r,kᴴ)F`, empty when the IRS is removed
    pub h_r: CMat,
    pub gamma: f64,
}

#[derive(Clone, Debug)]
pub struct PrLink {
    /// index into the scenario's PR list
    pub index: usize,
    pub g_d: CVec,
    pub g_r: CMat,
    /// `1/(√Γ·s)`
    pub scale: f64,
}

#[derive(Clone, Debug)]
pub struct Problem {
    pub m_t: usize,
    pub n: usize,
    pub su: Vec<SuLink>,
    /// PRs with a finite threshold
    pub pr: Vec<PrLink>,
    /// `W_int = scale·W`
    pub scale: f64,
}

impl Problem {
    /// Normalized problem. With `irs == false` every reflected path is
    /// dropped (`N = 0`).
    pub fn new(scenario: &Scenario, irs: bool) -> Result<Self> {
        scenario.validate()?;
        let n = if irs { scenario.n } else { 0 };
        let p_ref: f64 = (0..scenario.k)
            .map(|k| {
                let g = norm2(&scenario.h_d[k]);
                if scenario.gamma[k] > 0.0 && g > 0.0 {
                    scenario.gamma[k] * scenario.noise[k] / g
                } else {
                    0.0
                }
            })
            .sum();
        let p_ref = if p_ref > 0.0 && p_ref.is_finite() { p_ref } else { 1.0 };
        let s = 1.0 / p_ref.sqrt();

        let su = (0..scenario.k)
            .map(|k| {
                let c = 1.0 / (scenario.noise[k].sqrt() * s);
                let h_r = if irs {
                    scenario.su_cascade(k) * crate::linalg::c(c, 0.0)
                } else {
                    CMat::zeros(0, scenario.m_t)
                };
                SuLink {
                    h_d: &scenario.h_d[k] * crate::linalg::c(c, 0.0),
                    h_r,
                    gamma: scenario.gamma[k],
                }
            })
            .collect();
        let pr = (0..scenario.l)
            .filter(|&l| scenario.it_threshold[l].is_finite())
            .map(|l| {
                let c = 1.0 / (scenario.it_threshold[l].sqrt() * s);
                let g_r = if irs {
                    &scenario.g_r[l] * crate::linalg::c(c, 0.0)
                } else {
                    CMat::zeros(0, scenario.m_t)
                };
                PrLink {
                    index: l,
                    g_d: &scenario.g_d[l] * crate::linalg::c(c, 0.0),
                    g_r,
                    scale: c,
                }
            })
            .collect();
        Ok(Self {
            m_t: scenario.m_t,
            n,
            su,
            pr,
            scale: s,
        })
    }

    pub fn k(&self) -> usize {
        self.su.len()
    }

    pub fn to_internal(&self, w: &CMat) -> CMat {
        w * crate::linalg::c(self.scale, 0.0)
    }

    pub fn to_physical(&self, w: &CMat) -> CMat {
        w * crate::linalg::c(1.0 / self.scale, 0.0)
    }

    /// Physical power of an internal precoder.
    pub fn power(&self, w_int: &CMat) -> f64 {
        frob2(w_int) / (self.scale * self.scale)
    }

    /// `ĥ_k` with `ĥ_kᴴ = h_d,kᴴ + φᴴH_r,k`.
    pub fn su_channel(&self, k: usize, phi: &CVec) -> CVec {
        let su = &self.su[k];
        if self.n == 0 {
            su.h_d.clone()
        } else {
            &su.h_d + su.h_r.adjoint() * phi
        }
    }

    /// `v_l` with `v_lᴴ = ĝ_d,lᴴ + φᴴĜ_r,l`, so `v_lᴴW` is the nominal PR row.
    pub fn pr_channel(&self, l: usize, phi: &CVec) -> CVec {
        let pr = &self.pr[l];
        if self.n == 0 {
            pr.g_d.clone()
        } else {
            &pr.g_d + pr.g_r.adjoint() * phi
        }
    }

    /// Combined `(N+1)×M_t` channel of PR `l`.
    pub fn pr_combined(&self, l: usize) -> CMat {
        crate::channels::combine(&self.pr[l].g_r, &self.pr[l].g_d).expect("consistent dimensions")
    }

    /// Exact SINR of every SU (unit noise).
    pub fn sinr(&self, w: &CMat, phi: &CVec) -> Vec<f64> {
        (0..self.k())
            .map(|k| {
                let h = self.su_channel(k, phi);
                let row = h.adjoint() * w;
                let sig = row[k].norm_sqr();
                let int: f64 = (0..w.ncols()).filter(|&j| j != k).map(|j| row[j].norm_sqr()).sum();
                sig / (int + 1.0)
            })
            .collect()
    }

    /// True when every SU meets `γ_k(1 − rel)`.
    pub fn sinr_met(&self, w: &CMat, phi: &CVec, rel: f64) -> bool {
        self.sinr(w, phi)
            .iter()
            .zip(&self.su)
            .all(|(s, su)| *s >= su.gamma * (1.0 - rel))
    }

    /// Nominal `IT_l/Γ_l`.
    pub fn nominal_it(&self, l: usize, w: &CMat, phi: &CVec) -> f64 {
        let v = self.pr_channel(l, phi);
        (v.adjoint() * w).iter().map(|z| z.norm_sqr()).sum()
    }

    /// Error radii in internal units, one pair per retained PR.
    pub fn radii(&self, model: &UncertaintyModel) -> Result<Vec<(f64, f64)>> {
        let UncertaintyModel::Bounded(regions) = model else {
            return Err(Error::WrongModel("the worst-case scheme needs bounded errors"));
        };
        self.pr
            .iter()
            .map(|pr| {
                let r = regions.get(pr.index).ok_or_else(|| {
                    Error::DimensionMismatch("one bounded region per PR".into())
                })?;
                Ok((r.eps_d * pr.scale, r.eps_r * pr.scale))
            })
            .collect()
    }

    /// Surrogate parameters in internal units, one per retained PR.
    pub fn outage_bounds(&self, model: &UncertaintyModel) -> Result<Vec<OutageBoundParams>> {
        let UncertaintyModel::Statistical(stats) = model else {
            return Err(Error::WrongModel("the outage scheme needs statistical errors"));
        };
        self.pr
            .iter()
            .map(|pr| {
                let st = stats.get(pr.index).ok_or_else(|| {
                    Error::DimensionMismatch("one covariance per PR".into())
                })?;
                let cov = st.cov.scaled(pr.scale);
                let sigma = if self.n == 0 { cov.cov_gd.clone() } else { cov.combined() };
                outage_params(&sigma, self.n, self.m_t, st.beta)
            })
            .collect()
    }

    /// `ϑ_l q_l‖W‖² + |v_lᴴW|²` in units of `Γ_l`.
    pub fn surrogate(&self, l: usize, bound: &OutageBoundParams, w: &CMat, phi: &CVec) -> f64 {
        bound.weight() * frob2(w) + self.nominal_it(l, w, phi)
    }

    /// `[φ; 1]`, or `[1]` without an IRS.
    pub fn phase_ext(&self, phi: &CVec) -> CVec {
        extend_phase(phi)
    }
}

/// Outcome of one scheme run, in physical units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeamformingSolution {
    #[serde(with = "serde_cx::matrix")]
    pub w: CMat,
    #[serde(with = "serde_cx::vector")]
    pub phi: CVec,
    /// `‖W‖²_F` in watts
    pub power: f64,
    /// power after every W-step, starting with the initial point
    pub trace: Vec<f64>,
    pub iterations: usize,
    /// relative decrease fell below the target before the iteration cap
    pub converged: bool,
    /// largest `λ₂/λ₁` over the relaxed solves, when relaxations were used
    pub max_rank_ratio: Option<f64>,
}

/// Settings of the alternating loops and their penalty-CCP phase steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BcdOptions {
    pub t_max: usize,
    pub zeta: f64,
    pub kappa0: f64,
    pub l_kappa: f64,
    pub kappa_cap: f64,
    pub l1: f64,
    pub l2: f64,
    pub inner_cap: usize,
    pub solver_tol: f64,
    /// largest accepted `λ₂/λ₁` of a relaxed precoder
    pub rank_tol: f64,
    /// bound on the upper modulus slacks `τ_{N+n}` of the phase steps. With
    /// a small `κ` the uncapped slacks let `|φ_n|` grow without limit while
    /// the SINR margins keep rewarding it; 0 keeps `|φ_n| ≤ 1` hard and
    /// infinity restores the uncapped form.
    #[serde(with = "serde_cx::extended_real")]
    pub upper_slack_cap: f64,
}

pub type ScdOptions = BcdOptions;
pub type StaOptions = BcdOptions;

impl Default for BcdOptions {
    fn default() -> Self {
        Self {
            t_max: 20,
            zeta: 1e-4,
            kappa0: 1e-3,
            l_kappa: 10.0,
            kappa_cap: 1e4,
            l1: 1e-5,
            l2: 1e-4,
            inner_cap: 30,
            solver_tol: 1e-8,
            rank_tol: 1e-6,
            upper_slack_cap: 0.0,
        }
    }
}

impl BcdOptions {
    pub fn validate(&self) -> Result<()> {
        let ok = self.zeta > 0.0
            && self.l_kappa > 1.0
            && self.l1 > 0.0
            && self.l2 > 0.0
            && self.kappa0 > 0.0
            && self.kappa_cap >= self.kappa0
            && self.inner_cap >= 1
            && self.t_max >= 1
            && self.upper_slack_cap >= 0.0
            && self.solver_tol > 0.0
            && self.solver_tol <= 1e-2;
        if !ok {
            return Err(Error::Config(
                "need ζ, l₁, l₂, κ₀ > 0, l_κ > 1, κ_cap ≥ κ₀, caps ≥ 1, slack cap ≥ 0, solver tolerance in (0, 1e-2]".into(),
            ));
        }
        Ok(())
    }
}

/// Physical SINR of every SU at the nominal channels. An empty `φ` means
/// no IRS.
pub fn sinr_physical(scenario: &Scenario, w: &CMat, phi: &CVec) -> Vec<f64> {
    (0..scenario.k)
        .map(|k| {
            let h = if phi.is_empty() {
                scenario.h_d[k].clone()
            } else {
                &scenario.h_d[k] + scenario.su_cascade(k).adjoint() * phi
            };
            let row = h.adjoint() * w;
            let int: f64 = (0..w.ncols()).filter(|&j| j != k).map(|j| row[j].norm_sqr()).sum();
            row[k].norm_sqr() / (int + scenario.noise[k])
        })
        .collect()
}

/// `‖(g_dᴴ + φᴴG_r)W‖²` for arbitrary (possibly perturbed) PR channels.
/// An empty `φ` drops the reflected path.
pub fn interference(g_d: &CVec, g_r: &CMat, w: &CMat, phi: &CVec) -> f64 {
    let v = if phi.is_empty() {
        g_d.clone()
    } else {
        g_d + g_r.adjoint() * phi
    };
    (v.adjoint() * w).iter().map(|z| z.norm_sqr()).sum()
}
