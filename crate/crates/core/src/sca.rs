//! Linearized SINR constraints and the penalty convex-concave procedure for
//! unit-modulus phases. Shared by both schemes and the feasibility checkers.

use irscr_conic::{solve, Affine, ConicProgram, ConstraintBlock, Field, ProgramBuilder, Var};
use log::debug;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{inner, project_unit, CMat, CVec};
use crate::problem::{BcdOptions, Problem};

/// Entries of a complex vector variable.
pub fn entries(var: &Var) -> Vec<Affine> {
    (0..var.len()).map(|i| var.at(i)).collect()
}

/// Columns of an `M_t×K` precoder stored column-major in one complex vector.
pub fn precoder_columns(var: &Var, m_t: usize, k: usize) -> Vec<Vec<Affine>> {
    (0..k)
        .map(|j| (0..m_t).map(|m| var.at(j * m_t + m)).collect())
        .collect()
}

/// Constant columns of `W`.
pub fn constant_columns(w: &CMat) -> Vec<Vec<Affine>> {
    (0..w.ncols())
        .map(|j| w.column(j).iter().map(|z| Affine::constant(*z)).collect())
        .collect()
}

pub fn precoder_from(values: &[Complex64], m_t: usize, k: usize) -> CMat {
    CMat::from_column_slice(m_t, k, values)
}

/// SINR constraints for the precoder step, linearized at `w_t`:
/// `2Re(c_k^* ĥ_kᴴw_k) − |c_k|² − γ_k ≥ γ_k Σ_{j≠k}|ĥ_kᴴw_j|²` with
/// `c_k = ĥ_kᴴw_k^(t)`. SUs with `γ_k = 0` need no constraint.
pub fn sca_sinr_w(
    problem: &Problem,
    phi: &CVec,
    w_t: &CMat,
    cols: &[Vec<Affine>],
) -> Vec<ConstraintBlock> {
    let mut out = Vec::new();
    for (k, su) in problem.su.iter().enumerate() {
        if su.gamma == 0.0 {
            continue;
        }
        let h = problem.su_channel(k, phi);
        let c = (h.adjoint() * w_t.column(k))[0];
        let lin = (inner(&h, &cols[k]).scale(c.conj()) * 2.0).re() - (c.norm_sqr() + su.gamma);
        let g = su.gamma.sqrt();
        let interf: Vec<Affine> = (0..cols.len())
            .filter(|&j| j != k)
            .map(|j| inner(&h, &cols[j]) * g)
            .collect();
        let label = format!("sinr[{k}]");
        if interf.is_empty() {
            out.push(ConstraintBlock::nonneg(label, vec![lin]));
        } else {
            out.push(ConstraintBlock::rotated_soc(
                label,
                lin,
                Affine::constant(1.0),
                interf,
                Field::Complex,
            ));
        }
    }
    out
}

/// Numeric margin of the linearized precoder-step SINR constraint of SU `k`.
pub fn sca_sinr_w_margin(h: &CVec, gamma: f64, w_t: &CMat, w: &CMat, k: usize) -> f64 {
    let c = (h.adjoint() * w_t.column(k))[0];
    let row = h.adjoint() * w;
    let lin = 2.0 * (c.conj() * row[k]).re - c.norm_sqr() - gamma;
    let int: f64 = (0..w.ncols()).filter(|&j| j != k).map(|j| row[j].norm_sqr()).sum();
    lin - gamma * int
}

/// Exact SINR margin `|ĥᴴw_k|² − γ(Σ_{j≠k}|ĥᴴw_j|² + 1)`.
pub fn sinr_margin(h: &CVec, gamma: f64, w: &CMat, k: usize) -> f64 {
    let row = h.adjoint() * w;
    let int: f64 = (0..w.ncols()).filter(|&j| j != k).map(|j| row[j].norm_sqr()).sum();
    row[k].norm_sqr() - gamma * (int + 1.0)
}

/// The quadratic form of SU `k`'s SINR constraint in `φ` for fixed `W`:
/// `φᴴΩ_kφ − γφᴴΩ_{−k}φ + 2Re{ω_kᴴφ} + ω̄_k ≥ γσ²`.
#[derive(Clone, Debug)]
pub struct PhaseSinrTerms {
    pub omega_k: CMat,
    pub omega_minus_k: CMat,
    pub omega_vec: CVec,
    pub omega_scalar: f64,
}

/// `Ω_k = H_r,k w_k w_kᴴ H_r,kᴴ` and friends, with noise 1.
pub fn phase_sinr_terms(h_d: &CVec, h_r: &CMat, gamma: f64, w: &CMat, k: usize) -> PhaseSinrTerms {
    let n = h_r.nrows();
    let mut omega_k = CMat::zeros(n, n);
    let mut omega_minus_k = CMat::zeros(n, n);
    let mut omega_vec = CVec::zeros(n);
    let mut omega_scalar = 0.0;
    for j in 0..w.ncols() {
        let wj = w.column(j).into_owned();
        let d = h_r * &wj;
        let e = (h_d.adjoint() * &wj)[0];
        let outer = &d * d.adjoint();
        // H_r w_j w_jᴴ h_d = d·conj(e)
        if j == k {
            omega_k += outer;
            omega_vec += &d * e.conj();
            omega_scalar += e.norm_sqr();
        } else {
            omega_minus_k += outer;
            omega_vec -= &d * (e.conj() * gamma);
            omega_scalar -= gamma * e.norm_sqr();
        }
    }
    PhaseSinrTerms {
        omega_k,
        omega_minus_k,
        omega_vec,
        omega_scalar,
    }
}

/// Right-hand side `γ̄_k = ω̄_k − φ_tᴴΩ_kφ_t − γσ²` of the linearized phase
/// constraint `γφᴴΩ_{−k}φ − 2Re{(ω_kᴴ + φ_tᴴΩ_k)φ} ≤ γ̄_k`.
pub fn phase_sinr_rhs(terms: &PhaseSinrTerms, gamma: f64, phi_t: &CVec) -> f64 {
    terms.omega_scalar - (phi_t.adjoint() * &terms.omega_k * phi_t)[0].re - gamma
}

/// Left-hand side of the linearized phase constraint at `φ`.
pub fn phase_sinr_lhs(terms: &PhaseSinrTerms, gamma: f64, phi_t: &CVec, phi: &CVec) -> f64 {
    let quad = (phi.adjoint() * &terms.omega_minus_k * phi)[0].re;
    let lin_coef = &terms.omega_vec + &terms.omega_k * phi_t;
    gamma * quad - 2.0 * (lin_coef.adjoint() * phi)[0].re
}

/// Linearized SINR constraints for the phase step at `φ_t`, with optional
/// margin variables `ϕ_k` subtracted from the right-hand side.
///
/// Written through `a_j(φ) = h_d,kᴴw_j + φᴴH_r,k w_j`, i.e.
/// `2Re(a_k(φ_t)^* a_k(φ)) − |a_k(φ_t)|² − γ − ϕ_k ≥ γΣ_{j≠k}|a_j(φ)|²`,
/// which expands to the `Ω/ω` form above.
pub fn sca_sinr_phi(
    problem: &Problem,
    w: &CMat,
    phi_t: &CVec,
    phi: &[Affine],
    margins: Option<&[Affine]>,
) -> Vec<ConstraintBlock> {
    let mut out = Vec::new();
    for (k, su) in problem.su.iter().enumerate() {
        if su.gamma == 0.0 && margins.is_none() {
            continue;
        }
        let a: Vec<Affine> = (0..w.ncols())
            .map(|j| {
                let wj = w.column(j).into_owned();
                let e = (su.h_d.adjoint() * &wj)[0];
                let d = &su.h_r * &wj;
                // φᴴd = conj(dᴴφ)
                inner(&d, phi).conj() + Affine::constant(e)
            })
            .collect();
        let a_t = problem.su_channel(k, phi_t).adjoint() * w.column(k);
        let a_t = a_t[0];
        let mut lin = (a[k].scale(a_t.conj()) * 2.0).re() - (a_t.norm_sqr() + su.gamma);
        if let Some(m) = margins {
            lin -= &m[k];
        }
        let g = su.gamma.sqrt();
        let interf: Vec<Affine> = (0..w.ncols())
            .filter(|&j| j != k && su.gamma > 0.0)
            .map(|j| a[j].clone() * g)
            .collect();
        let label = format!("phase-sinr[{k}]");
        if interf.is_empty() {
            out.push(ConstraintBlock::nonneg(label, vec![lin]));
        } else {
            out.push(ConstraintBlock::rotated_soc(
                label,
                lin,
                Affine::constant(1.0),
                interf,
                Field::Complex,
            ));
        }
    }
    out
}

/// `|φ_t,n|² − 2Re(φ_n^*φ_t,n) ≤ τ_n − 1` and `|φ_n|² ≤ 1 + τ_{N+n}`.
pub fn modulus_blocks(phi_t: &CVec, phi: &[Affine], tau: &[Affine]) -> Vec<ConstraintBlock> {
    let n = phi_t.len();
    let mut lower = Vec::with_capacity(n);
    let mut out = Vec::with_capacity(n + 1);
    for i in 0..n {
        let t = phi_t[i];
        lower.push(
            (phi[i].conj().scale(t) * 2.0).re() + &tau[i] - (1.0 + t.norm_sqr()),
        );
        out.push(ConstraintBlock::rotated_soc(
            format!("modulus-upper[{i}]"),
            tau[n + i].clone() + 1.0,
            Affine::constant(1.0),
            vec![phi[i].clone()],
            Field::Complex,
        ));
    }
    out.push(ConstraintBlock::nonneg("modulus-lower", lower));
    out
}

/// Problem-specific part of a phase step: adds its blocks to the builder and
/// returns an extra objective term to minimize.
pub type PhaseExtra<'a> = dyn Fn(&mut ProgramBuilder, &[Affine]) -> Result<Affine> + 'a;

pub struct PhaseStep<'a> {
    pub problem: &'a Problem,
    /// internal precoder, fixed
    pub w: &'a CMat,
    pub opts: &'a BcdOptions,
    /// maximize SINR margins `Σϕ_k`; otherwise margins are fixed at zero
    pub margins: bool,
    pub extra: &'a PhaseExtra<'a>,
    /// exact acceptance test of a projected phase vector
    pub verify: &'a dyn Fn(&CVec) -> bool,
}

pub struct PhaseResult {
    pub phi: CVec,
    pub inner_iterations: usize,
    /// `‖τ‖₁` at the last inner iterate
    pub slack: f64,
}

/// Penalty CCP from `φ_t`. Linearizations are refreshed at every inner
/// iterate and `κ ← min(l_κ·κ, κ_cap)`. Returns the projected phases, or an
/// error when the inner loop stalls or the projection fails verification (the
/// caller then keeps `φ_t`).
pub fn penalty_ccp(step: &PhaseStep<'_>, phi_t: &CVec) -> Result<PhaseResult> {
    let n = phi_t.len();
    let opts = step.opts;
    let mut kappa = opts.kappa0;
    let mut lin = phi_t.clone();
    let mut slack = f64::INFINITY;
    let mut converged = false;
    let mut stopped = false;
    let mut iters = 0;
    for it in 0..opts.inner_cap {
        iters = it + 1;
        let mut b = ConicProgram::builder();
        let phi_var = b.complex("phi", n);
        let tau_var = b.real("tau", 2 * n);
        let phi = entries(&phi_var);
        let tau: Vec<Affine> = (0..2 * n).map(|i| tau_var.at(i)).collect();
        let margin_var = step.margins.then(|| b.real("margin", step.problem.k()));
        let margins: Option<Vec<Affine>> = margin_var
            .as_ref()
            .map(|v| (0..v.len()).map(|i| v.at(i)).collect());

        for blk in sca_sinr_phi(step.problem, step.w, &lin, &phi, margins.as_deref()) {
            b.add(blk);
        }
        for blk in modulus_blocks(&lin, &phi, &tau) {
            b.add(blk);
        }
        b.add(ConstraintBlock::nonneg("tau", tau.clone()));
        if opts.upper_slack_cap.is_finite() {
            let cap = opts.upper_slack_cap;
            b.add(ConstraintBlock::nonneg(
                "tau-upper-cap",
                tau[n..].iter().map(|t| Affine::constant(cap) - t).collect(),
            ));
        }
        let mut objective = (step.extra)(&mut b, &phi)?;
        if let Some(m) = &margins {
            b.add(ConstraintBlock::nonneg("margin", m.clone()));
            for x in m {
                objective -= x;
            }
        }
        // dividing by max(κ, 1) leaves the minimizer unchanged and keeps the
        // penalty coefficients O(1) once κ is large
        let norm = kappa.max(1.0);
        let mut objective = objective * (1.0 / norm);
        for t in &tau {
            objective += &t.scale(kappa / norm);
        }
        b.minimize(objective);
        let program = b.build()?;
        let res = solve(&program, opts.solver_tol)?;
        if !res.is_optimal() {
            debug!("phase step: inner solve {it} returned {:?}", res.status);
            if it == 0 {
                return Err(Error::SubproblemInfeasible(format!(
                    "phase step returned {:?}",
                    res.status
                )));
            }
            // near the unit circle the relaxed set has almost no interior;
            // the last iterate is judged by projection and re-verification
            stopped = true;
            break;
        }
        let next = CVec::from_vec(res.complex(&phi_var));
        slack = res.real(&tau_var).iter().map(|t| t.abs()).sum();
        let change: f64 = (&next - &lin).iter().map(|z| z.norm()).sum();
        log::trace!("phase step inner {it}: kappa {kappa:.1e} slack {slack:.3e} change {change:.3e}");
        lin = next;
        kappa = (kappa * opts.l_kappa).min(opts.kappa_cap);
        if slack <= opts.l1 && change <= opts.l2 {
            converged = true;
            break;
        }
    }
    if !converged && !stopped && !(slack <= opts.l1) {
        return Err(Error::CcpStalled(slack));
    }
    let phi = project_unit(&lin);
    if !(step.verify)(&phi) {
        return Err(Error::SubproblemInfeasible(
            "projected phases fail re-verification".into(),
        ));
    }
    Ok(PhaseResult {
        phi,
        inner_iterations: iters,
        slack,
    })
}
