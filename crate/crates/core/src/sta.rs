//! Outage-constrained design under statistical CSI errors.
//!
//! The outage constraint `Pr{‖φ̃ᴴ(Ĝ + ΔG)W‖² ≤ Γ} ≥ 1 − β` is replaced by the
//! deterministic sufficient condition `ϑ·q·‖W‖² + ‖φ̃ᴴĜW‖² ≤ Γ` (see
//! [`crate::stats::sta_it_lhs`]). The precoder step is solved as a
//! semidefinite relaxation whose solutions are rank one; the phase step
//! reuses the penalty CCP of the worst-case scheme with a convex quadratic IT
//! constraint.

use irscr_conic::{solve, Affine, ConicProgram, ConstraintBlock, Field, ProgramBuilder, Var};
use log::debug;
use num_complex::Complex64;

use crate::bcd::run_bcd;
use crate::channels::{Scenario, UncertaintyModel};
use crate::error::{Error, Result};
use crate::linalg::{eigh, frob2, inner, norm2, row_major, CMat, CVec};
use crate::problem::{BcdOptions, BeamformingSolution, Problem};
use crate::sca::{penalty_ccp, PhaseStep};
use crate::scd::{check_init, PHASE_IT_SHRINK, VERIFY_SLACK};
use crate::stats::OutageBoundParams;

/// `φ̃ᴴXφ̃ = φᴴBφ + 2Re{bᴴφ} + b_{N+1}` with `X = Σ_k Ĝw_kw_kᴴĜᴴ`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseQuadratic {
    pub b_mat: CMat,
    pub b_vec: CVec,
    pub b_last: f64,
}

impl PhaseQuadratic {
    pub fn eval(&self, phi: &CVec) -> f64 {
        (phi.adjoint() * &self.b_mat * phi)[0].re
            + 2.0 * (self.b_vec.adjoint() * phi)[0].re
            + self.b_last
    }
}

/// Partition `X = ĜWWᴴĜᴴ` into its leading `N×N` block, last column and
/// corner.
pub fn build_phase_quadratic(g: &CMat, w: &CMat) -> PhaseQuadratic {
    let y = g * w;
    let x = &y * y.adjoint();
    let n = g.nrows() - 1;
    PhaseQuadratic {
        b_mat: x.view((0, 0), (n, n)).into_owned(),
        b_vec: x.view((0, n), (n, 1)).column(0).into_owned(),
        b_last: x[(n, n)].re,
    }
}

/// Principal component `√λ₁u₁` of a Hermitian PSD matrix, with the
/// largest-magnitude entry made real and nonnegative, and the ratio
/// `λ₂/λ₁` (zero for a zero or scalar matrix).
pub fn extract_rank_one(s: &CMat) -> (CVec, f64) {
    let n = s.nrows();
    if n == 0 {
        return (CVec::zeros(0), 0.0);
    }
    let (vals, vecs) = eigh(s);
    let l1 = vals[n - 1];
    if !(l1 > 0.0) {
        return (CVec::zeros(n), 0.0);
    }
    let ratio = if n > 1 { vals[n - 2].max(0.0) / l1 } else { 0.0 };
    let u = vecs.column(n - 1).into_owned();
    let (imax, _) = u
        .iter()
        .enumerate()
        .fold((0, -1.0), |acc, (i, z)| if z.norm() > acc.1 { (i, z.norm()) } else { acc });
    let rot = if u[imax].norm() > 0.0 {
        u[imax].conj() / u[imax].norm()
    } else {
        Complex64::new(1.0, 0.0)
    };
    (u.map(|z| z * rot * l1.sqrt()), ratio)
}

/// Relaxed precoder step result, internal units.
#[derive(Clone, Debug)]
pub struct TpcSta {
    pub w: CMat,
    /// `λ₂/λ₁` of every `S_k`
    pub ratios: Vec<f64>,
    /// the relaxed optimum (`Σ tr S_k` or the shared surrogate level `t`)
    pub objective: f64,
}

fn hermitian_psd(b: &mut ProgramBuilder, name: &str, m: usize) -> Var {
    let s = b.hermitian(name, m);
    let full: Vec<Affine> = (0..m * m).map(|i| s.entry(i / m, i % m)).collect();
    b.add(ConstraintBlock::psd_from_full(format!("{name}-psd"), m, &full, Field::Complex));
    s
}

/// Precoder SDP for fixed `φ`. With `level == false` it minimizes
/// `Σ tr S_k` under the SINR constraints and one surrogate constraint per PR;
/// with `level == true` it minimizes a shared `t` bounding every PR's
/// surrogate (in units of its threshold).
fn tpc_sdp(
    problem: &Problem,
    bounds: &[OutageBoundParams],
    phi: &CVec,
    opts: &BcdOptions,
    level: bool,
) -> Result<TpcSta> {
    let (m_t, k) = (problem.m_t, problem.k());
    let mut b = ConicProgram::builder();
    let s: Vec<Var> = (0..k).map(|j| hermitian_psd(&mut b, &format!("S{j}"), m_t)).collect();
    let h_mats: Vec<Vec<Complex64>> = (0..k)
        .map(|j| {
            let h = problem.su_channel(j, phi);
            row_major(&(&h * h.adjoint()))
        })
        .collect();
    for (j, su) in problem.su.iter().enumerate() {
        if su.gamma == 0.0 {
            continue;
        }
        let mut e = s[j].trace_product(&h_mats[j]) - su.gamma;
        for (i, si) in s.iter().enumerate() {
            if i != j {
                e -= &si.trace_product(&h_mats[j]).scale(su.gamma);
            }
        }
        b.add(ConstraintBlock::nonneg(format!("sinr[{j}]"), vec![e]));
    }
    let t_var = level.then(|| b.real("t", 1));
    // the level is solved in units of a rough estimate of its optimum, since
    // it follows Γ over many orders of magnitude
    let p0: f64 = problem
        .su
        .iter()
        .enumerate()
        .map(|(j, su)| su.gamma / norm2(&problem.su_channel(j, phi)).max(f64::MIN_POSITIVE))
        .sum();
    let mut t_ref = 1.0;
    let mut a_mats = Vec::with_capacity(bounds.len());
    for (l, bound) in bounds.iter().enumerate() {
        let v = problem.pr_channel(l, phi);
        let mut a = &v * v.adjoint();
        for i in 0..m_t {
            a[(i, i)] += bound.weight();
        }
        a_mats.push(a);
    }
    if level {
        let est = a_mats.iter().map(|a| a.norm() * p0).fold(0.0, f64::max);
        if est > 0.0 && est.is_finite() {
            t_ref = est;
        }
    }
    for (l, a) in a_mats.iter().enumerate() {
        let a = row_major(&(a / Complex64::new(t_ref, 0.0)));
        let mut e = match &t_var {
            Some(t) => t.at(0),
            None => Affine::constant(1.0 / t_ref),
        };
        for si in &s {
            e -= &si.trace_product(&a);
        }
        b.add(ConstraintBlock::nonneg(format!("it[{l}]"), vec![e]));
    }
    let objective = match &t_var {
        Some(t) => t.at(0),
        None => {
            let eye: Vec<Complex64> = row_major(&CMat::identity(m_t, m_t));
            let mut o = Affine::zero();
            for si in &s {
                o += &si.trace_product(&eye);
            }
            o
        }
    };
    b.minimize(objective);
    let res = solve(&b.build()?, opts.solver_tol)?;
    if !res.is_optimal() {
        return Err(Error::SubproblemInfeasible(format!("relaxed precoder step returned {:?}", res.status)));
    }
    let mut w = CMat::zeros(m_t, k);
    let mut ratios = Vec::with_capacity(k);
    let mut total = 0.0;
    let mats: Vec<CMat> = s
        .iter()
        .map(|si| CMat::from_row_slice(m_t, m_t, &res.matrix(si)))
        .collect();
    for sm in &mats {
        total += (0..m_t).map(|i| sm[(i, i)].re).sum::<f64>();
    }
    // solver noise on an all-zero optimum is not a rank violation
    let floor = 1e-9 * total.max(1.0);
    for (j, sm) in mats.iter().enumerate() {
        let (wj, ratio) = extract_rank_one(sm);
        if frob2(&CMat::from_column_slice(m_t, 1, wj.as_slice())) <= floor {
            ratios.push(0.0);
            continue;
        }
        ratios.push(ratio);
        w.set_column(j, &wj);
    }
    let objective = match &t_var {
        Some(t) => res.real(t)[0] * t_ref,
        None => total,
    };
    let worst = ratios.iter().cloned().fold(0.0, f64::max);
    if worst > opts.rank_tol {
        return Err(Error::RankViolation(worst));
    }
    Ok(TpcSta { w, ratios, objective })
}

/// Minimum-power precoder for fixed `φ` (internal units).
pub fn solve_tpc_sta_sdp(
    problem: &Problem,
    bounds: &[OutageBoundParams],
    phi: &CVec,
    opts: &BcdOptions,
) -> Result<TpcSta> {
    tpc_sdp(problem, bounds, phi, opts, false)
}

/// Smallest shared surrogate level `max_l f_l/Γ_l` reachable for fixed `φ`.
pub fn solve_level_sta_sdp(
    problem: &Problem,
    bounds: &[OutageBoundParams],
    phi: &CVec,
    opts: &BcdOptions,
) -> Result<TpcSta> {
    tpc_sdp(problem, bounds, phi, opts, true)
}

/// `φ̃ᴴĜ_l w_k` as affine expressions in `φ`.
pub(crate) fn pr_rows(problem: &Problem, l: usize, w: &CMat, phi: &[Affine]) -> Vec<Affine> {
    let pr = &problem.pr[l];
    (0..w.ncols())
        .map(|j| {
            let wj = w.column(j).into_owned();
            let base = (pr.g_d.adjoint() * &wj)[0];
            let x = &pr.g_r * &wj;
            inner(&x, phi).conj() + Affine::constant(base)
        })
        .collect()
}

/// Largest surrogate level `max_l f_l/Γ_l` (internal units), zero without PRs.
pub fn surrogate_level(problem: &Problem, bounds: &[OutageBoundParams], w: &CMat, phi: &CVec) -> f64 {
    bounds
        .iter()
        .enumerate()
        .map(|(l, bd)| problem.surrogate(l, bd, w, phi))
        .fold(0.0, f64::max)
}

/// Phase step for fixed `W` (internal units).
pub fn solve_phase_sta(
    problem: &Problem,
    bounds: &[OutageBoundParams],
    w: &CMat,
    phi_t: &CVec,
    opts: &BcdOptions,
) -> Result<CVec> {
    let power = frob2(w);
    let extra = |b: &mut ProgramBuilder, phi: &[Affine]| -> Result<Affine> {
        for (l, bd) in bounds.iter().enumerate() {
            let rhs = 1.0 - PHASE_IT_SHRINK - bd.weight() * power;
            if rhs < 0.0 {
                return Err(Error::SubproblemInfeasible(format!(
                    "PR {l}: the error term alone exceeds the threshold"
                )));
            }
            b.add(ConstraintBlock::soc(
                format!("it[{l}]"),
                Affine::constant(rhs.sqrt()),
                pr_rows(problem, l, w, phi),
                Field::Complex,
            ));
        }
        Ok(Affine::zero())
    };
    let verify = |phi: &CVec| -> bool {
        problem.sinr_met(w, phi, VERIFY_SLACK)
            && bounds
                .iter()
                .enumerate()
                .all(|(l, bd)| problem.surrogate(l, bd, w, phi) <= 1.0 + VERIFY_SLACK)
    };
    let step = PhaseStep {
        problem,
        w,
        opts,
        margins: true,
        extra: &extra,
        verify: &verify,
    };
    Ok(penalty_ccp(&step, phi_t)?.phi)
}

/// Alternating optimization from a feasible `(W⁰, φ⁰)` in physical units.
pub fn run_bcd_sta(
    scenario: &Scenario,
    model: &UncertaintyModel,
    opts: &BcdOptions,
    init_w: &CMat,
    init_phi: &CVec,
) -> Result<BeamformingSolution> {
    opts.validate()?;
    let problem = Problem::new(scenario, true)?;
    let bounds = problem.outage_bounds(model)?;
    check_init(&problem, init_w, init_phi)?;
    let mut worst_ratio: f64 = 0.0;
    let mut w_step = |phi: &CVec, _w_t: &CMat| -> Result<CMat> {
        let step = solve_tpc_sta_sdp(&problem, &bounds, phi, opts)?;
        worst_ratio = step.ratios.iter().cloned().fold(worst_ratio, f64::max);
        Ok(step.w)
    };
    let mut phi_step =
        |w: &CMat, phi_t: &CVec| -> Result<CVec> { solve_phase_sta(&problem, &bounds, w, phi_t, opts) };
    let run = run_bcd(
        &problem,
        opts,
        problem.to_internal(init_w),
        init_phi.clone(),
        &mut w_step,
        &mut phi_step,
    )?;
    debug!("sta finished after {} outer iterations", run.iterations);
    let w = problem.to_physical(&run.w);
    Ok(BeamformingSolution {
        power: frob2(&w),
        w,
        phi: run.phi,
        trace: run.trace,
        iterations: run.iterations,
        converged: run.converged,
        max_rank_ratio: Some(worst_ratio),
    })
}

/// One relaxed precoder solve at fixed phases, for the benchmarks. `irs ==
/// false` removes every reflected path (and `φ` must then be empty).
pub fn fixed_phase_sta(
    scenario: &Scenario,
    model: &UncertaintyModel,
    opts: &BcdOptions,
    phi: &CVec,
    irs: bool,
) -> Result<BeamformingSolution> {
    opts.validate()?;
    let problem = Problem::new(scenario, irs)?;
    if phi.len() != problem.n {
        return Err(Error::DimensionMismatch(format!(
            "{} phases for {} elements",
            phi.len(),
            problem.n
        )));
    }
    let bounds = problem.outage_bounds(model)?;
    let step = solve_tpc_sta_sdp(&problem, &bounds, phi, opts)?;
    let w = problem.to_physical(&step.w);
    let power = frob2(&w);
    Ok(BeamformingSolution {
        power,
        w,
        phi: phi.clone(),
        trace: vec![power],
        iterations: 1,
        converged: true,
        max_rank_ratio: Some(step.ratios.iter().cloned().fold(0.0, f64::max)),
    })
}
