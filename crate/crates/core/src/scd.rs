//! Worst-case design under bounded CSI errors.
//!
//! The robust IT constraint `‖(ĝ_d + Δg_d)ᴴW + φᴴ(Ĝ_r + ΔG_r)W‖² ≤ Γ` for all
//! `‖Δg_d‖ ≤ ε_d`, `‖ΔG_r‖_F ≤ ε_r` is lifted by a Schur complement and made
//! finite with the sign-definiteness lemma, giving one LMI per PR with two
//! multipliers `ρ₁, ρ₂ ≥ 0`.

use irscr_conic::{solve, Affine, ConicProgram, ConstraintBlock, Field, ProgramBuilder};
use log::debug;

use crate::bcd::run_bcd;
use crate::channels::{Scenario, UncertaintyModel};
use crate::error::{Error, Result};
use crate::linalg::{c, inner, CMat, CVec, ONE};
use crate::problem::{BcdOptions, BeamformingSolution, Problem};
use crate::sca::{
    constant_columns, entries, penalty_ccp, precoder_columns, precoder_from, sca_sinr_w, PhaseStep,
};

/// Relative tightening of the IT bound inside the phase step, leaving room
/// for the final projection onto the unit circle.
pub const PHASE_IT_SHRINK: f64 = 1e-5;

/// Acceptance slack of the re-verification after projection.
pub const VERIFY_SLACK: f64 = 1e-7;

/// The `(1+K+2M_t)`-sided LMI
///
/// ```text
/// [ top − ρ₁N − ρ₂   b̂ᴴ      0        0      ]
/// [ b̂               I_K     ε_r Wᴴ   ε_d Wᴴ ]
/// [ 0               ε_r W   ρ₁I      0      ]
/// [ 0               ε_d W   0        ρ₂I    ]
/// ```
///
/// with `b̂ᴴ = (ĝ_dᴴ + φᴴĜ_r)W` given entrywise in `row` and the columns of
/// `W` in `w`. `top` is `Γ`, or `αΓ` in the feasibility variant.
#[allow(clippy::too_many_arguments)]
pub fn build_it_lmi(
    label: impl Into<String>,
    row: &[Affine],
    w: &[Vec<Affine>],
    eps_d: f64,
    eps_r: f64,
    rho1: &Affine,
    rho2: &Affine,
    top: Affine,
    n: usize,
) -> ConstraintBlock {
    let k = row.len();
    let m_t = w.first().map_or(0, |c| c.len());
    let side = 1 + k + 2 * m_t;
    let mut full = vec![Affine::zero(); side * side];
    let idx = |i: usize, j: usize| i * side + j;
    full[idx(0, 0)] = top - &rho1.scale(n as f64) - rho2;
    for j in 0..k {
        full[idx(0, 1 + j)] = row[j].clone();
        full[idx(1 + j, 1 + j)] = Affine::constant(1.0);
        for m in 0..m_t {
            let conj = w[j][m].conj();
            full[idx(1 + j, 1 + k + m)] = conj.scale(eps_r);
            full[idx(1 + j, 1 + k + m_t + m)] = conj.scale(eps_d);
        }
    }
    for m in 0..m_t {
        full[idx(1 + k + m, 1 + k + m)] = rho1.clone();
        full[idx(1 + k + m_t + m, 1 + k + m_t + m)] = rho2.clone();
    }
    // lower triangle mirrors the upper one
    for i in 0..side {
        for j in 0..i {
            full[idx(i, j)] = full[idx(j, i)].conj();
        }
    }
    ConstraintBlock::psd_from_full(label, side, &full, Field::Complex)
}

/// The same LMI evaluated numerically.
#[allow(clippy::too_many_arguments)]
pub fn it_lmi_matrix(
    w: &CMat,
    phi: &CVec,
    rho1: f64,
    rho2: f64,
    g_d: &CVec,
    g_r: &CMat,
    eps_d: f64,
    eps_r: f64,
    gamma: f64,
) -> CMat {
    let k = w.ncols();
    let m_t = w.nrows();
    let n = phi.len();
    let side = 1 + k + 2 * m_t;
    let b_h = (g_d.adjoint() + phi.adjoint() * g_r) * w;
    let mut m = CMat::zeros(side, side);
    m[(0, 0)] = c(gamma - rho1 * n as f64 - rho2, 0.0);
    for j in 0..k {
        m[(0, 1 + j)] = b_h[j];
        m[(1 + j, 0)] = b_h[j].conj();
        m[(1 + j, 1 + j)] = ONE;
        for i in 0..m_t {
            let v = w[(i, j)].conj();
            m[(1 + j, 1 + k + i)] = v * eps_r;
            m[(1 + k + i, 1 + j)] = v.conj() * eps_r;
            m[(1 + j, 1 + k + m_t + i)] = v * eps_d;
            m[(1 + k + m_t + i, 1 + j)] = v.conj() * eps_d;
        }
    }
    for i in 0..m_t {
        m[(1 + k + i, 1 + k + i)] = c(rho1, 0.0);
        m[(1 + k + m_t + i, 1 + k + m_t + i)] = c(rho2, 0.0);
    }
    m
}

/// Precoder-step result in internal units.
#[derive(Clone, Debug)]
pub struct TpcScd {
    pub w: CMat,
    pub rho: Vec<(f64, f64)>,
    /// `‖W‖²` or `α`, depending on the variant
    pub objective: f64,
}

fn add_rho(b: &mut ProgramBuilder, count: usize) -> (irscr_conic::Var, Vec<(Affine, Affine)>) {
    let var = b.real("rho", 2 * count);
    let pairs: Vec<(Affine, Affine)> = (0..count).map(|l| (var.at(2 * l), var.at(2 * l + 1))).collect();
    b.add(ConstraintBlock::nonneg("rho", entries_real(&var)));
    (var, pairs)
}

fn entries_real(var: &irscr_conic::Var) -> Vec<Affine> {
    (0..var.len()).map(|i| var.at(i)).collect()
}

/// Precoder step. With `alpha == false` this minimizes `‖W‖²` under the
/// linearized SINR constraints and one LMI per PR; with `alpha == true` it
/// minimizes the shared IT scaling `α ≥ 0` instead.
fn tpc_program(
    problem: &Problem,
    radii: &[(f64, f64)],
    phi: &CVec,
    w_t: &CMat,
    alpha: bool,
    tol: f64,
) -> Result<TpcScd> {
    let (m_t, k) = (problem.m_t, problem.k());
    let mut b = ConicProgram::builder();
    let w_var = b.complex("W", m_t * k);
    let cols = precoder_columns(&w_var, m_t, k);
    let obj_var = b.real(if alpha { "alpha" } else { "t" }, 1);
    let obj = obj_var.at(0);
    for blk in sca_sinr_w(problem, phi, w_t, &cols) {
        b.add(blk);
    }
    let (rho_var, rho) = add_rho(&mut b, problem.pr.len());
    for (l, &(eps_d, eps_r)) in radii.iter().enumerate() {
        let v = problem.pr_channel(l, phi);
        let row: Vec<Affine> = cols.iter().map(|col| inner(&v, col)).collect();
        let top = if alpha { obj.clone() } else { Affine::constant(1.0) };
        b.add(build_it_lmi(
            format!("it-lmi[{l}]"),
            &row,
            &cols,
            eps_d,
            eps_r,
            &rho[l].0,
            &rho[l].1,
            top,
            problem.n,
        ));
    }
    if alpha {
        b.add(ConstraintBlock::nonneg("alpha", vec![obj.clone()]));
    } else {
        b.add(ConstraintBlock::rotated_soc(
            "power",
            obj.clone(),
            Affine::constant(1.0),
            entries(&w_var),
            Field::Complex,
        ));
    }
    b.minimize(obj);
    let program = b.build()?;
    let res = solve(&program, tol)?;
    if !res.is_optimal() {
        return Err(Error::SubproblemInfeasible(format!("precoder step returned {:?}", res.status)));
    }
    let w = precoder_from(&res.complex(&w_var), m_t, k);
    let r = res.real(&rho_var);
    Ok(TpcScd {
        objective: res.real(&obj_var)[0],
        w,
        rho: (0..problem.pr.len()).map(|l| (r[2 * l], r[2 * l + 1])).collect(),
    })
}

/// Minimum-power precoder for fixed `φ`, linearized at `w_t` (internal
/// units).
pub fn solve_tpc_scd(
    problem: &Problem,
    radii: &[(f64, f64)],
    phi: &CVec,
    w_t: &CMat,
    tol: f64,
) -> Result<TpcScd> {
    tpc_program(problem, radii, phi, w_t, false, tol)
}

/// Smallest shared `α` for which the IT LMIs hold with threshold `αΓ_l`
/// (internal units).
pub fn solve_alpha_scd(
    problem: &Problem,
    radii: &[(f64, f64)],
    phi: &CVec,
    w_t: &CMat,
    tol: f64,
) -> Result<TpcScd> {
    tpc_program(problem, radii, phi, w_t, true, tol)
}

/// Smallest shared `α` certifying fixed `(W, φ)`; only the multipliers are
/// free. Zero when no PR is constrained.
pub fn certify_alpha(problem: &Problem, radii: &[(f64, f64)], w: &CMat, phi: &CVec, tol: f64) -> Result<f64> {
    if problem.pr.is_empty() {
        return Ok(0.0);
    }
    let mut b = ConicProgram::builder();
    let a_var = b.real("alpha", 1);
    let alpha = a_var.at(0);
    let (_, rho) = add_rho(&mut b, problem.pr.len());
    let cols = constant_columns(w);
    for (l, &(eps_d, eps_r)) in radii.iter().enumerate() {
        let v = problem.pr_channel(l, phi);
        let row: Vec<Affine> = (0..w.ncols())
            .map(|j| Affine::constant((v.adjoint() * w.column(j))[0]))
            .collect();
        b.add(build_it_lmi(
            format!("it-lmi[{l}]"),
            &row,
            &cols,
            eps_d,
            eps_r,
            &rho[l].0,
            &rho[l].1,
            alpha.clone(),
            problem.n,
        ));
    }
    b.minimize(alpha);
    let res = solve(&b.build()?, tol)?;
    if !res.is_optimal() {
        return Err(Error::SubproblemInfeasible(format!("certificate returned {:?}", res.status)));
    }
    Ok(res.real(&a_var)[0])
}

/// Phase step for fixed `W` (internal units). `alpha` scales the IT
/// threshold (1 for the main problem).
pub fn solve_phase_scd(
    problem: &Problem,
    radii: &[(f64, f64)],
    w: &CMat,
    phi_t: &CVec,
    alpha: f64,
    opts: &BcdOptions,
) -> Result<CVec> {
    let cols = constant_columns(w);
    let extra = |b: &mut ProgramBuilder, phi: &[Affine]| -> Result<Affine> {
        let (_, rho) = add_rho(b, problem.pr.len());
        for (l, &(eps_d, eps_r)) in radii.iter().enumerate() {
            let pr = &problem.pr[l];
            let row: Vec<Affine> = (0..w.ncols())
                .map(|j| {
                    let wj = w.column(j).into_owned();
                    let base = (pr.g_d.adjoint() * &wj)[0];
                    let x = &pr.g_r * &wj;
                    // φᴴx = conj(xᴴφ)
                    inner(&x, phi).conj() + Affine::constant(base)
                })
                .collect();
            b.add(build_it_lmi(
                format!("it-lmi[{l}]"),
                &row,
                &cols,
                eps_d,
                eps_r,
                &rho[l].0,
                &rho[l].1,
                Affine::constant(alpha * (1.0 - PHASE_IT_SHRINK)),
                problem.n,
            ));
        }
        Ok(Affine::zero())
    };
    let tol = opts.solver_tol;
    let verify = |phi: &CVec| -> bool {
        if !problem.sinr_met(w, phi, VERIFY_SLACK) {
            return false;
        }
        match certify_alpha(problem, radii, w, phi, tol) {
            Ok(a) => a <= alpha * (1.0 + VERIFY_SLACK),
            Err(_) => false,
        }
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
pub fn run_bcd_scd(
    scenario: &Scenario,
    model: &UncertaintyModel,
    opts: &BcdOptions,
    init_w: &CMat,
    init_phi: &CVec,
) -> Result<BeamformingSolution> {
    opts.validate()?;
    let problem = Problem::new(scenario, true)?;
    let radii = problem.radii(model)?;
    check_init(&problem, init_w, init_phi)?;
    let tol = opts.solver_tol;
    let mut w_step = |phi: &CVec, w_t: &CMat| -> Result<CMat> {
        Ok(solve_tpc_scd(&problem, &radii, phi, w_t, tol)?.w)
    };
    let mut phi_step = |w: &CMat, phi_t: &CVec| -> Result<CVec> {
        solve_phase_scd(&problem, &radii, w, phi_t, 1.0, opts)
    };
    let run = run_bcd(
        &problem,
        opts,
        problem.to_internal(init_w),
        init_phi.clone(),
        &mut w_step,
        &mut phi_step,
    )?;
    debug!("scd finished after {} outer iterations", run.iterations);
    let w = problem.to_physical(&run.w);
    Ok(BeamformingSolution {
        power: crate::linalg::frob2(&w),
        w,
        phi: run.phi,
        trace: run.trace,
        iterations: run.iterations,
        converged: run.converged,
        max_rank_ratio: None,
    })
}

pub(crate) fn check_init(problem: &Problem, w: &CMat, phi: &CVec) -> Result<()> {
    if w.shape() != (problem.m_t, problem.k()) || phi.len() != problem.n {
        return Err(Error::DimensionMismatch(format!(
            "initial point is {}×{} with {} phases, expected {}×{} with {}",
            w.nrows(),
            w.ncols(),
            phi.len(),
            problem.m_t,
            problem.k(),
            problem.n
        )));
    }
    Ok(())
}
