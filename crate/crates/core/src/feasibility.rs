//! Feasibility checking and initialization of both schemes.
//!
//! Each checker alternates a precoder step and a phase step on an
//! interference-minimizing problem and declares the main problem feasible as
//! soon as the indicator drops to the threshold. The indicator is reported in
//! units of the IT threshold for both schemes, so feasible means
//! `indicator ≤ 1`.

use irscr_conic::{solve, Affine, ConicProgram, ConstraintBlock, Field, ProgramBuilder};
use log::debug;
use serde::{Deserialize, Serialize};

use crate::channels::{child_rng, Scenario, UncertaintyModel};
use crate::error::{Error, Result};
use crate::linalg::{frob2, inner, random_phases, CMat, CVec};
use crate::problem::{BcdOptions, Problem};
use crate::sca::{entries, penalty_ccp, precoder_columns, precoder_from, PhaseStep};
use crate::scd::{solve_alpha_scd, solve_phase_scd, VERIFY_SLACK};
use crate::sta::{pr_rows, solve_level_sta_sdp, surrogate_level};
use crate::serde_cx;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeasibilityOptions {
    pub t_max: usize,
    /// additional random initial phase vectors tried after the first
    pub extra_starts: usize,
    /// seed of the random initial phases
    pub seed: u64,
}

impl Default for FeasibilityOptions {
    fn default() -> Self {
        Self {
            t_max: 10,
            extra_starts: 0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityVerdict {
    pub feasible: bool,
    /// best `α` (worst-case scheme) or `max_l f_l/Γ_l` (outage scheme)
    pub indicator: f64,
    /// physical initial precoder
    #[serde(with = "serde_cx::matrix")]
    pub init_w: CMat,
    #[serde(with = "serde_cx::vector")]
    pub init_phi: CVec,
    pub iterations: usize,
}

const TAG_PHASE0: u64 = 0x5048_4153;

fn initial_phases(n: usize, opts: &FeasibilityOptions, start: usize) -> CVec {
    let mut rng = child_rng(opts.seed ^ TAG_PHASE0, start as u64);
    random_phases(&mut rng, n)
}

/// Minimum-power precoder under the exact SINR constraints alone, written in
/// the phase-rotated form
/// `‖(ĥ_kᴴW, 1)‖ ≤ √(1 + 1/γ_k)·Re(ĥ_kᴴw_k)`, `Im(ĥ_kᴴw_k) = 0`
/// (internal units).
pub fn bootstrap_precoder(problem: &Problem, phi: &CVec, tol: f64) -> Result<CMat> {
    let (m_t, k) = (problem.m_t, problem.k());
    let mut b = ConicProgram::builder();
    let w_var = b.complex("W", m_t * k);
    let cols = precoder_columns(&w_var, m_t, k);
    let t_var = b.real("t", 1);
    for (j, su) in problem.su.iter().enumerate() {
        if su.gamma == 0.0 {
            continue;
        }
        let h = problem.su_channel(j, phi);
        let rows: Vec<Affine> = cols.iter().map(|c| inner(&h, c)).collect();
        let head = rows[j].re() * (1.0 + 1.0 / su.gamma).sqrt();
        b.add(ConstraintBlock::zero(format!("rotation[{j}]"), vec![rows[j].im()], Field::Real));
        let mut rest = rows;
        rest.push(Affine::constant(1.0));
        b.add(ConstraintBlock::soc(format!("sinr[{j}]"), head, rest, Field::Complex));
    }
    b.add(ConstraintBlock::rotated_soc(
        "power",
        t_var.at(0),
        Affine::constant(1.0),
        entries(&w_var),
        Field::Complex,
    ));
    b.minimize(t_var.at(0));
    let res = solve(&b.build()?, tol)?;
    if !res.is_optimal() {
        debug!("bootstrap precoder returned {:?}", res.status);
        return Err(Error::BootstrapInfeasible);
    }
    Ok(precoder_from(&res.complex(&w_var), m_t, k))
}

struct Best {
    indicator: f64,
    w: CMat,
    phi: CVec,
}

fn verdict(problem: &Problem, best: Best, feasible: bool, iterations: usize) -> FeasibilityVerdict {
    FeasibilityVerdict {
        feasible,
        indicator: best.indicator,
        init_w: problem.to_physical(&best.w),
        init_phi: best.phi,
        iterations,
    }
}

/// Feasibility check of the worst-case problem: alternate the `α`-minimizing
/// precoder step and the margin-maximizing phase step with `α` fixed.
pub fn check_feasibility_scd(
    scenario: &Scenario,
    model: &UncertaintyModel,
    opts: &BcdOptions,
    fopts: &FeasibilityOptions,
) -> Result<FeasibilityVerdict> {
    opts.validate()?;
    let problem = Problem::new(scenario, true)?;
    let radii = problem.radii(model)?;
    let tol = opts.solver_tol;
    let mut best: Option<Best> = None;
    let mut total = 0;
    for start in 0..=fopts.extra_starts {
        let mut phi = initial_phases(problem.n, fopts, start);
        let mut w = bootstrap_precoder(&problem, &phi, tol)?;
        for t in 1..=fopts.t_max {
            total += 1;
            let step = match solve_alpha_scd(&problem, &radii, &phi, &w, tol) {
                Ok(s) => s,
                Err(e) => {
                    debug!("feasibility (scd) start {start} iteration {t}: {e}");
                    break;
                }
            };
            w = step.w;
            let alpha = step.objective.max(0.0);
            if best.as_ref().map_or(true, |b| alpha < b.indicator) {
                best = Some(Best {
                    indicator: alpha,
                    w: w.clone(),
                    phi: phi.clone(),
                });
            }
            if alpha <= 1.0 {
                return Ok(verdict(&problem, best.unwrap(), true, total));
            }
            if t == fopts.t_max || problem.n == 0 {
                break;
            }
            match solve_phase_scd(&problem, &radii, &w, &phi, alpha, opts) {
                Ok(next) => phi = next,
                Err(e) => debug!("feasibility (scd) phase step kept phases: {e}"),
            }
        }
    }
    let best = best.ok_or_else(|| Error::SubproblemInfeasible("no precoder step succeeded".into()))?;
    Ok(verdict(&problem, best, false, total))
}

/// Phase step of the outage feasibility check: minimize the largest
/// surrogate level over `φ` for fixed `W`, keeping the SINR constraints.
fn level_phase_step(
    problem: &Problem,
    bounds: &[crate::stats::OutageBoundParams],
    w: &CMat,
    phi_t: &CVec,
    opts: &BcdOptions,
) -> Result<CVec> {
    let power = frob2(w);
    let extra = |b: &mut ProgramBuilder, phi: &[Affine]| -> Result<Affine> {
        let t = b.real("level", 1).at(0);
        for (l, bd) in bounds.iter().enumerate() {
            b.add(ConstraintBlock::rotated_soc(
                format!("level[{l}]"),
                t.clone() - bd.weight() * power,
                Affine::constant(1.0),
                pr_rows(problem, l, w, phi),
                Field::Complex,
            ));
        }
        Ok(t)
    };
    let verify = |phi: &CVec| problem.sinr_met(w, phi, VERIFY_SLACK);
    let step = PhaseStep {
        problem,
        w,
        opts,
        margins: false,
        extra: &extra,
        verify: &verify,
    };
    Ok(penalty_ccp(&step, phi_t)?.phi)
}

/// Feasibility check of the outage problem: alternate the level-minimizing
/// relaxed precoder step and the level-minimizing phase step.
pub fn check_feasibility_sta(
    scenario: &Scenario,
    model: &UncertaintyModel,
    opts: &BcdOptions,
    fopts: &FeasibilityOptions,
) -> Result<FeasibilityVerdict> {
    opts.validate()?;
    let problem = Problem::new(scenario, true)?;
    let bounds = problem.outage_bounds(model)?;
    let tol = opts.solver_tol;
    let mut best: Option<Best> = None;
    let mut total = 0;
    for start in 0..=fopts.extra_starts {
        let mut phi = initial_phases(problem.n, fopts, start);
        // the minimum-power SINR solution is a valid fallback when the
        // relaxed steps fail numerically
        let w0 = bootstrap_precoder(&problem, &phi, tol)?;
        if problem.sinr_met(&w0, &phi, VERIFY_SLACK) {
            let level = surrogate_level(&problem, &bounds, &w0, &phi);
            if best.as_ref().map_or(true, |b| level < b.indicator) {
                best = Some(Best {
                    indicator: level,
                    w: w0,
                    phi: phi.clone(),
                });
            }
        }
        for t in 1..=fopts.t_max {
            total += 1;
            let w = match solve_level_sta_sdp(&problem, &bounds, &phi, opts) {
                Ok(s) => s.w,
                Err(e) => {
                    debug!("feasibility (sta) start {start} iteration {t}: {e}");
                    break;
                }
            };
            let mut level = surrogate_level(&problem, &bounds, &w, &phi);
            let sinr_ok = problem.sinr_met(&w, &phi, VERIFY_SLACK);
            if sinr_ok && best.as_ref().map_or(true, |b| level < b.indicator) {
                best = Some(Best {
                    indicator: level,
                    w: w.clone(),
                    phi: phi.clone(),
                });
            }
            if sinr_ok && level <= 1.0 {
                return Ok(verdict(&problem, best.unwrap(), true, total));
            }
            if t == fopts.t_max || problem.n == 0 {
                break;
            }
            match level_phase_step(&problem, &bounds, &w, &phi, opts) {
                Ok(next) => {
                    let next_level = surrogate_level(&problem, &bounds, &w, &next);
                    if next_level < level {
                        phi = next;
                        level = next_level;
                        if best.as_ref().map_or(true, |b| level < b.indicator) {
                            best = Some(Best {
                                indicator: level,
                                w: w.clone(),
                                phi: phi.clone(),
                            });
                        }
                        if level <= 1.0 {
                            return Ok(verdict(&problem, best.unwrap(), true, total));
                        }
                    }
                }
                Err(e) => debug!("feasibility (sta) phase step kept phases: {e}"),
            }
        }
    }
    let best = best.ok_or_else(|| Error::SubproblemInfeasible("no precoder step succeeded".into()))?;
    let feasible = best.indicator <= 1.0;
    Ok(verdict(&problem, best, feasible, total))
}
