//! Interior-point backend. The lowered program is handed to Clarabel in its
//! standard form `A·x + s = b, s ∈ K`.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use num_complex::Complex64;

use crate::check::check_point;
use crate::error::ConicError;
use crate::program::{lower_complex, ConeKind, ConicProgram, Var};

pub const DEFAULT_SOLVER_TOL: f64 = 1e-8;
pub const DEFAULT_CHECK_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Primal values of every real coordinate.
    pub x: Vec<f64>,
    pub objective: f64,
    pub res_primal: f64,
    pub res_dual: f64,
    pub gap: f64,
    pub iterations: u32,
}

impl SolveResult {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub fn real(&self, var: &Var) -> Vec<f64> {
        ConicProgram::real_values(var, &self.x)
    }

    pub fn complex(&self, var: &Var) -> Vec<Complex64> {
        ConicProgram::complex_values(var, &self.x)
    }

    /// Row-major entries of a matrix variable.
    pub fn matrix(&self, var: &Var) -> Vec<Complex64> {
        ConicProgram::matrix_values(var, &self.x)
    }
}

/// Solve `program` to tolerance `tol`. Complex blocks are lowered first.
pub fn solve(program: &ConicProgram, tol: f64) -> Result<SolveResult, ConicError> {
    if !(tol > 0.0 && tol <= 1e-2) {
        return Err(ConicError::InvalidTolerance(tol));
    }
    let lowered = lower_complex(program)?;
    let n = lowered.n_coords();

    let mut rows_i = Vec::new();
    let mut cols_j = Vec::new();
    let mut vals = Vec::new();
    let mut b = Vec::new();
    let mut cones = Vec::new();
    let mut row = 0usize;
    let sqrt2 = std::f64::consts::SQRT_2;

    for blk in lowered.blocks() {
        let mut push_row = |e: &crate::Affine, scale: f64| {
            // s = b − A x = e(x)  ⇒  A = −coeffs, b = constant
            for (c, v) in e.terms() {
                if v.re != 0.0 {
                    rows_i.push(row);
                    cols_j.push(*c);
                    vals.push(-v.re * scale);
                }
            }
            b.push(e.constant_part().re * scale);
            row += 1;
        };
        match blk.kind {
            ConeKind::Zero => {
                blk.rows.iter().for_each(|e| push_row(e, 1.0));
                cones.push(SupportedConeT::ZeroConeT(blk.rows.len()));
            }
            ConeKind::Nonneg => {
                blk.rows.iter().for_each(|e| push_row(e, 1.0));
                cones.push(SupportedConeT::NonnegativeConeT(blk.rows.len()));
            }
            ConeKind::SecondOrder => {
                blk.rows.iter().for_each(|e| push_row(e, 1.0));
                cones.push(SupportedConeT::SecondOrderConeT(blk.rows.len()));
            }
            ConeKind::Psd => {
                let side = blk.psd_side();
                for j in 0..side {
                    for i in 0..=j {
                        let scale = if i == j { 1.0 } else { sqrt2 };
                        push_row(&blk.rows[j * (j + 1) / 2 + i], scale);
                    }
                }
                cones.push(SupportedConeT::PSDTriangleConeT(side));
            }
        }
    }

    let a = CscMatrix::new_from_triplets(row, n, rows_i, cols_j, vals);
    let p = CscMatrix::<f64>::zeros((n, n));
    let mut q = vec![0.0; n];
    for (c, v) in lowered.objective().terms() {
        q[*c] += v.re;
    }
    let offset = lowered.objective().constant_part().re;

    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(300)
        .tol_gap_abs(tol)
        .tol_gap_rel(tol)
        .tol_feas(tol)
        .tol_infeas_abs(tol)
        .tol_infeas_rel(tol)
        .build()
        .map_err(|e| ConicError::Backend(e.to_string()))?;
    let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, settings)
        .map_err(|e| ConicError::Backend(format!("{e:?}")))?;
    solver.solve();

    let sol = &solver.solution;
    let x = sol.x.clone();
    let status = match sol.status {
        SolverStatus::Solved => SolveStatus::Optimal,
        SolverStatus::AlmostSolved => {
            // accept reduced-accuracy termination only if the point checks out
            let report = check_point(&lowered, &x, DEFAULT_CHECK_TOL);
            if report.passed {
                SolveStatus::Optimal
            } else {
                SolveStatus::NumericalFailure
            }
        }
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            SolveStatus::Infeasible
        }
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
            SolveStatus::Unbounded
        }
        _ => SolveStatus::NumericalFailure,
    };
    let info = &solver.info;
    Ok(SolveResult {
        status,
        objective: sol.obj_val + offset,
        x,
        res_primal: sol.r_prim,
        res_dual: sol.r_dual,
        gap: info.gap_rel.min(info.gap_abs),
        iterations: sol.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{check_solution, Affine, ConstraintBlock, Field};

    #[test]
    fn scalar_lower_bound() {
        let mut b = ConicProgram::builder();
        let x = b.real("x", 1);
        b.minimize(x.at(0));
        b.add(ConstraintBlock::nonneg("x>=3", vec![x.at(0) - 3.0]));
        let p = b.build().unwrap();
        let r = solve(&p, 1e-8).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective - 3.0).abs() < 1e-7);
        assert!(check_solution(&p, &r, 1e-6).passed);
    }

    #[test]
    fn trace_minimization_over_psd() {
        // min tr(S), S ⪰ 0, S11 ≥ 2
        let mut b = ConicProgram::builder();
        let s = b.symmetric("S", 2);
        b.minimize(s.entry(0, 0) + s.entry(1, 1));
        b.add(ConstraintBlock::nonneg("S11>=2", vec![s.entry(0, 0) - 2.0]));
        let full = [s.entry(0, 0), s.entry(0, 1), s.entry(1, 0), s.entry(1, 1)];
        b.add(ConstraintBlock::psd_from_full("S psd", 2, &full, Field::Real));
        let p = b.build().unwrap();
        let r = solve(&p, 1e-8).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective - 2.0).abs() < 1e-7);
        assert!(check_solution(&p, &r, 1e-6).passed);
    }

    #[test]
    fn infeasible_program_is_reported() {
        let mut b = ConicProgram::builder();
        let x = b.real("x", 1);
        b.minimize(x.at(0));
        b.add(ConstraintBlock::nonneg("x>=1", vec![x.at(0) - 1.0]));
        b.add(ConstraintBlock::nonneg("x<=0", vec![-x.at(0)]));
        let p = b.build().unwrap();
        assert_eq!(solve(&p, 1e-8).unwrap().status, SolveStatus::Infeasible);
    }

    #[test]
    fn unbounded_program_is_reported() {
        let mut b = ConicProgram::builder();
        let x = b.real("x", 1);
        b.minimize(x.at(0));
        b.add(ConstraintBlock::nonneg("x<=0", vec![-x.at(0)]));
        let p = b.build().unwrap();
        assert_eq!(solve(&p, 1e-8).unwrap().status, SolveStatus::Unbounded);
    }

    #[test]
    fn tolerance_outside_range_is_rejected() {
        let mut b = ConicProgram::builder();
        let x = b.real("x", 1);
        b.minimize(x.at(0));
        let p = b.build().unwrap();
        assert!(solve(&p, 0.0).is_err());
        assert!(solve(&p, 0.1).is_err());
    }

    #[test]
    fn repeated_solves_are_identical() {
        let mut b = ConicProgram::builder();
        let w = b.complex("w", 3);
        let t = b.real("t", 1);
        b.minimize(t.at(0));
        b.add(ConstraintBlock::soc(
            "norm",
            t.at(0),
            (0..3).map(|i| w.at(i)).collect(),
            Field::Complex,
        ));
        let h = [Complex64::new(0.3, 1.0), Complex64::new(-0.7, 0.2), Complex64::new(1.1, -0.4)];
        let mut lhs = Affine::zero();
        for (i, hi) in h.iter().enumerate() {
            lhs += &w.at(i).scale(hi.conj());
        }
        b.add(ConstraintBlock::nonneg("re >= 1", vec![lhs.re() - 1.0]));
        let p = b.build().unwrap();
        let r1 = solve(&p, 1e-8).unwrap();
        let r2 = solve(&p, 1e-8).unwrap();
        assert_eq!(r1.status, r2.status);
        assert_eq!(r1.objective.to_bits(), r2.objective.to_bits());
        assert_eq!(r1.x, r2.x);
    }
}
