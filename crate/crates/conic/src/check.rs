//! Independent re-evaluation of a primal point against every block.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::program::{ConeKind, ConicProgram, ConstraintBlock};
use crate::solve::SolveResult;

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub block: usize,
    pub label: String,
    /// Row of the worst violation for linear blocks; `None` for cone blocks.
    pub row: Option<usize>,
    /// Violation scaled by `max(1, ‖coefficients‖)`.
    pub magnitude: f64,
}

#[derive(Clone, Debug)]
pub struct ViolationReport {
    /// Worst violation of each block, in block order.
    pub per_block: Vec<Violation>,
    pub max_violation: f64,
    pub passed: bool,
}

impl ViolationReport {
    /// Blocks whose violation exceeds `tol`.
    pub fn failing(&self, tol: f64) -> impl Iterator<Item = &Violation> {
        self.per_block.iter().filter(move |v| v.magnitude > tol)
    }
}

pub fn check_solution(program: &ConicProgram, result: &SolveResult, tol: f64) -> ViolationReport {
    check_point(program, &result.x, tol)
}

pub fn check_point(program: &ConicProgram, x: &[f64], tol: f64) -> ViolationReport {
    let per_block: Vec<Violation> = program
        .blocks()
        .iter()
        .enumerate()
        .map(|(idx, blk)| block_violation(idx, blk, x))
        .collect();
    let max_violation = per_block.iter().map(|v| v.magnitude).fold(0.0, f64::max);
    ViolationReport {
        passed: max_violation <= tol,
        per_block,
        max_violation,
    }
}

fn block_violation(idx: usize, blk: &ConstraintBlock, x: &[f64]) -> Violation {
    let mut v = Violation {
        block: idx,
        label: blk.label.clone(),
        row: None,
        magnitude: 0.0,
    };
    match blk.kind {
        ConeKind::Zero | ConeKind::Nonneg => {
            for (r, e) in blk.rows.iter().enumerate() {
                let val = e.eval(x);
                let raw = if blk.kind == ConeKind::Zero {
                    val.norm()
                } else {
                    (-val.re).max(0.0)
                };
                let scaled = raw / e.coeff_norm().max(1.0);
                if v.row.is_none() || scaled > v.magnitude {
                    v.magnitude = scaled;
                    v.row = Some(r);
                }
            }
        }
        ConeKind::SecondOrder => {
            let t = blk.rows[0].eval(x).re;
            let tail = blk.rows[1..]
                .iter()
                .map(|e| e.eval(x).norm_sqr())
                .sum::<f64>()
                .sqrt();
            v.magnitude = (tail - t).max(0.0) / block_scale(blk);
        }
        ConeKind::Psd => {
            let n = blk.psd_side();
            let m = DMatrix::<Complex64>::from_fn(n, n, |i, j| blk.psd_entry(i, j).eval(x));
            let herm = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
            let eig = SymmetricEigen::new(herm);
            let lmin = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
            v.magnitude = if n == 0 { 0.0 } else { (-lmin).max(0.0) / block_scale(blk) };
        }
    }
    v
}

fn block_scale(blk: &ConstraintBlock) -> f64 {
    blk.rows
        .iter()
        .map(|e| e.coeff_norm())
        .fold(1.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{ConicProgram, ConstraintBlock, Field};

    #[test]
    fn flags_the_single_violated_row() {
        let mut b = ConicProgram::builder();
        let x = b.real("x", 3);
        b.minimize(x.at(0));
        b.add(ConstraintBlock::nonneg(
            "rows",
            vec![x.at(0) - 1.0, x.at(1) - 1.0, x.at(2) - 1.0],
        ));
        let p = b.build().unwrap();
        let report = check_point(&p, &[1.0, 0.5, 2.0], 1e-6);
        assert!(!report.passed);
        let failing: Vec<_> = report.failing(1e-6).collect();
        assert_eq!(failing.len(), 1);
        assert_eq!(failing[0].row, Some(1));
        assert!((failing[0].magnitude - 0.5).abs() < 1e-15);
    }

    #[test]
    fn exact_feasible_point_has_no_violation() {
        let mut b = ConicProgram::builder();
        let x = b.real("x", 2);
        b.minimize(x.at(0));
        b.add(ConstraintBlock::soc("c", x.at(0), vec![x.at(1)], Field::Real));
        b.add(ConstraintBlock::zero("eq", vec![x.at(1) - 3.0], Field::Real));
        let p = b.build().unwrap();
        let report = check_point(&p, &[5.0, 3.0], 0.0);
        assert!(report.passed);
        assert_eq!(report.max_violation, 0.0);
    }
}
