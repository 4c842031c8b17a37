//! Plain-text rendering of a program, for debugging failed solves.
//!
//! ```text
//! vars <n_coords>
//! var <name> <shape> <offset>
//! objective <affine>
//! block <index> <kind> <field> <rows> "<label>"
//!   <affine>
//! ```
//!
//! An affine expression is written as `c0 + [i]*a + [j]*b ...` where each
//! coefficient is `re` or `(re,im)`.

use std::fmt::Write;

use num_complex::Complex64;

use crate::expr::Affine;
use crate::program::{ConeKind, ConicProgram, Field, VarShape};

pub fn dump_program(program: &ConicProgram) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "vars {}", program.n_coords());
    for v in program.variables() {
        let shape = match v.var.shape {
            VarShape::Real(n) => format!("real[{n}]"),
            VarShape::Complex(n) => format!("complex[{n}]"),
            VarShape::Symmetric(n) => format!("symmetric[{n}x{n}]"),
            VarShape::Hermitian(n) => format!("hermitian[{n}x{n}]"),
        };
        let _ = writeln!(out, "var {} {} {}", v.name, shape, v.var.offset);
    }
    let _ = writeln!(out, "objective {}", fmt_affine(program.objective()));
    for (i, b) in program.blocks().iter().enumerate() {
        let kind = match b.kind {
            ConeKind::Zero => "zero",
            ConeKind::Nonneg => "nonneg",
            ConeKind::SecondOrder => "soc",
            ConeKind::Psd => "psd",
        };
        let field = match b.field {
            Field::Real => "real",
            Field::Complex => "complex",
        };
        let _ = writeln!(out, "block {i} {kind} {field} {} {:?}", b.rows.len(), b.label);
        for r in &b.rows {
            let _ = writeln!(out, "  {}", fmt_affine(r));
        }
    }
    out
}

fn fmt_coeff(c: Complex64) -> String {
    if c.im == 0.0 {
        format!("{:e}", c.re)
    } else {
        format!("({:e},{:e})", c.re, c.im)
    }
}

fn fmt_affine(e: &Affine) -> String {
    let mut s = fmt_coeff(e.constant_part());
    for (i, c) in e.terms() {
        let _ = write!(s, " + [{i}]*{}", fmt_coeff(*c));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ConstraintBlock;

    #[test]
    fn lists_every_block() {
        let mut b = ConicProgram::builder();
        let x = b.real("x", 2);
        b.minimize(x.at(0) + x.at(1));
        b.add(ConstraintBlock::nonneg("lo", vec![x.at(0) - 1.0]));
        b.add(ConstraintBlock::soc("cone", x.at(0), vec![x.at(1)], Field::Real));
        let text = dump_program(&b.build().unwrap());
        assert!(text.starts_with("vars 2\n"));
        assert!(text.contains("block 0 nonneg real 1 \"lo\""));
        assert!(text.contains("block 1 soc real 2 \"cone\""));
        assert!(text.contains("[1]*1e0"));
    }
}
