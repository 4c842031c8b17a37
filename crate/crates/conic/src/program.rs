//! Program model: declared variables, constraint blocks and the
//! complex-to-real lowering.

use num_complex::Complex64;

use crate::error::ConicError;
use crate::expr::Affine;

/// Shape of a declared variable. Complex shapes use interleaved real and
/// imaginary coordinates; a Hermitian `n×n` matrix stores its `n` real
/// diagonal entries followed by `(re, im)` pairs of the strict upper
/// triangle in row-major order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarShape {
    Real(usize),
    Complex(usize),
    Symmetric(usize),
    Hermitian(usize),
}

impl VarShape {
    pub fn real_len(&self) -> usize {
        match *self {
            VarShape::Real(n) => n,
            VarShape::Complex(n) => 2 * n,
            VarShape::Symmetric(n) => n * (n + 1) / 2,
            VarShape::Hermitian(n) => n * n,
        }
    }
}

/// Handle to a declared variable. Cheap to copy; produces [`Affine`]
/// expressions for its entries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    pub id: usize,
    pub shape: VarShape,
    pub offset: usize,
}

impl Var {
    pub fn len(&self) -> usize {
        match self.shape {
            VarShape::Real(n) | VarShape::Complex(n) => n,
            VarShape::Symmetric(n) | VarShape::Hermitian(n) => n * n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Entry `i` of a real or complex vector variable.
    pub fn at(&self, i: usize) -> Affine {
        match self.shape {
            VarShape::Real(n) => {
                assert!(i < n, "index {i} out of range for real vector of length {n}");
                Affine::coord(self.offset + i)
            }
            VarShape::Complex(n) => {
                assert!(i < n, "index {i} out of range for complex vector of length {n}");
                let base = self.offset + 2 * i;
                Affine::coord(base) + Affine::term(base + 1, Complex64::new(0.0, 1.0))
            }
            _ => panic!("at() called on a matrix variable"),
        }
    }

    /// Entry `(i, j)` of a symmetric or Hermitian matrix variable.
    pub fn entry(&self, i: usize, j: usize) -> Affine {
        match self.shape {
            VarShape::Symmetric(n) => {
                assert!(i < n && j < n);
                let (r, c) = if i <= j { (i, j) } else { (j, i) };
                // upper triangle, column-major
                Affine::coord(self.offset + c * (c + 1) / 2 + r)
            }
            VarShape::Hermitian(n) => {
                assert!(i < n && j < n);
                if i == j {
                    return Affine::coord(self.offset + i);
                }
                let (r, c) = if i < j { (i, j) } else { (j, i) };
                let base = self.offset + n + 2 * upper_index(n, r, c);
                let upper = Affine::coord(base) + Affine::term(base + 1, Complex64::new(0.0, 1.0));
                if i < j {
                    upper
                } else {
                    upper.conj()
                }
            }
            _ => panic!("entry() called on a vector variable"),
        }
    }

    /// `tr(S·A)` for a Hermitian (or symmetric) variable `S` and a constant
    /// Hermitian matrix `A` given row-major. The result is real.
    pub fn trace_product(&self, a: &[Complex64]) -> Affine {
        let n = match self.shape {
            VarShape::Symmetric(n) | VarShape::Hermitian(n) => n,
            _ => panic!("trace_product() needs a matrix variable"),
        };
        assert_eq!(a.len(), n * n);
        let mut out = Affine::zero();
        for i in 0..n {
            for j in 0..n {
                // S_ij · A_ji
                out += &self.entry(i, j).scale(a[j * n + i]);
            }
        }
        out.compact().re()
    }
}

/// Index of `(r, c)`, `r < c`, in the row-major strict upper triangle.
fn upper_index(n: usize, r: usize, c: usize) -> usize {
    r * n - r * (r + 1) / 2 + (c - r - 1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Field {
    Real,
    Complex,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConeKind {
    /// every row equals zero
    Zero,
    /// every row is nonnegative
    Nonneg,
    /// `‖rows[1..]‖₂ ≤ rows[0]`
    SecondOrder,
    /// the matrix whose upper triangle (column-major) is `rows` is PSD
    Psd,
}

/// One constraint block `rows ∈ K`.
///
/// For `Psd` blocks `rows` holds the upper triangle column by column:
/// `(0,0), (0,1), (1,1), (0,2), …`; lower entries are implied by Hermitian
/// symmetry.
#[derive(Clone, Debug)]
pub struct ConstraintBlock {
    pub kind: ConeKind,
    pub field: Field,
    pub label: String,
    pub rows: Vec<Affine>,
}

impl ConstraintBlock {
    pub fn zero(label: impl Into<String>, rows: Vec<Affine>, field: Field) -> Self {
        Self {
            kind: ConeKind::Zero,
            field,
            label: label.into(),
            rows,
        }
    }

    pub fn nonneg(label: impl Into<String>, rows: Vec<Affine>) -> Self {
        Self {
            kind: ConeKind::Nonneg,
            field: Field::Real,
            label: label.into(),
            rows,
        }
    }

    /// `‖rest‖₂ ≤ t`.
    pub fn soc(label: impl Into<String>, t: Affine, rest: Vec<Affine>, field: Field) -> Self {
        let mut rows = Vec::with_capacity(rest.len() + 1);
        rows.push(t);
        rows.extend(rest);
        Self {
            kind: ConeKind::SecondOrder,
            field,
            label: label.into(),
            rows,
        }
    }

    /// `|v|² ≤ y·z` with `y, z ≥ 0`, written as `‖(2v, y − z)‖ ≤ y + z`.
    pub fn rotated_soc(
        label: impl Into<String>,
        y: Affine,
        z: Affine,
        v: Vec<Affine>,
        field: Field,
    ) -> Self {
        let t = y.clone() + &z;
        let mut rest: Vec<Affine> = v.into_iter().map(|e| e * 2.0).collect();
        rest.push(y - z);
        Self::soc(label, t, rest, field)
    }

    /// PSD block from a full `n×n` matrix of expressions given row-major.
    /// Only the upper triangle is read.
    pub fn psd_from_full(label: impl Into<String>, n: usize, full: &[Affine], field: Field) -> Self {
        assert_eq!(full.len(), n * n);
        let mut rows = Vec::with_capacity(n * (n + 1) / 2);
        for j in 0..n {
            for i in 0..=j {
                rows.push(full[i * n + j].clone());
            }
        }
        Self {
            kind: ConeKind::Psd,
            field,
            label: label.into(),
            rows,
        }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    /// Side length of a PSD block.
    pub fn psd_side(&self) -> usize {
        psd_side_from_len(self.rows.len())
    }

    /// Entry `(i, j)` of a PSD block (lower entries by conjugate symmetry).
    pub fn psd_entry(&self, i: usize, j: usize) -> Affine {
        if i <= j {
            self.rows[j * (j + 1) / 2 + i].clone()
        } else {
            self.rows[i * (i + 1) / 2 + j].conj()
        }
    }
}

pub(crate) fn psd_side_from_len(len: usize) -> usize {
    // n(n+1)/2 = len
    let n = ((((8 * len + 1) as f64).sqrt() - 1.0) / 2.0).round() as usize;
    n
}

#[derive(Clone, Debug)]
pub struct VarInfo {
    pub name: String,
    pub var: Var,
}

/// A linear objective over declared variables subject to conic blocks.
/// Always a minimization.
#[derive(Clone, Debug)]
pub struct ConicProgram {
    pub(crate) vars: Vec<VarInfo>,
    pub(crate) n_coords: usize,
    pub(crate) objective: Affine,
    pub(crate) blocks: Vec<ConstraintBlock>,
}

impl ConicProgram {
    pub fn builder() -> ProgramBuilder {
        ProgramBuilder::default()
    }

    pub fn n_coords(&self) -> usize {
        self.n_coords
    }

    pub fn variables(&self) -> &[VarInfo] {
        &self.vars
    }

    pub fn objective(&self) -> &Affine {
        &self.objective
    }

    pub fn blocks(&self) -> &[ConstraintBlock] {
        &self.blocks
    }

    pub fn is_real(&self) -> bool {
        self.blocks.iter().all(|b| b.field == Field::Real)
    }

    /// Structural checks: references, PSD shape and Hermitian diagonal,
    /// SOC dimension, real-valued objective.
    pub fn validate(&self) -> Result<(), ConicError> {
        let check_expr = |e: &Affine, what: &str| -> Result<(), ConicError> {
            match e.max_coord() {
                Some(c) if c >= self.n_coords => Err(ConicError::MalformedProgram(format!(
                    "{what} references coordinate {c} but only {} are declared",
                    self.n_coords
                ))),
                _ => Ok(()),
            }
        };
        check_expr(&self.objective, "objective")?;
        if !self.objective.clone().compact().is_real() {
            return Err(ConicError::MalformedProgram(
                "objective has a nonzero imaginary part".into(),
            ));
        }
        for b in &self.blocks {
            for e in &b.rows {
                check_expr(e, &b.label)?;
            }
            match b.kind {
                ConeKind::SecondOrder => {
                    if b.rows.len() < 2 {
                        return Err(ConicError::MalformedProgram(format!(
                            "second-order block '{}' has dimension {} < 2",
                            b.label,
                            b.rows.len()
                        )));
                    }
                    if !b.rows[0].clone().compact().is_real() {
                        return Err(ConicError::MalformedProgram(format!(
                            "second-order block '{}' has a complex bound",
                            b.label
                        )));
                    }
                }
                ConeKind::Psd => {
                    let n = b.psd_side();
                    if n * (n + 1) / 2 != b.rows.len() {
                        return Err(ConicError::MalformedProgram(format!(
                            "PSD block '{}' is not square ({} packed entries)",
                            b.label,
                            b.rows.len()
                        )));
                    }
                    for i in 0..n {
                        if !b.psd_entry(i, i).compact().is_real() {
                            return Err(ConicError::MalformedProgram(format!(
                                "PSD block '{}' has a complex diagonal entry {i}",
                                b.label
                            )));
                        }
                    }
                }
                ConeKind::Nonneg => {
                    if b.rows.iter().any(|e| !e.clone().compact().is_real()) {
                        return Err(ConicError::MalformedProgram(format!(
                            "nonnegative block '{}' has complex rows",
                            b.label
                        )));
                    }
                }
                ConeKind::Zero => {}
            }
            if b.field == Field::Real
                && b.kind != ConeKind::Nonneg
                && b.rows.iter().any(|e| !e.clone().compact().is_real())
            {
                return Err(ConicError::MalformedProgram(format!(
                    "real block '{}' has complex rows",
                    b.label
                )));
            }
        }
        Ok(())
    }

    /// Read back the value of `var` from a primal coordinate vector.
    pub fn real_values(var: &Var, x: &[f64]) -> Vec<f64> {
        match var.shape {
            VarShape::Real(n) => x[var.offset..var.offset + n].to_vec(),
            _ => panic!("real_values() on a non-real variable"),
        }
    }

    pub fn complex_values(var: &Var, x: &[f64]) -> Vec<Complex64> {
        match var.shape {
            VarShape::Complex(n) => (0..n)
                .map(|i| Complex64::new(x[var.offset + 2 * i], x[var.offset + 2 * i + 1]))
                .collect(),
            _ => panic!("complex_values() on a non-complex variable"),
        }
    }

    /// Row-major values of a matrix variable.
    pub fn matrix_values(var: &Var, x: &[f64]) -> Vec<Complex64> {
        let n = match var.shape {
            VarShape::Symmetric(n) | VarShape::Hermitian(n) => n,
            _ => panic!("matrix_values() on a vector variable"),
        };
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                out.push(var.entry(i, j).eval(x));
            }
        }
        out
    }
}

/// Incremental construction of a [`ConicProgram`].
#[derive(Default, Debug)]
pub struct ProgramBuilder {
    vars: Vec<VarInfo>,
    n_coords: usize,
    objective: Affine,
    blocks: Vec<ConstraintBlock>,
}

impl ProgramBuilder {
    fn declare(&mut self, name: &str, shape: VarShape) -> Var {
        let var = Var {
            id: self.vars.len(),
            shape,
            offset: self.n_coords,
        };
        self.n_coords += shape.real_len();
        self.vars.push(VarInfo {
            name: name.to_string(),
            var,
        });
        var
    }

    pub fn real(&mut self, name: &str, n: usize) -> Var {
        self.declare(name, VarShape::Real(n))
    }

    pub fn complex(&mut self, name: &str, n: usize) -> Var {
        self.declare(name, VarShape::Complex(n))
    }

    pub fn symmetric(&mut self, name: &str, n: usize) -> Var {
        self.declare(name, VarShape::Symmetric(n))
    }

    pub fn hermitian(&mut self, name: &str, n: usize) -> Var {
        self.declare(name, VarShape::Hermitian(n))
    }

    pub fn minimize(&mut self, objective: Affine) -> &mut Self {
        self.objective = objective.compact();
        self
    }

    pub fn maximize(&mut self, objective: Affine) -> &mut Self {
        self.objective = (-objective).compact();
        self
    }

    pub fn add(&mut self, block: ConstraintBlock) -> &mut Self {
        self.blocks.push(block);
        self
    }

    pub fn build(self) -> Result<ConicProgram, ConicError> {
        let program = ConicProgram {
            vars: self.vars,
            n_coords: self.n_coords,
            objective: self.objective,
            blocks: self
                .blocks
                .into_iter()
                .map(|mut b| {
                    b.rows = b.rows.into_iter().map(Affine::compact).collect();
                    b
                })
                .collect(),
        };
        program.validate()?;
        Ok(program)
    }
}

/// Rewrite every complex block as an equivalent real block.
///
/// Zero rows split into real and imaginary rows, second-order blocks
/// stack the real and imaginary parts of their tail, and a Hermitian PSD
/// block `M = A + jB` of side `n` becomes the real symmetric block
/// `[A, −B; B, A]` of side `2n`, whose spectrum is that of `M` with every
/// eigenvalue doubled in multiplicity.
pub fn lower_complex(program: &ConicProgram) -> Result<ConicProgram, ConicError> {
    program.validate()?;
    let mut blocks = Vec::with_capacity(program.blocks.len());
    for b in &program.blocks {
        if b.field == Field::Real {
            blocks.push(b.clone());
            continue;
        }
        let lowered = match b.kind {
            ConeKind::Zero => {
                let mut rows = Vec::with_capacity(2 * b.rows.len());
                for e in &b.rows {
                    rows.push(e.re().compact());
                    rows.push(e.im().compact());
                }
                ConstraintBlock::zero(b.label.clone(), rows, Field::Real)
            }
            ConeKind::Nonneg => ConstraintBlock::nonneg(
                b.label.clone(),
                b.rows.iter().map(|e| e.re().compact()).collect(),
            ),
            ConeKind::SecondOrder => {
                let mut rows = Vec::with_capacity(2 * b.rows.len() - 1);
                rows.push(b.rows[0].re().compact());
                for e in &b.rows[1..] {
                    rows.push(e.re().compact());
                    rows.push(e.im().compact());
                }
                ConstraintBlock {
                    kind: ConeKind::SecondOrder,
                    field: Field::Real,
                    label: b.label.clone(),
                    rows,
                }
            }
            ConeKind::Psd => {
                let n = b.psd_side();
                let m = 2 * n;
                let mut rows = Vec::with_capacity(m * (m + 1) / 2);
                for j in 0..m {
                    for i in 0..=j {
                        let e = match (i < n, j < n) {
                            // top-left block: Re M_ij
                            (true, true) => b.psd_entry(i, j).re(),
                            // bottom-right block: Re M_{i-n, j-n}
                            (false, false) => b.psd_entry(i - n, j - n).re(),
                            // top-right block: −Im M_{i, j-n}
                            (true, false) => -b.psd_entry(i, j - n).im(),
                            (false, true) => unreachable!("upper triangle only"),
                        };
                        rows.push(e.compact());
                    }
                }
                ConstraintBlock {
                    kind: ConeKind::Psd,
                    field: Field::Real,
                    label: b.label.clone(),
                    rows,
                }
            }
        };
        blocks.push(lowered);
    }
    Ok(ConicProgram {
        vars: program.vars.clone(),
        n_coords: program.n_coords,
        objective: program.objective.re().compact(),
        blocks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermitian_entries_are_conjugate_symmetric() {
        let mut b = ConicProgram::builder();
        let s = b.hermitian("S", 3);
        let x: Vec<f64> = (0..9).map(|i| i as f64 + 1.0).collect();
        for i in 0..3 {
            for j in 0..3 {
                let a = s.entry(i, j).eval(&x);
                let at = s.entry(j, i).eval(&x);
                assert_eq!(a, at.conj());
            }
            assert_eq!(s.entry(i, i).eval(&x).im, 0.0);
        }
    }

    #[test]
    fn symmetric_layout_matches_packed_upper_triangle() {
        let mut b = ConicProgram::builder();
        let s = b.symmetric("S", 3);
        // column-major upper triangle: (0,0) (0,1) (1,1) (0,2) (1,2) (2,2)
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        assert_eq!(s.entry(1, 0).eval(&x).re, 2.0);
        assert_eq!(s.entry(2, 1).eval(&x).re, 5.0);
        assert_eq!(s.entry(2, 2).eval(&x).re, 6.0);
    }

    #[test]
    fn undeclared_coordinate_is_malformed() {
        let mut b = ConicProgram::builder();
        let x = b.real("x", 1);
        b.minimize(x.at(0));
        b.add(ConstraintBlock::nonneg("bad", vec![Affine::coord(5)]));
        assert!(matches!(b.build(), Err(ConicError::MalformedProgram(_))));
    }

    #[test]
    fn soc_needs_two_rows() {
        let mut b = ConicProgram::builder();
        let x = b.real("x", 1);
        b.add(ConstraintBlock::soc("s", x.at(0), vec![], Field::Real));
        assert!(b.build().is_err());
    }

    #[test]
    fn scalar_hermitian_block_lowers_to_doubled_diagonal() {
        let mut b = ConicProgram::builder();
        let z = b.hermitian("z", 1);
        b.minimize(z.entry(0, 0));
        b.add(ConstraintBlock::psd_from_full("z psd", 1, &[z.entry(0, 0)], Field::Complex));
        let p = b.build().unwrap();
        let low = lower_complex(&p).unwrap();
        let blk = &low.blocks()[0];
        assert_eq!(blk.psd_side(), 2);
        let x = [1.5];
        assert_eq!(blk.psd_entry(0, 0).eval(&x).re, 1.5);
        assert_eq!(blk.psd_entry(1, 1).eval(&x).re, 1.5);
        assert_eq!(blk.psd_entry(0, 1).eval(&x).re, 0.0);
    }

    #[test]
    fn real_program_lowering_is_identity() {
        let mut b = ConicProgram::builder();
        let x = b.real("x", 2);
        b.minimize(x.at(0) + x.at(1));
        b.add(ConstraintBlock::nonneg("x>=1", vec![x.at(0) - 1.0, x.at(1) - 1.0]));
        b.add(ConstraintBlock::soc("cone", x.at(0), vec![x.at(1)], Field::Real));
        let p = b.build().unwrap();
        let low = lower_complex(&p).unwrap();
        assert_eq!(low.blocks().len(), p.blocks().len());
        for (a, b) in low.blocks().iter().zip(p.blocks()) {
            assert_eq!(a.kind, b.kind);
            assert_eq!(a.rows, b.rows);
        }
        assert_eq!(low.objective(), p.objective());
    }
}
