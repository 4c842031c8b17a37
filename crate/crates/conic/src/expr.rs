//! Complex-valued affine expressions over the real coordinate space of a
//! program.
//!
//! Every declared variable occupies a contiguous range of real coordinates
//! (a complex scalar uses two, a Hermitian matrix `n²`). An [`Affine`] maps
//! that real vector to a complex number, which lets conjugation be expressed
//! exactly: `conj(z) = x - j·y` is still linear in the real coordinates.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use num_complex::Complex64;

/// `Σ coeff_i · x[coord_i] + constant`, with complex coefficients.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Affine {
    terms: Vec<(usize, Complex64)>,
    constant: Complex64,
}

impl Affine {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: impl Into<Complex64>) -> Self {
        Self {
            terms: Vec::new(),
            constant: c.into(),
        }
    }

    /// The real coordinate `coord` itself.
    pub fn coord(coord: usize) -> Self {
        Self {
            terms: vec![(coord, Complex64::new(1.0, 0.0))],
            constant: Complex64::new(0.0, 0.0),
        }
    }

    pub fn term(coord: usize, coeff: impl Into<Complex64>) -> Self {
        Self {
            terms: vec![(coord, coeff.into())],
            constant: Complex64::new(0.0, 0.0),
        }
    }

    pub fn terms(&self) -> &[(usize, Complex64)] {
        &self.terms
    }

    pub fn constant_part(&self) -> Complex64 {
        self.constant
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|(_, c)| *c == Complex64::new(0.0, 0.0))
    }

    /// True when the imaginary part is identically zero.
    pub fn is_real(&self) -> bool {
        self.constant.im == 0.0 && self.terms.iter().all(|(_, c)| c.im == 0.0)
    }

    pub fn add_term(&mut self, coord: usize, coeff: impl Into<Complex64>) {
        self.terms.push((coord, coeff.into()));
    }

    pub fn add_constant(&mut self, c: impl Into<Complex64>) {
        self.constant += c.into();
    }

    pub fn conj(&self) -> Self {
        Self {
            terms: self.terms.iter().map(|(i, c)| (*i, c.conj())).collect(),
            constant: self.constant.conj(),
        }
    }

    pub fn re(&self) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .map(|(i, c)| (*i, Complex64::new(c.re, 0.0)))
                .collect(),
            constant: Complex64::new(self.constant.re, 0.0),
        }
    }

    pub fn im(&self) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .map(|(i, c)| (*i, Complex64::new(c.im, 0.0)))
                .collect(),
            constant: Complex64::new(self.constant.im, 0.0),
        }
    }

    pub fn scale(&self, s: impl Into<Complex64>) -> Self {
        let s = s.into();
        Self {
            terms: self.terms.iter().map(|(i, c)| (*i, c * s)).collect(),
            constant: self.constant * s,
        }
    }

    /// Merge duplicate coordinates, drop exact zeros and sort by coordinate.
    pub fn compact(mut self) -> Self {
        self.terms.sort_by_key(|(i, _)| *i);
        let mut merged: Vec<(usize, Complex64)> = Vec::with_capacity(self.terms.len());
        for (i, c) in self.terms {
            match merged.last_mut() {
                Some((j, acc)) if *j == i => *acc += c,
                _ => merged.push((i, c)),
            }
        }
        merged.retain(|(_, c)| c.re != 0.0 || c.im != 0.0);
        self.terms = merged;
        self
    }

    pub fn max_coord(&self) -> Option<usize> {
        self.terms.iter().map(|(i, _)| *i).max()
    }

    pub fn eval(&self, x: &[f64]) -> Complex64 {
        self.terms
            .iter()
            .fold(self.constant, |acc, (i, c)| acc + c * x[*i])
    }

    /// Euclidean norm of the coefficient vector (constant excluded).
    pub fn coeff_norm(&self) -> f64 {
        let compact = self.clone().compact();
        compact.terms.iter().map(|(_, c)| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `Σ a_i · e_i` for constant complex weights.
    pub fn linear_combination<'a, I>(items: I) -> Self
    where
        I: IntoIterator<Item = (Complex64, &'a Affine)>,
    {
        let mut out = Affine::zero();
        for (a, e) in items {
            if a == Complex64::new(0.0, 0.0) {
                continue;
            }
            out.terms.extend(e.terms.iter().map(|(i, c)| (*i, c * a)));
            out.constant += e.constant * a;
        }
        out.compact()
    }
}

impl From<f64> for Affine {
    fn from(c: f64) -> Self {
        Affine::constant(c)
    }
}

impl From<Complex64> for Affine {
    fn from(c: Complex64) -> Self {
        Affine::constant(c)
    }
}

impl AddAssign<&Affine> for Affine {
    fn add_assign(&mut self, rhs: &Affine) {
        self.terms.extend_from_slice(&rhs.terms);
        self.constant += rhs.constant;
    }
}

impl SubAssign<&Affine> for Affine {
    fn sub_assign(&mut self, rhs: &Affine) {
        self.terms.extend(rhs.terms.iter().map(|(i, c)| (*i, -c)));
        self.constant -= rhs.constant;
    }
}

impl Add for Affine {
    type Output = Affine;
    fn add(mut self, rhs: Affine) -> Affine {
        self += &rhs;
        self
    }
}

impl Add<&Affine> for Affine {
    type Output = Affine;
    fn add(mut self, rhs: &Affine) -> Affine {
        self += rhs;
        self
    }
}

impl Sub for Affine {
    type Output = Affine;
    fn sub(mut self, rhs: Affine) -> Affine {
        self -= &rhs;
        self
    }
}

impl Sub<&Affine> for Affine {
    type Output = Affine;
    fn sub(mut self, rhs: &Affine) -> Affine {
        self -= rhs;
        self
    }
}

impl Add<f64> for Affine {
    type Output = Affine;
    fn add(mut self, rhs: f64) -> Affine {
        self.constant += rhs;
        self
    }
}

impl Sub<f64> for Affine {
    type Output = Affine;
    fn sub(mut self, rhs: f64) -> Affine {
        self.constant -= rhs;
        self
    }
}

impl Neg for Affine {
    type Output = Affine;
    fn neg(self) -> Affine {
        self.scale(-1.0)
    }
}

impl Mul<f64> for Affine {
    type Output = Affine;
    fn mul(self, rhs: f64) -> Affine {
        self.scale(rhs)
    }
}

impl Mul<Complex64> for Affine {
    type Output = Affine;
    fn mul(self, rhs: Complex64) -> Affine {
        self.scale(rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn conj_of_complex_coordinate_pair() {
        // z = x0 + j x1
        let z = Affine::coord(0) + Affine::term(1, c(0.0, 1.0));
        let x = [2.0, -3.0];
        assert_eq!(z.eval(&x), c(2.0, -3.0));
        assert_eq!(z.conj().eval(&x), c(2.0, 3.0));
        assert_eq!(z.re().eval(&x), c(2.0, 0.0));
        assert_eq!(z.im().eval(&x), c(-3.0, 0.0));
    }

    #[test]
    fn compact_merges_and_drops() {
        let e = Affine::term(3, 1.0) + Affine::term(1, 2.0) + Affine::term(3, -1.0);
        let e = e.compact();
        assert_eq!(e.terms(), &[(1, c(2.0, 0.0))]);
    }
}
