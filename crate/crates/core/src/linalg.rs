//! Dense complex helpers shared by the scheme modules.

use irscr_conic::Affine;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// One draw from CN(0, var): real and imaginary parts each N(0, var/2).
pub fn cn<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c(s * re, s * im)
}

pub fn cn_vec<R: Rng + ?Sized>(rng: &mut R, n: usize, var: f64) -> CVec {
    CVec::from_fn(n, |_, _| cn(rng, var))
}

/// Column-major fill, so `vec(M)` follows the draw order.
pub fn cn_mat<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, var: f64) -> CMat {
    let mut m = CMat::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            m[(i, j)] = cn(rng, var);
        }
    }
    m
}

/// Unit-modulus vector with phases uniform on [0, 2π).
pub fn random_phases<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CVec {
    CVec::from_fn(n, |_, _| {
        let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        Complex64::from_polar(1.0, th)
    })
}

/// `(A + Aᴴ)/2`.
pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()).map(|z| z * 0.5)
}

pub fn max_skew(a: &CMat) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            m = m.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    m
}

/// Eigenvalues (ascending) and eigenvectors of a Hermitian matrix.
pub fn eigh(a: &CMat) -> (Vec<f64>, CMat) {
    let eig = SymmetricEigen::new(hermitian_part(a));
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = CMat::zeros(a.nrows(), a.ncols());
    for (new, &old) in idx.iter().enumerate() {
        vecs.set_column(new, &eig.eigenvectors.column(old));
    }
    (vals, vecs)
}

pub fn frob2(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

pub fn norm2(v: &CVec) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Row-major copy, the layout used by [`irscr_conic::Var::trace_product`].
pub fn row_major(a: &CMat) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(a.nrows() * a.ncols());
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            out.push(a[(i, j)]);
        }
    }
    out
}

/// `Σ_i conj(h_i)·x_i` for expressions `x`, i.e. `hᴴx`.
pub fn inner(h: &CVec, x: &[Affine]) -> Affine {
    Affine::linear_combination(h.iter().zip(x).map(|(hi, xi)| (hi.conj(), xi)))
}

/// `Σ_i a_i·x_i`.
pub fn combine(a: &[Complex64], x: &[Affine]) -> Affine {
    Affine::linear_combination(a.iter().zip(x).map(|(ai, xi)| (*ai, xi)))
}

/// `[φ; 1]`.
pub fn extend_phase(phi: &CVec) -> CVec {
    let n = phi.len();
    CVec::from_fn(n + 1, |i, _| if i < n { phi[i] } else { ONE })
}

/// Project every entry onto the unit circle (zeros map to 1).
pub fn project_unit(phi: &CVec) -> CVec {
    phi.map(|z| {
        let r = z.norm();
        if r > 0.0 {
            z / r
        } else {
            ONE
        }
    })
}

pub fn max_modulus_error(phi: &CVec) -> f64 {
    phi.iter().map(|z| (z.norm() - 1.0).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn eigh_sorts_ascending() {
        let a = CMat::from_diagonal(&CVec::from_vec(vec![c(3.0, 0.0), c(1.0, 0.0), c(2.0, 0.0)]));
        let (vals, vecs) = eigh(&a);
        assert_eq!(vals, vec![1.0, 2.0, 3.0]);
        assert!((vecs[(0, 2)].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cn_has_requested_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 200_000;
        let v: f64 = (0..n).map(|_| cn(&mut rng, 2.0).norm_sqr()).sum::<f64>() / n as f64;
        assert!((v - 2.0).abs() < 0.03);
    }
}
